#pragma once

#include "tfnet/dsp/stft.hpp"
#include "tfnet/nn/graph.hpp"

namespace tfnet::nn {

/// Waveform [B, L, 1, 1] -> spectrum [B, T, bins, 2] with T = frame_count(L).
template <typename T>
Var stft(Graph<T>& g, Var wave, const dsp::FrameTransform<T>& transform);

/// Spectrum [B, T, bins, 2] -> waveform [B, (T - 1) * hop + window, 1, 1],
/// least-squares overlap-add (same arithmetic as dsp::synthesize).
template <typename T>
Var istft(Graph<T>& g, Var spectrum, const dsp::FrameTransform<T>& transform);

/// z -> z * (|z|^2 + eps)^((p - 1) / 2). With eps = 0 this is the exact
/// power-law compression; a small eps keeps the gradient bounded near 0.
template <typename T>
Var power_compress(Graph<T>& g, Var spectrum, T p, T eps);

/// z -> |z|^(1/p) * z / |z| (exact inverse of power_compress with eps = 0).
template <typename T>
Var power_expand(Graph<T>& g, Var spectrum, T p);

}  // namespace tfnet::nn
