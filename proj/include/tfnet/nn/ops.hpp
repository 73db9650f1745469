#pragma once

#include <span>

#include "tfnet/nn/graph.hpp"

namespace tfnet::nn {

// Differentiable tensor operations on [batch, time, frequency, channel]
// tensors. Temporal convolutions here are "valid" along time: an input of
// Tin frames yields Tin - (kt - 1) * dilation frames. Causal left context is
// supplied by prepending history frames (see StreamState / with_history).

template <typename T> Var add(Graph<T>& g, Var a, Var b);
template <typename T> Var sub(Graph<T>& g, Var a, Var b);
template <typename T> Var scale(Graph<T>& g, Var a, T factor);

template <typename T> Var concat_time(Graph<T>& g, Var a, Var b);
template <typename T> Var slice_time(Graph<T>& g, Var x, int begin, int end);
template <typename T> Var concat_channels(Graph<T>& g, std::span<const Var> parts);
template <typename T> Var slice_channels(Graph<T>& g, Var x, int begin, int end);
template <typename T> Var slice_freq(Graph<T>& g, Var x, int begin, int end);
/// Appends `extra` zero bins on the high-frequency side.
template <typename T> Var pad_freq(Graph<T>& g, Var x, int extra);

struct Conv2dSpec {
  int kt = 1;          // temporal taps
  int kf = 1;          // frequency taps
  int stride_f = 1;    // frequency stride (time stride is always 1)
  int dilation_t = 1;  // temporal dilation

  int history() const { return (kt - 1) * dilation_t; }
};

/// Conv over (time, frequency) with weights [kt, kf, Cin, Cout] and bias
/// [1, 1, 1, Cout]. Frequency output size is ceil(F / stride); missing bins
/// at the high-frequency edge read as zero.
template <typename T> Var conv2d(Graph<T>& g, Var x, Var w, Var b, const Conv2dSpec& spec);

/// Transposed conv along frequency (F_out = F_in * stride, high edge
/// cropped), ordinary valid conv along time. Weights [kt, kf, Cin, Cout].
template <typename T> Var deconv2d(Graph<T>& g, Var x, Var w, Var b, const Conv2dSpec& spec);

/// Per-channel temporal conv; weights [kt, 1, 1, C], bias [1, 1, 1, C].
template <typename T> Var depthwise_conv_time(Graph<T>& g, Var x, Var w, Var b, int dilation);

/// Channel remap; weights [1, 1, Cin, Cout], bias [1, 1, 1, Cout].
template <typename T> Var conv1x1(Graph<T>& g, Var x, Var w, Var b);

/// Per-channel slopes [1, 1, 1, C].
template <typename T> Var prelu(Graph<T>& g, Var x, Var slopes);

/// Normalises each (b, t, f) position across channels, then scales/shifts.
template <typename T> Var channel_norm(Graph<T>& g, Var x, Var gain, Var bias, T eps);

/// Per-channel normalisation over batch x time x frequency. In train mode the
/// running statistics are updated in place with `momentum`.
template <typename T>
Var batch_norm(Graph<T>& g, Var x, Var gain, Var bias, Tensor<T>& running_mean,
               Tensor<T>& running_var, T momentum, T eps);

template <typename T>
struct GruOutput {
  Var output;              // [B, T, 1, H]
  Tensor<T> last_hidden;   // [B, 1, 1, H]
};

/// GRU over time with z/r/n gate order:
///   z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br)
///   n = tanh(x Wn + (r * h) Un + bn), h' = (1 - z) n + z h.
/// w_input [1, 1, Cin, 3H], w_hidden [1, 1, H, 3H], bias [1, 1, 1, 3H];
/// h0 is treated as a constant.
template <typename T>
GruOutput<T> gru(Graph<T>& g, Var x, const Tensor<T>& h0, Var w_input, Var w_hidden, Var bias);

/// Forward value is `replacement`; the backward pass copies the gradient to x.
template <typename T> Var straight_through(Graph<T>& g, Var x, Tensor<T> replacement);

/// x + mask[b, t] * w[c] with a constant mask [B, T, 1, 1].
template <typename T> Var mask_add(Graph<T>& g, Var x, const Tensor<T>& mask, Var w);
/// x * mask[b, t] with a constant mask [B, T, 1, 1].
template <typename T> Var frame_mask(Graph<T>& g, Var x, const Tensor<T>& mask);

/// mean((a - b)^2) as a [1, 1, 1, 1] tensor.
template <typename T> Var mse(Graph<T>& g, Var a, Var b);
/// sum(x * weights) as a [1, 1, 1, 1] tensor.
template <typename T> Var weighted_sum(Graph<T>& g, Var x, const Tensor<T>& weights);

}  // namespace tfnet::nn
