#pragma once

#include <optional>
#include <vector>

#include "tfnet/dsp/stft.hpp"
#include "tfnet/nn/graph.hpp"

namespace tfnet::train {

using nn::Graph;
using nn::Var;

struct LossConfig {
  double alpha = 0.25;        // commitment weight
  double power = 0.3;         // compression exponent
  double aux_weight = 1.0;    // clean-decoder weight (all-in-one)
  double compress_eps = 1e-10;

  void validate() const;
};

/// mse(C(stft(istft(decoded))), C(stft(target))) with C the eps-regularised
/// power-law compression. decoded: [B, T, bins, 2]; target: [B, L, 1, 1].
template <typename T>
Var recon_loss(Graph<T>& g, Var decoded, Var target, const dsp::FrameTransform<T>& transform,
               const LossConfig& cfg);

template <typename T>
struct LossTerms {
  Var total;
  Var recon;
  Var commit;
  std::optional<Var> aux;
};

/// recon + alpha * commit (+ aux_weight * aux when aux is given).
template <typename T>
LossTerms<T> total_loss(Graph<T>& g, Var recon, Var commit, std::optional<Var> aux,
                        const LossConfig& cfg);

/// Mean squared difference of power-law compressed spectra of two signals
/// over their common length (no gradient; for reports).
double spectral_distance(const std::vector<double>& a, const std::vector<double>& b,
                         const dsp::StftConfig& stft, double power = 0.3);

}  // namespace tfnet::train
