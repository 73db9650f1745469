#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tfnet/nn/graph.hpp"

namespace tfnet::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // name of the tensor with the largest error
  std::size_t evaluations = 0;
};

struct GradCheckOptions {
  double step = 1e-6;
  std::uint64_t seed = 1;
  Mode mode = Mode::kTrain;
  /// Cap on perturbed entries per tensor (evenly strided); 0 checks all.
  std::size_t max_entries = 0;
  /// Tensors whose gradients are all below zero_floor times the largest
  /// gradient in the check are measured against that floor instead of
  /// their own (vanishing) scale.
  double zero_floor = 1e-7;
};

/// Builds the function under test on a fresh graph. `inputs` are bound as
/// gradient-requiring leaves in the order given to grad_check.
using GradCheckFn = std::function<Var(Graph<double>&, std::span<const Var> inputs)>;

/// Central-difference check of d<r, f(inputs, params)>/d(inputs, params) for a
/// fixed random projection r. Per tensor the error is
/// max|analytic - numeric| / max(max|analytic|, max|numeric|, floor), see
/// GradCheckOptions::zero_floor.
/// Non-trainable parameters (running statistics) are restored after every
/// evaluation so each one sees the same state.
GradCheckResult grad_check(const GradCheckFn& fn, std::vector<Tensor<double>> inputs,
                           const ParameterList<double>& params, const GradCheckOptions& opt = {});

}  // namespace tfnet::nn
