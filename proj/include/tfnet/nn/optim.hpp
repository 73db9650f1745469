#pragma once

#include <cstdint>
#include <vector>

#include "tfnet/nn/graph.hpp"

namespace tfnet::nn {

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over the trainable members of a parameter list. Moments are kept in
/// the working precision and can be exported for checkpoint resume.
template <typename T>
class Adam {
 public:
  Adam(ParameterList<T> params, AdamConfig cfg);

  void zero_grad();
  void step();

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  /// First and second moments, one entry per trainable parameter.
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const ParameterList<T>& parameters() const { return params_; }
  void set_steps(std::int64_t n) { steps_ = n; }

  /// Sum of squared gradients over all trainable parameters.
  double grad_norm_sq() const;

 private:
  ParameterList<T> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::int64_t steps_ = 0;
};

}  // namespace tfnet::nn
