#include "tfnet/nn/optim.hpp"

#include <cmath>

namespace tfnet::nn {

template <typename T>
Adam<T>::Adam(ParameterList<T> params, AdamConfig cfg) : cfg_(cfg) {
  for (auto* p : params)
    if (p->trainable) params_.push_back(p);
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T step_size = static_cast<T>(cfg_.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(cfg_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    if (p->grad.empty()) continue;
    T* w = p->value.data();
    const T* gr = p->grad.data();
    T* m = m_[k].data();
    T* v = v_[k].data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * gr[i];
      v[i] = b2 * v[i] + (T(1) - b2) * gr[i] * gr[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

template <typename T>
double Adam<T>::grad_norm_sq() const {
  double acc = 0.0;
  for (auto* p : params_)
    for (std::size_t i = 0; i < p->grad.size(); ++i) acc += double(p->grad[i]) * double(p->grad[i]);
  return acc;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace tfnet::nn
