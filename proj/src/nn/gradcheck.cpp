#include "tfnet/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tfnet/core/rng.hpp"
#include "tfnet/nn/ops.hpp"

namespace tfnet::nn {
namespace {

struct Snapshot {
  std::vector<std::pair<Parameter<double>*, Tensor<double>>> buffers;

  explicit Snapshot(const ParameterList<double>& params) {
    for (auto* p : params)
      if (!p->trainable) buffers.emplace_back(p, p->value);
  }
  void restore() const {
    for (const auto& [p, v] : buffers) p->value = v;
  }
};

}  // namespace

GradCheckResult grad_check(const GradCheckFn& fn, std::vector<Tensor<double>> inputs,
                           const ParameterList<double>& params, const GradCheckOptions& opt) {
  const Snapshot snap(params);
  Tensor<double> projection;

  auto evaluate = [&](bool with_grad) {
    Graph<double> g(opt.mode, with_grad);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) vars.push_back(g.input(t, true));
    Var out = fn(g, vars);
    if (projection.empty()) {
      Rng rng(opt.seed);
      projection = Tensor<double>(g.value(out).shape());
      for (auto& v : projection.vec()) v = rng.uniform(-1.0, 1.0);
    }
    Var loss = weighted_sum(g, out, projection);
    const double value = g.value(loss)[0];
    std::vector<Tensor<double>> grads;
    if (with_grad) {
      for (auto* p : params)
        if (p->trainable) p->zero_grad();
      g.backward(loss);
      for (std::size_t i = 0; i < vars.size(); ++i)
        grads.push_back(g.has_grad(vars[i]) ? g.grad(vars[i]) : Tensor<double>(inputs[i].shape()));
    }
    snap.restore();
    return std::make_pair(value, std::move(grads));
  };

  GradCheckResult result;
  auto [base, input_grads] = evaluate(true);
  (void)base;

  struct Stats {
    std::string name;
    double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
  };
  std::vector<Stats> stats;

  auto check_tensor = [&](Tensor<double>& value, const Tensor<double>& analytic,
                          const std::string& name) {
    const std::size_t n = value.size();
    const std::size_t stride =
        opt.max_entries == 0 || n <= opt.max_entries ? 1 : (n + opt.max_entries - 1) / opt.max_entries;
    Stats s{name};
    for (std::size_t i = 0; i < n; i += stride) {
      const double keep = value[i];
      value[i] = keep + opt.step;
      const double up = evaluate(false).first;
      value[i] = keep - opt.step;
      const double down = evaluate(false).first;
      value[i] = keep;
      result.evaluations += 2;
      const double numeric = (up - down) / (2.0 * opt.step);
      s.max_diff = std::max(s.max_diff, std::abs(numeric - analytic[i]));
      s.max_a = std::max(s.max_a, std::abs(analytic[i]));
      s.max_n = std::max(s.max_n, std::abs(numeric));
    }
    stats.push_back(s);
  };

  for (std::size_t i = 0; i < inputs.size(); ++i)
    check_tensor(inputs[i], input_grads[i], "input" + std::to_string(i));
  std::vector<Tensor<double>> param_grads;
  for (auto* p : params)
    if (p->trainable) param_grads.push_back(p->grad);
  std::size_t k = 0;
  for (auto* p : params)
    if (p->trainable) check_tensor(p->value, param_grads[k++], p->name);

  double global = 0.0;
  for (const auto& s : stats) global = std::max(global, s.max_a);
  for (const auto& s : stats) {
    const double rel = s.max_diff / std::max({s.max_a, s.max_n, opt.zero_floor * global, 1e-12});
    if (result.worst.empty() || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = s.name;
    }
  }
  return result;
}

}  // namespace tfnet::nn
