#pragma once

#include <string>
#include <vector>

#include "tfnet/nn/gradcheck.hpp"

namespace tfnet::train {

struct GradCaseResult {
  std::string scope;
  std::string name;
  nn::GradCheckResult result;
};

/// ops, spectral, layers, tcm, ggru, stack, codec, loss, all.
const std::vector<std::string>& gradcheck_scopes();

/// Finite-difference checks (float64) of every differentiable op and the
/// composite blocks in a scope. Unknown scopes raise ErrorKind::kUsage.
std::vector<GradCaseResult> run_gradcheck(const std::string& scope);

}  // namespace tfnet::train
