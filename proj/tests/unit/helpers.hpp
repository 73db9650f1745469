#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tfnet/core/error.hpp"
#include "tfnet/core/rng.hpp"
#include "tfnet/core/tensor.hpp"

namespace testing {

template <typename T = double>
tfnet::Tensor<T> random_tensor(const tfnet::Shape& s, std::uint64_t seed, double scale = 1.0) {
  tfnet::Rng rng(seed);
  tfnet::Tensor<T> t(s);
  for (auto& v : t.vec()) v = static_cast<T>(scale * rng.normal());
  return t;
}

inline std::vector<double> random_signal(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  tfnet::Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = scale * rng.normal();
  return x;
}

template <typename T>
bool bit_equal(const tfnet::Tensor<T>& a, const tfnet::Tensor<T>& b) {
  return a.shape() == b.shape() && a.vec() == b.vec();
}

/// Error kind raised by f, or nothing.
template <typename F>
std::optional<tfnet::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const tfnet::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("tfnet_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
