#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tfnet/core/error.hpp"

namespace tfnet {

/// Every activation in the network is a 4-D tensor laid out as
/// [batch, time, frequency, channel], channel fastest.
using Shape = std::array<int, 4>;

inline std::size_t numel(const Shape& s) {
  return static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3];
}

std::string to_string(const Shape& s);

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(numel(shape), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    require(data_.size() == numel(shape_), ErrorKind::kShape,
            "tensor data size does not match shape " + to_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  int dim(int i) const noexcept { return shape_[i]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t offset(int b, int t, int f, int c) const noexcept {
    return ((static_cast<std::size_t>(b) * shape_[1] + t) * shape_[2] + f) * shape_[3] + c;
  }
  T& operator()(int b, int t, int f, int c) noexcept { return data_[offset(b, t, f, c)]; }
  const T& operator()(int b, int t, int f, int c) const noexcept {
    return data_[offset(b, t, f, c)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

inline void require_shape(const Shape& got, const Shape& want, const std::string& what) {
  if (got != want) {
    fail(ErrorKind::kShape, what + ": expected " + to_string(want) + ", got " + to_string(got));
  }
}

}  // namespace tfnet
