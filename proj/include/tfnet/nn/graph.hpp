#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "tfnet/core/tensor.hpp"

namespace tfnet::nn {

/// A named, persistent tensor. Trainable parameters receive gradients;
/// buffers (batch-norm running statistics, codebook accumulators) do not but
/// are still serialised with the model.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    else grad.fill(T(0));
  }
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

/// Handle to a value recorded on a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Mode { kTrain, kEval };

/// Operation tape for reverse-mode differentiation. Every op appends a node
/// holding its output; when any input needs a gradient and recording is on,
/// the op also stores a closure that pushes the output gradient back to its
/// inputs. backward() replays the closures in reverse order.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& out_grad)>;

  explicit Graph(Mode mode = Mode::kTrain, bool record = true) : mode_(mode), record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const { return mode_; }
  bool training() const { return mode_ == Mode::kTrain; }
  bool recording() const { return record_; }

  Var constant(Tensor<T> value) { return push(std::move(value), nullptr, false); }
  Var input(Tensor<T> value, bool requires_grad) {
    return push(std::move(value), nullptr, requires_grad && record_);
  }
  /// Binds a persistent parameter; gradients accumulate into p.grad.
  Var param(Parameter<T>& p) { return push(Tensor<T>(), &p, p.trainable && record_); }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.param ? n.param->value : n.value;
  }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient buffer of v, allocated as zeros on first access.
  Tensor<T>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    Tensor<T>& g = n.param ? n.param->grad : n.grad;
    const Shape& s = n.param ? n.param->value.shape() : n.value.shape();
    if (g.shape() != s || g.empty()) g = Tensor<T>(s);
    return g;
  }
  bool has_grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.param ? !n.param->grad.empty() : !n.grad.empty();
  }

  /// Appends an op output. `fn` is kept only when an input requires grad.
  Var record(Tensor<T> out, std::initializer_list<Var> inputs, Backward fn) {
    bool req = false;
    for (Var v : inputs) req = req || requires_grad(v);
    return record_any(std::move(out), req, std::move(fn));
  }
  Var record_any(Tensor<T> out, bool needs_grad, Backward fn) {
    const bool keep = needs_grad && record_;
    Var v = push(std::move(out), nullptr, keep);
    if (keep) nodes_.back().backward = std::move(fn);
    return v;
  }

  /// Back-propagates from a scalar output (seed 1).
  void backward(Var out) {
    require(numel(value(out).shape()) == 1, ErrorKind::kShape,
            "backward() without a seed needs a scalar output");
    Tensor<T> seed(value(out).shape(), T(1));
    backward(out, seed);
  }

  void backward(Var out, const Tensor<T>& seed) {
    require_shape(seed.shape(), value(out).shape(), "backward seed");
    Tensor<T>& g = grad(out);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (int id = out.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  /// Parameters bound with param(), in binding order (duplicates kept).
  std::vector<const Parameter<T>*> bound_parameters() const {
    std::vector<const Parameter<T>*> out;
    for (const auto& n : nodes_)
      if (n.param) out.push_back(n.param);
    return out;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Tensor<T> value, Parameter<T>* p, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.param = p;
    n.requires_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Mode mode_;
  bool record_;
  std::deque<Node> nodes_;
};

/// acc += delta, elementwise.
template <typename T>
inline void accumulate(Tensor<T>& acc, const Tensor<T>& delta) {
  T* a = acc.data();
  const T* d = delta.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += d[i];
}

}  // namespace tfnet::nn
