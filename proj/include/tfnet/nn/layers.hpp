#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tfnet/core/rng.hpp"
#include "tfnet/nn/ops.hpp"

namespace tfnet::nn {

/// Per-stream temporal context: conv histories and recurrent states, handed
/// out to layers in call order. A state built by one network cannot be fed
/// to another: the first slot whose shape disagrees raises ErrorKind::kState.
template <typename T>
class StreamState {
 public:
  /// Must be called before each forward pass over the owning network.
  void rewind() { cursor_ = 0; }

  Tensor<T>& slot(const Shape& shape) {
    if (cursor_ == slots_.size()) {
      slots_.emplace_back(shape);
    } else if (slots_[cursor_].shape() != shape) {
      fail(ErrorKind::kState, "stream state does not match the network: slot " +
                                  std::to_string(cursor_) + " holds " +
                                  to_string(slots_[cursor_].shape()) + ", expected " +
                                  to_string(shape));
    }
    return slots_[cursor_++];
  }

  /// Verifies every slot was consumed by the last pass.
  void finish() const {
    require(cursor_ == slots_.size(), ErrorKind::kState,
            "stream state has more slots than the network consumed");
  }

  bool empty() const { return slots_.empty(); }
  std::size_t size() const { return slots_.size(); }

 private:
  std::vector<Tensor<T>> slots_;
  std::size_t cursor_ = 0;
};

/// Prepends the stored `frames` of history to x along time and stores the
/// trailing `frames` of the result back, so a valid-time op applied to the
/// returned var is causal and resumable across chunks.
template <typename T>
Var with_history(Graph<T>& g, Var x, int frames, StreamState<T>& state) {
  if (frames == 0) return x;
  const Shape s = g.value(x).shape();
  Tensor<T>& hist = state.slot(Shape{s[0], frames, s[2], s[3]});
  Var joined = concat_time(g, g.constant(hist), x);
  const auto& v = g.value(joined);
  const int total = v.dim(1);
  const std::size_t frame = static_cast<std::size_t>(s[2]) * s[3];
  for (int b = 0; b < s[0]; ++b)
    std::copy_n(v.data() + (static_cast<std::size_t>(b) * total + total - frames) * frame,
                frames * frame, hist.data() + static_cast<std::size_t>(b) * frames * frame);
  return joined;
}

template <typename T>
Tensor<T> uniform_tensor(const Shape& shape, double bound, Rng& rng) {
  Tensor<T> t(shape);
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
std::size_t count_trainable(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params)
    if (p->trainable) n += p->value.size();
  return n;
}

/// Causal 2-D conv (or frequency-transposed conv) with its own history slot.
/// Without a bias (use ahead of batch norm) the bias is a fixed zero and is
/// not collected.
template <typename T>
class Conv2d {
 public:
  Conv2d(const std::string& name, int cin, int cout, Conv2dSpec spec, bool transposed, Rng& rng,
         bool with_bias = true)
      : spec_(spec), transposed_(transposed), with_bias_(with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * spec.kt * spec.kf);
    weight = Parameter<T>(name + ".weight",
                          uniform_tensor<T>(Shape{spec.kt, spec.kf, cin, cout}, bound, rng));
    bias = with_bias ? Parameter<T>(name + ".bias", uniform_tensor<T>(Shape{1, 1, 1, cout}, bound, rng))
                     : Parameter<T>(name + ".bias", Tensor<T>(Shape{1, 1, 1, cout}), false);
  }

  Var forward(Graph<T>& g, Var x, StreamState<T>& state) {
    Var h = with_history(g, x, spec_.history(), state);
    return transposed_ ? deconv2d(g, h, g.param(weight), g.param(bias), spec_)
                       : conv2d(g, h, g.param(weight), g.param(bias), spec_);
  }

  void collect(ParameterList<T>& out) {
    out.push_back(&weight);
    if (with_bias_) out.push_back(&bias);
  }

  const Conv2dSpec& spec() const { return spec_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  Conv2dSpec spec_;
  bool transposed_;
  bool with_bias_;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm(const std::string& name, int channels)
      : gain(name + ".gain", Tensor<T>(Shape{1, 1, 1, channels}, T(1))),
        bias(name + ".bias", Tensor<T>(Shape{1, 1, 1, channels})),
        running_mean(name + ".running_mean", Tensor<T>(Shape{1, 1, 1, channels}), false),
        running_var(name + ".running_var", Tensor<T>(Shape{1, 1, 1, channels}, T(1)), false) {}

  Var forward(Graph<T>& g, Var x) {
    return batch_norm(g, x, g.param(gain), g.param(bias), running_mean.value, running_var.value,
                      momentum, eps);
  }

  void collect(ParameterList<T>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
    out.push_back(&running_mean);
    out.push_back(&running_var);
  }

  Parameter<T> gain, bias, running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

template <typename T>
class PRelu {
 public:
  PRelu(const std::string& name, int channels)
      : slopes(name + ".slopes", Tensor<T>(Shape{1, 1, 1, channels}, T(0.25))) {}

  Var forward(Graph<T>& g, Var x) { return prelu(g, x, g.param(slopes)); }
  void collect(ParameterList<T>& out) { out.push_back(&slopes); }

  Parameter<T> slopes;
};

template <typename T>
class Pointwise {
 public:
  Pointwise(const std::string& name, int cin, int cout, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin));
    weight = Parameter<T>(name + ".weight", uniform_tensor<T>(Shape{1, 1, cin, cout}, bound, rng));
    bias = Parameter<T>(name + ".bias", uniform_tensor<T>(Shape{1, 1, 1, cout}, bound, rng));
  }

  Var forward(Graph<T>& g, Var x) { return conv1x1(g, x, g.param(weight), g.param(bias)); }

  void collect(ParameterList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  int in_channels() const { return weight.value.dim(2); }
  int out_channels() const { return weight.value.dim(3); }

  Parameter<T> weight;
  Parameter<T> bias;
};

template <typename T>
class ChannelNorm {
 public:
  ChannelNorm(const std::string& name, int channels)
      : gain(name + ".gain", Tensor<T>(Shape{1, 1, 1, channels}, T(1))),
        bias(name + ".bias", Tensor<T>(Shape{1, 1, 1, channels})) {}

  Var forward(Graph<T>& g, Var x) { return channel_norm(g, x, g.param(gain), g.param(bias), eps); }

  void collect(ParameterList<T>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }

  Parameter<T> gain, bias;
  T eps = T(1e-5);
};

template <typename T>
class DepthwiseTime {
 public:
  DepthwiseTime(const std::string& name, int channels, int taps, int dilation, Rng& rng)
      : dilation_(dilation) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(taps));
    weight = Parameter<T>(name + ".weight", uniform_tensor<T>(Shape{taps, 1, 1, channels}, bound, rng));
    bias = Parameter<T>(name + ".bias", uniform_tensor<T>(Shape{1, 1, 1, channels}, bound, rng));
  }

  Var forward(Graph<T>& g, Var x, StreamState<T>& state) {
    Var h = with_history(g, x, history(), state);
    return depthwise_conv_time(g, h, g.param(weight), g.param(bias), dilation_);
  }

  int history() const { return (weight.value.dim(0) - 1) * dilation_; }

  void collect(ParameterList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  int dilation_;
};

/// GRU whose hidden state persists in the stream state between chunks.
template <typename T>
class Gru {
 public:
  Gru(const std::string& name, int input, int hidden, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    w_input = Parameter<T>(name + ".w_input", uniform_tensor<T>(Shape{1, 1, input, 3 * hidden}, bound, rng));
    w_hidden =
        Parameter<T>(name + ".w_hidden", uniform_tensor<T>(Shape{1, 1, hidden, 3 * hidden}, bound, rng));
    bias = Parameter<T>(name + ".bias", uniform_tensor<T>(Shape{1, 1, 1, 3 * hidden}, bound, rng));
  }

  Var forward(Graph<T>& g, Var x, StreamState<T>& state) {
    const int batch = g.value(x).dim(0);
    Tensor<T>& h = state.slot(Shape{batch, 1, 1, hidden()});
    auto out = gru(g, x, h, g.param(w_input), g.param(w_hidden), g.param(bias));
    h = std::move(out.last_hidden);
    return out.output;
  }

  int hidden() const { return w_hidden.value.dim(2); }

  void collect(ParameterList<T>& out) {
    out.push_back(&w_input);
    out.push_back(&w_hidden);
    out.push_back(&bias);
  }

  Parameter<T> w_input;
  Parameter<T> w_hidden;
  Parameter<T> bias;
};

}  // namespace tfnet::nn
