#include "tfnet/temporal/temporal.hpp"

#include <variant>

namespace tfnet::temporal {

void TemporalConfig::validate() const {
  require(channels > 0 && tcm_hidden > 0, ErrorKind::kConfig, "temporal widths must be positive");
  require(tcm_kernel >= 1, ErrorKind::kConfig, "TCM kernel must be at least 1");
  require(!dilations.empty(), ErrorKind::kConfig, "a TCM group needs at least one dilation");
  for (int d : dilations) require(d >= 1, ErrorKind::kConfig, "TCM dilations must be >= 1");
  require(gru_groups >= 1 && channels % gru_groups == 0, ErrorKind::kConfig,
          "channels (" + std::to_string(channels) + ") not divisible by gru_groups (" +
              std::to_string(gru_groups) + ")");
}

void validate_layout(const std::string& layout) {
  require(!layout.empty(), ErrorKind::kConfig, "temporal stack layout is empty");
  for (char c : layout)
    require(c == 'T' || c == 'G', ErrorKind::kConfig,
            "temporal stack layout '" + layout + "' may only contain 'T' and 'G'");
}

// --- TCM -------------------------------------------------------------------

template <typename T>
TcmBlock<T>::TcmBlock(const std::string& name, int channels, int hidden, int kernel, int dilation,
                      Rng& rng)
    : conv_in_(name + ".conv_in", channels, hidden, rng),
      act1_(name + ".act1", hidden),
      norm1_(name + ".norm1", hidden),
      depthwise_(name + ".depthwise", hidden, kernel, dilation, rng),
      act2_(name + ".act2", hidden),
      norm2_(name + ".norm2", hidden),
      conv_out_(name + ".conv_out", hidden, channels, rng) {}

template <typename T>
Var TcmBlock<T>::forward(Graph<T>& g, Var x, StreamState<T>& state) {
  Var h = conv_in_.forward(g, x);
  h = norm1_.forward(g, act1_.forward(g, h));
  h = depthwise_.forward(g, h, state);
  h = norm2_.forward(g, act2_.forward(g, h));
  h = conv_out_.forward(g, h);
  return nn::add(g, x, h);
}

template <typename T>
void TcmBlock<T>::zero_output() {
  conv_out_.weight.value.fill(T(0));
  conv_out_.bias.value.fill(T(0));
}

template <typename T>
void TcmBlock<T>::collect(ParameterList<T>& out) {
  conv_in_.collect(out);
  act1_.collect(out);
  norm1_.collect(out);
  depthwise_.collect(out);
  act2_.collect(out);
  norm2_.collect(out);
  conv_out_.collect(out);
}

template <typename T>
TcmGroup<T>::TcmGroup(const std::string& name, const TemporalConfig& cfg, Rng& rng) {
  cfg.validate();
  blocks_.reserve(cfg.dilations.size());
  for (std::size_t i = 0; i < cfg.dilations.size(); ++i)
    blocks_.emplace_back(name + ".block" + std::to_string(i), cfg.channels, cfg.tcm_hidden,
                         cfg.tcm_kernel, cfg.dilations[i], rng);
}

template <typename T>
Var TcmGroup<T>::forward(Graph<T>& g, Var x, StreamState<T>& state) {
  for (auto& b : blocks_) x = b.forward(g, x, state);
  return x;
}

template <typename T>
void TcmGroup<T>::zero_residual() {
  for (auto& b : blocks_) b.zero_output();
}

template <typename T>
void TcmGroup<T>::collect(ParameterList<T>& out) {
  for (auto& b : blocks_) b.collect(out);
}

template <typename T>
int TcmGroup<T>::receptive_field() const {
  int rf = 1;
  for (const auto& b : blocks_) rf += b.history();
  return rf;
}

// --- G-GRU -----------------------------------------------------------------

std::size_t ggru_parameter_count(int channels, int groups) {
  require(groups >= 1 && channels % groups == 0, ErrorKind::kConfig,
          "channels not divisible by groups");
  const std::size_t cg = static_cast<std::size_t>(channels / groups);
  return groups * 3 * (cg * cg + cg * cg + cg);
}

template <typename T>
GGruBlock<T>::GGruBlock(const std::string& name, int channels, int groups, Rng& rng)
    : channels_(channels) {
  require(groups >= 1 && channels % groups == 0, ErrorKind::kConfig,
          "G-GRU: channels (" + std::to_string(channels) + ") not divisible by groups (" +
              std::to_string(groups) + ")");
  const int cg = channels / groups;
  grus_.reserve(groups);
  for (int i = 0; i < groups; ++i) grus_.emplace_back(name + ".group" + std::to_string(i), cg, cg, rng);
}

template <typename T>
Var GGruBlock<T>::transform(Graph<T>& g, Var x, StreamState<T>& state) {
  require(g.value(x).dim(3) == channels_, ErrorKind::kShape, "G-GRU channel count mismatch");
  const int cg = channels_ / groups();
  if (groups() == 1) return grus_[0].forward(g, x, state);
  std::vector<Var> parts;
  parts.reserve(grus_.size());
  for (int i = 0; i < groups(); ++i)
    parts.push_back(grus_[i].forward(g, nn::slice_channels(g, x, i * cg, (i + 1) * cg), state));
  return nn::concat_channels<T>(g, parts);
}

template <typename T>
Var GGruBlock<T>::forward(Graph<T>& g, Var x, StreamState<T>& state) {
  return nn::add(g, x, transform(g, x, state));
}

template <typename T>
void GGruBlock<T>::zero_residual() {
  for (auto& gru : grus_) {
    gru.w_input.value.fill(T(0));
    gru.w_hidden.value.fill(T(0));
    gru.bias.value.fill(T(0));
  }
}

template <typename T>
void GGruBlock<T>::collect(ParameterList<T>& out) {
  for (auto& gru : grus_) gru.collect(out);
}

// --- stack -----------------------------------------------------------------

template <typename T>
struct TemporalStack<T>::Block {
  std::variant<TcmGroup<T>, GGruBlock<T>> impl;
};

template <typename T>
TemporalStack<T>::TemporalStack(const std::string& name, const std::string& layout,
                                const TemporalConfig& cfg, bool mask_inputs, Rng& rng)
    : layout_(layout) {
  validate_layout(layout);
  cfg.validate();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const std::string bname = name + "." + std::to_string(i) + (layout[i] == 'T' ? ".tcm" : ".ggru");
    if (layout[i] == 'T')
      blocks_.push_back(std::make_unique<Block>(Block{TcmGroup<T>(bname, cfg, rng)}));
    else
      blocks_.push_back(
          std::make_unique<Block>(Block{GGruBlock<T>(bname, cfg.channels, cfg.gru_groups, rng)}));
  }
  if (mask_inputs) {
    mask_weights_.reserve(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i)
      mask_weights_.emplace_back(name + "." + std::to_string(i) + ".mask",
                                 Tensor<T>(Shape{1, 1, 1, cfg.channels}));
  }
}

template <typename T>
TemporalStack<T>::TemporalStack(TemporalStack&&) noexcept = default;
template <typename T>
TemporalStack<T>& TemporalStack<T>::operator=(TemporalStack&&) noexcept = default;
template <typename T>
TemporalStack<T>::~TemporalStack() = default;

template <typename T>
Var TemporalStack<T>::forward(Graph<T>& g, Var x, StreamState<T>& state, const Tensor<T>* mask) {
  const Shape s = g.value(x).shape();
  Tensor<T> ones;
  if (mask_inputs() && mask == nullptr) {
    ones = Tensor<T>(Shape{s[0], s[1], 1, 1}, T(1));
    mask = &ones;
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (mask_inputs()) x = nn::mask_add(g, x, *mask, g.param(mask_weights_[i]));
    x = std::visit([&](auto& b) { return b.forward(g, x, state); }, blocks_[i]->impl);
  }
  return x;
}

template <typename T>
void TemporalStack<T>::zero_residual() {
  for (auto& b : blocks_) std::visit([](auto& impl) { impl.zero_residual(); }, b->impl);
}

template <typename T>
void TemporalStack<T>::collect(ParameterList<T>& out) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (mask_inputs()) out.push_back(&mask_weights_[i]);
    std::visit([&](auto& impl) { impl.collect(out); }, blocks_[i]->impl);
  }
}

template class TcmBlock<float>;
template class TcmBlock<double>;
template class TcmGroup<float>;
template class TcmGroup<double>;
template class GGruBlock<float>;
template class GGruBlock<double>;
template class TemporalStack<float>;
template class TemporalStack<double>;

}  // namespace tfnet::temporal
