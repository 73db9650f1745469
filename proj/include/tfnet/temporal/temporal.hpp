#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tfnet/nn/layers.hpp"

namespace tfnet::temporal {

using nn::Graph;
using nn::ParameterList;
using nn::StreamState;
using nn::Var;

struct TemporalConfig {
  int channels = 192;
  int tcm_hidden = 36;  // bottleneck width inside each TCM block
  int tcm_kernel = 3;
  std::vector<int> dilations{1, 2, 4, 8};
  int gru_groups = 4;

  void validate() const;
};

/// Residual block: 1x1 -> PReLU -> norm -> dilated depthwise -> PReLU -> norm -> 1x1.
template <typename T>
class TcmBlock {
 public:
  TcmBlock(const std::string& name, int channels, int hidden, int kernel, int dilation, Rng& rng);

  Var forward(Graph<T>& g, Var x, StreamState<T>& state);
  /// Zeroes the last 1x1 conv so the block is the identity.
  void zero_output();
  void collect(ParameterList<T>& out);

  int history() const { return depthwise_.history(); }

 private:
  nn::Pointwise<T> conv_in_;
  nn::PRelu<T> act1_;
  nn::ChannelNorm<T> norm1_;
  nn::DepthwiseTime<T> depthwise_;
  nn::PRelu<T> act2_;
  nn::ChannelNorm<T> norm2_;
  nn::Pointwise<T> conv_out_;
};

template <typename T>
class TcmGroup {
 public:
  TcmGroup(const std::string& name, const TemporalConfig& cfg, Rng& rng);

  Var forward(Graph<T>& g, Var x, StreamState<T>& state);
  void zero_residual();
  void collect(ParameterList<T>& out);

  /// Frames of input an output frame can see: 1 + sum of block histories.
  int receptive_field() const;

 private:
  std::vector<TcmBlock<T>> blocks_;
};

/// Channels split into contiguous groups, each run through its own GRU
/// (hidden = channels per group), concatenated, plus the input.
template <typename T>
class GGruBlock {
 public:
  GGruBlock(const std::string& name, int channels, int groups, Rng& rng);

  Var forward(Graph<T>& g, Var x, StreamState<T>& state);
  /// The grouped GRU output before the residual addition.
  Var transform(Graph<T>& g, Var x, StreamState<T>& state);
  void zero_residual();
  void collect(ParameterList<T>& out);

  int groups() const { return static_cast<int>(grus_.size()); }

 private:
  int channels_;
  std::vector<nn::Gru<T>> grus_;
};

/// 3 * (Cg * Hg + Hg^2 + Hg) per group, summed over groups (Hg = Cg).
std::size_t ggru_parameter_count(int channels, int groups);

/// Sequence of TCM groups ('T') and G-GRU blocks ('G') given as a layout
/// string such as "TGTG". With mask inputs enabled each block is preceded by
/// x + m[t] * w_block (w zero-initialised), m being the per-frame loss mask.
template <typename T>
class TemporalStack {
 public:
  TemporalStack(const std::string& name, const std::string& layout, const TemporalConfig& cfg,
                bool mask_inputs, Rng& rng);
  TemporalStack(TemporalStack&&) noexcept;
  TemporalStack& operator=(TemporalStack&&) noexcept;
  ~TemporalStack();

  /// mask: [B, T, 1, 1] or nullptr (treated as all ones when mask inputs are on).
  Var forward(Graph<T>& g, Var x, StreamState<T>& state, const Tensor<T>* mask = nullptr);
  void zero_residual();
  void collect(ParameterList<T>& out);

  const std::string& layout() const { return layout_; }
  bool mask_inputs() const { return !mask_weights_.empty(); }

 private:
  struct Block;
  std::string layout_;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::vector<nn::Parameter<T>> mask_weights_;
};

/// Throws ErrorKind::kConfig unless layout is a non-empty string over {T, G}.
void validate_layout(const std::string& layout);

}  // namespace tfnet::temporal
