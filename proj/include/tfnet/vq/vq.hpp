#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfnet/core/rng.hpp"
#include "tfnet/nn/graph.hpp"

namespace tfnet::vq {

struct VqConfig {
  int groups = 3;           // N
  int codebook_size = 1024; // S
  int dim = 40;             // K
  double decay = 0.99;      // gamma
  double eps = 1e-5;        // Laplace smoothing

  int channels() const { return groups * dim; }
  int bits_per_index() const;  // log2(S); throws unless S is a power of two
  void validate() const;
};

/// N * log2(S) / hop_ms kbps. S must be a power of two.
double bitrate_kbps(int groups, int codebook_size, double hop_ms);

bool is_power_of_two(std::int64_t v);

/// N independent codebooks of S codewords each, learned by exponential
/// moving averages of assignment counts and sums. All state lives in
/// non-trainable parameters so it is checkpointed with the model.
template <typename T>
class GroupCodebook {
 public:
  GroupCodebook(const std::string& name, const VqConfig& cfg);

  const VqConfig& config() const { return cfg_; }
  bool initialized() const { return initialized_.value[0] != T(0); }

  /// Nearest codeword per group for `frames` vectors of N*K values.
  /// indices receives frames * N entries (frame-major, group-minor).
  void assign(const T* x, std::size_t frames, std::int32_t* indices) const;
  /// Writes the codewords for the given indices.
  void lookup(const std::int32_t* indices, std::size_t frames, T* out) const;

  /// Samples codewords from the given vectors (without replacement while
  /// possible; repeats get a small jitter) and resets the EMA statistics.
  void init_from(const T* x, std::size_t frames, Rng& rng);

  /// One EMA step from a batch of vectors and their assignments.
  void ema_update(const T* x, const std::int32_t* indices, std::size_t frames);

  /// Codewords whose EMA count is below `threshold`.
  int dead_codes(double threshold = 1e-3) const;

  const T* codeword(int group, int index) const;
  T* codeword(int group, int index);

  void collect(nn::ParameterList<T>& out);

  nn::Parameter<T> codewords;    // [1, N, S, K]
  nn::Parameter<T> ema_count;    // [1, 1, N, S]
  nn::Parameter<T> ema_sum;      // [1, N, S, K]
  nn::Parameter<T> initialized_; // [1, 1, 1, 1]

 private:
  VqConfig cfg_;
};

template <typename T>
struct Quantized {
  nn::Var output;                      // codewords forward, identity backward
  Tensor<T> values;                    // same values as output
  std::vector<std::int32_t> indices;   // [B * T * N]
};

/// Quantises x [B, T, 1, N*K]; straight-through in the backward pass.
template <typename T>
Quantized<T> quantize(nn::Graph<T>& g, nn::Var x, const GroupCodebook<T>& cb);

/// mean((x - sg(q))^2); no gradient reaches q.
template <typename T>
nn::Var commitment_loss(nn::Graph<T>& g, nn::Var x, const Tensor<T>& q);

/// Mean over groups of the index entropy in bits.
double usage_entropy_bits(const std::vector<std::int32_t>& indices, int groups, int codebook_size);

}  // namespace tfnet::vq
