#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tfnet/codec/config.hpp"
#include "tfnet/nn/layers.hpp"
#include "tfnet/temporal/temporal.hpp"
#include "tfnet/vq/vq.hpp"

namespace tfnet::codec {

using nn::Graph;
using nn::ParameterList;
using nn::StreamState;
using nn::Var;

/// Strided conv stack folding [B, T, F, 2] into [B, T, 1, C], each layer
/// followed by batch norm and PReLU.
template <typename T>
class Encoder {
 public:
  Encoder(const std::string& name, const CodecConfig& cfg, Rng& rng);
  Var forward(Graph<T>& g, Var x, StreamState<T>& state);
  void collect(ParameterList<T>& out);

 private:
  struct Layer {
    nn::Conv2d<T> conv;
    nn::BatchNorm<T> norm;
    nn::PRelu<T> act;
  };
  std::vector<Layer> layers_;
};

/// Mirror of Encoder with frequency deconvolutions; [B, T, 1, C] ->
/// [B, T, F, 2]. The last layer is linear.
template <typename T>
class Decoder {
 public:
  Decoder(const std::string& name, const CodecConfig& cfg, Rng& rng);
  Var forward(Graph<T>& g, Var x, StreamState<T>& state);
  void collect(ParameterList<T>& out);

 private:
  struct Layer {
    nn::Conv2d<T> conv;
    std::optional<nn::BatchNorm<T>> norm;
    std::optional<nn::PRelu<T>> act;
  };
  std::vector<Layer> layers_;
};

/// Intermediate values of one forward pass.
template <typename T>
struct CodecForward {
  Var input;             // compressed input spectrum [B, T, F, 2]
  Var features;          // X^S, after the encode stack [B, T, 1, C]
  Var latent;            // X^Q, before quantisation [B, T, 1, C']
  Var quantized;         // straight-through output [B, T, 1, C']
  Tensor<T> codewords;   // forward values of `quantized`
  std::vector<std::int32_t> indices;
  Var decoded;           // X^R, expanded spectrum with Nyquist bin [B, T, bins, 2]
  std::optional<Var> aux_decoded;
};

/// The full network. Parameters are held by address in parameter lists and
/// optimizers, so instances are neither copyable nor movable.
template <typename T>
class Codec {
 public:
  Codec(const CodecConfig& cfg, std::uint64_t seed) : Codec(cfg, Rng(seed)) {}
  Codec(const Codec&) = delete;
  Codec& operator=(const Codec&) = delete;

  const CodecConfig& config() const { return cfg_; }
  const dsp::FrameTransform<T>& transform() const { return transform_; }
  vq::GroupCodebook<T>& codebook() { return codebook_; }
  const vq::GroupCodebook<T>& codebook() const { return codebook_; }
  bool has_aux() const { return aux_ != nullptr; }

  /// Replaces quantisation by the identity (rate-distortion baselines).
  bool bypass_vq = false;

  // Graph-level stages ------------------------------------------------------

  /// Waveform [B, L, 1, 1] -> compressed spectrum without Nyquist [B, T, F, 2].
  Var analyze(Graph<T>& g, Var wave) const;
  /// Compressed spectrum -> X^S.
  Var encode_features(Graph<T>& g, Var spectrum, StreamState<T>& state);
  Var project_down(Graph<T>& g, Var features);
  /// q [B, T, 1, C'] and per-frame mask [B, T, 1, 1] (1 received, 0 lost) ->
  /// X^R. Lost frames of q are zeroed here.
  Var decode_latent(Graph<T>& g, Var q, const Tensor<T>& mask, StreamState<T>& state);
  /// Clean-speech head on X^S; training mode only.
  Var aux_decode(Graph<T>& g, Var features);

  /// Full pass from a waveform batch. mask may be null (all received).
  CodecForward<T> forward(Graph<T>& g, Var wave, const Tensor<T>* mask);

  // Parameters --------------------------------------------------------------

  ParameterList<T> parameters();            // everything, aux included
  ParameterList<T> inference_parameters();  // aux excluded
  ParameterList<T> aux_parameters();
  std::size_t trainable_count(bool include_aux = false);

  /// Identity-initialises the square projections (needs allow_square_projection).
  void identity_projections();

  // Waveform API (eval mode, no tape) --------------------------------------

  /// Frames produced for a signal of `samples` samples.
  int frames_for(std::size_t samples) const;
  /// Encodes a signal; the tail is zero-padded by window - hop samples and up
  /// to a hop multiple so every input sample lands in an emitted frame.
  std::vector<std::int32_t> encode(std::span<const double> samples);
  /// Decodes frames of indices; frame_received may be empty (all received).
  /// Returns frames * hop samples.
  std::vector<double> decode(std::span<const std::int32_t> indices,
                             std::span<const std::uint8_t> frame_received);

 private:
  CodecConfig cfg_;
  dsp::FrameTransform<T> transform_;
  Encoder<T> encoder_;
  temporal::TemporalStack<T> encode_stack_;
  nn::Pointwise<T> down_;
  vq::GroupCodebook<T> codebook_;
  nn::Pointwise<T> up_;  // C' + mask channel -> C
  temporal::TemporalStack<T> decode_stack_;
  Decoder<T> decoder_;
  std::unique_ptr<Decoder<T>> aux_;

  Codec(const CodecConfig& cfg, Rng&& rng);
};

/// Hop-by-hop encoder. Yields nothing until a full window has arrived;
/// after the last real hop, push window/hop - 1 zero hops to drain.
template <typename T>
class StreamEncoder {
 public:
  explicit StreamEncoder(Codec<T>& codec);
  std::optional<std::vector<std::int32_t>> push(std::span<const double> hop);
  void reset();

 private:
  Codec<T>& codec_;
  std::vector<double> window_;
  std::size_t received_ = 0;
  StreamState<T> state_;
};

/// Frame-by-frame decoder; each push returns one hop of samples. An empty
/// span marks a lost frame.
template <typename T>
class StreamDecoder {
 public:
  explicit StreamDecoder(Codec<T>& codec);
  std::vector<double> push(std::span<const std::int32_t> indices);
  void reset();

 private:
  Codec<T>& codec_;
  StreamState<T> state_;
  dsp::OverlapAdd<T> ola_;
};

}  // namespace tfnet::codec
