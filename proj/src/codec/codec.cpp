#include "tfnet/codec/codec.hpp"

#include <algorithm>

#include "tfnet/nn/ops.hpp"
#include "tfnet/nn/spectral.hpp"

namespace tfnet::codec {
namespace {

const CodecConfig& validated(const CodecConfig& cfg) {
  cfg.validate();
  return cfg;
}

template <typename T>
Tensor<T> frame_mask_tensor(int batch, int frames, std::span<const std::uint8_t> received) {
  Tensor<T> m(Shape{batch, frames, 1, 1}, T(1));
  if (!received.empty()) {
    require(received.size() == static_cast<std::size_t>(batch) * frames, ErrorKind::kShape,
            "loss mask length " + std::to_string(received.size()) + " does not match " +
                std::to_string(batch * frames) + " frames");
    for (std::size_t i = 0; i < received.size(); ++i) m[i] = received[i] ? T(1) : T(0);
  }
  return m;
}

}  // namespace

// --- encoder / decoder -------------------------------------------------------

template <typename T>
Encoder<T>::Encoder(const std::string& name, const CodecConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.enc_channels.size();
  layers_.reserve(n + 1);
  int cin = 2;
  for (std::size_t i = 0; i <= n; ++i) {
    const bool fold = i == n;
    const int cout = fold ? cfg.latent : cfg.enc_channels[i];
    nn::Conv2dSpec spec;
    spec.kt = cfg.conv_kernel_t;
    spec.kf = fold ? cfg.fold_bins() : cfg.enc_kernel_f;
    spec.stride_f = fold ? cfg.fold_bins() : cfg.enc_strides[i];
    const std::string lname = name + "." + std::to_string(i);
    layers_.push_back(Layer{nn::Conv2d<T>(lname + ".conv", cin, cout, spec, false, rng, false),
                            nn::BatchNorm<T>(lname + ".bn", cout), nn::PRelu<T>(lname + ".act", cout)});
    cin = cout;
  }
}

template <typename T>
Var Encoder<T>::forward(Graph<T>& g, Var x, StreamState<T>& state) {
  for (auto& l : layers_) x = l.act.forward(g, l.norm.forward(g, l.conv.forward(g, x, state)));
  return x;
}

template <typename T>
void Encoder<T>::collect(ParameterList<T>& out) {
  for (auto& l : layers_) {
    l.conv.collect(out);
    l.norm.collect(out);
    l.act.collect(out);
  }
}

template <typename T>
Decoder<T>::Decoder(const std::string& name, const CodecConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.enc_channels.size();
  layers_.reserve(n + 1);
  int cin = cfg.latent;
  for (std::size_t i = 0; i <= n; ++i) {
    const bool fold = i == 0;
    const bool last = i == n;
    const int cout = last ? 2 : cfg.enc_channels[n - 1 - i];
    nn::Conv2dSpec spec;
    spec.kt = cfg.conv_kernel_t;
    spec.kf = fold ? cfg.fold_bins() : cfg.enc_kernel_f;
    spec.stride_f = fold ? cfg.fold_bins() : cfg.enc_strides[n - i];
    const std::string lname = name + "." + std::to_string(i);
    Layer layer{nn::Conv2d<T>(lname + ".deconv", cin, cout, spec, true, rng, last), std::nullopt, std::nullopt};
    if (!last) {
      layer.norm.emplace(lname + ".bn", cout);
      layer.act.emplace(lname + ".act", cout);
    }
    layers_.push_back(std::move(layer));
    cin = cout;
  }
}

template <typename T>
Var Decoder<T>::forward(Graph<T>& g, Var x, StreamState<T>& state) {
  for (auto& l : layers_) {
    x = l.conv.forward(g, x, state);
    if (l.norm) x = l.act->forward(g, l.norm->forward(g, x));
  }
  return x;
}

template <typename T>
void Decoder<T>::collect(ParameterList<T>& out) {
  for (auto& l : layers_) {
    l.conv.collect(out);
    if (l.norm) l.norm->collect(out);
    if (l.act) l.act->collect(out);
  }
}

// --- codec -------------------------------------------------------------------

template <typename T>
Codec<T>::Codec(const CodecConfig& cfg, Rng&& rng)
    : cfg_(validated(cfg)),
      transform_(cfg.stft),
      encoder_("encoder", cfg, rng),
      encode_stack_("encode_stack", cfg.encode_stack, cfg.temporal_config(), false, rng),
      down_("project_down", cfg.latent, cfg.latent_q, rng),
      codebook_("vq", cfg.vq_config()),
      up_("project_up", cfg.latent_q + 1, cfg.latent, rng),
      decode_stack_("decode_stack", cfg.decode_stack, cfg.temporal_config(), true, rng),
      decoder_("decoder", cfg, rng) {
  // The mask channel starts disconnected.
  auto& w = up_.weight.value;
  for (int c = 0; c < cfg.latent; ++c) w(0, 0, cfg.latent_q, c) = T(0);
  // Placeholder codewords until training initialises them from data.
  for (auto& v : codebook_.codewords.value.vec()) v = static_cast<T>(rng.normal());
  codebook_.ema_sum.value = codebook_.codewords.value;
  if (cfg.all_in_one) aux_ = std::make_unique<Decoder<T>>("aux_decoder", cfg, rng);
}

template <typename T>
Var Codec<T>::analyze(Graph<T>& g, Var wave) const {
  Var spec = nn::stft(g, wave, transform_);
  spec = nn::slice_freq(g, spec, 0, cfg_.net_bins());
  return nn::power_compress(g, spec, static_cast<T>(cfg_.power), T(0));
}

template <typename T>
Var Codec<T>::encode_features(Graph<T>& g, Var spectrum, StreamState<T>& state) {
  const Shape s = g.value(spectrum).shape();
  require(s[2] == cfg_.net_bins() && s[3] == 2, ErrorKind::kShape,
          "encoder expects [B, T, " + std::to_string(cfg_.net_bins()) + ", 2], got " + to_string(s));
  Var x = encoder_.forward(g, spectrum, state);
  return encode_stack_.forward(g, x, state);
}

template <typename T>
Var Codec<T>::project_down(Graph<T>& g, Var features) {
  return down_.forward(g, features);
}

template <typename T>
Var Codec<T>::decode_latent(Graph<T>& g, Var q, const Tensor<T>& mask, StreamState<T>& state) {
  const Shape s = g.value(q).shape();
  require(s[2] == 1 && s[3] == cfg_.latent_q, ErrorKind::kShape,
          "decoder expects [B, T, 1, " + std::to_string(cfg_.latent_q) + "], got " + to_string(s));
  require(mask.shape() == Shape{s[0], s[1], 1, 1}, ErrorKind::kShape,
          "loss mask shape " + to_string(mask.shape()) + " does not match " + std::to_string(s[1]) +
              " frames");
  Var zeroed = nn::frame_mask(g, q, mask);
  const Var parts[2] = {zeroed, g.constant(mask)};
  Var x = up_.forward(g, nn::concat_channels<T>(g, parts));
  x = decode_stack_.forward(g, x, state, &mask);
  x = decoder_.forward(g, x, state);
  x = nn::pad_freq(g, x, transform_.bins() - cfg_.net_bins());
  return nn::power_expand(g, x, static_cast<T>(cfg_.power));
}

template <typename T>
Var Codec<T>::aux_decode(Graph<T>& g, Var features) {
  require(aux_ != nullptr, ErrorKind::kState, "this model has no auxiliary clean decoder");
  require(g.training(), ErrorKind::kState, "the auxiliary clean decoder is for training only");
  StreamState<T> state;
  Var x = aux_->forward(g, features, state);
  x = nn::pad_freq(g, x, transform_.bins() - cfg_.net_bins());
  return nn::power_expand(g, x, static_cast<T>(cfg_.power));
}

template <typename T>
CodecForward<T> Codec<T>::forward(Graph<T>& g, Var wave, const Tensor<T>* mask) {
  CodecForward<T> f;
  StreamState<T> enc_state, dec_state;
  f.input = analyze(g, wave);
  f.features = encode_features(g, f.input, enc_state);
  f.latent = project_down(g, f.features);
  if (bypass_vq) {
    f.quantized = f.latent;
    f.codewords = g.value(f.latent);
  } else {
    auto q = vq::quantize(g, f.latent, codebook_);
    f.quantized = q.output;
    f.codewords = std::move(q.values);
    f.indices = std::move(q.indices);
  }
  const Shape s = g.value(f.latent).shape();
  Tensor<T> ones;
  if (mask == nullptr) {
    ones = Tensor<T>(Shape{s[0], s[1], 1, 1}, T(1));
    mask = &ones;
  }
  f.decoded = decode_latent(g, f.quantized, *mask, dec_state);
  if (aux_ && g.training()) f.aux_decoded = aux_decode(g, f.features);
  return f;
}

template <typename T>
ParameterList<T> Codec<T>::inference_parameters() {
  ParameterList<T> out;
  encoder_.collect(out);
  encode_stack_.collect(out);
  down_.collect(out);
  codebook_.collect(out);
  up_.collect(out);
  decode_stack_.collect(out);
  decoder_.collect(out);
  return out;
}

template <typename T>
ParameterList<T> Codec<T>::aux_parameters() {
  ParameterList<T> out;
  if (aux_) aux_->collect(out);
  return out;
}

template <typename T>
ParameterList<T> Codec<T>::parameters() {
  ParameterList<T> out = inference_parameters();
  for (auto* p : aux_parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t Codec<T>::trainable_count(bool include_aux) {
  return nn::count_trainable(include_aux ? parameters() : inference_parameters());
}

template <typename T>
void Codec<T>::identity_projections() {
  require(cfg_.latent == cfg_.latent_q, ErrorKind::kConfig,
          "identity projections need latent == latent_q");
  down_.weight.value.fill(T(0));
  down_.bias.value.fill(T(0));
  up_.weight.value.fill(T(0));
  up_.bias.value.fill(T(0));
  for (int c = 0; c < cfg_.latent; ++c) {
    down_.weight.value(0, 0, c, c) = T(1);
    up_.weight.value(0, 0, c, c) = T(1);
  }
}

template <typename T>
int Codec<T>::frames_for(std::size_t samples) const {
  const std::size_t hop = cfg_.stft.hop_len;
  return static_cast<int>((samples + hop - 1) / hop);
}

template <typename T>
std::vector<std::int32_t> Codec<T>::encode(std::span<const double> samples) {
  const int frames = frames_for(samples.size());
  require(frames > 0, ErrorKind::kShape, "insufficient samples: nothing to encode");
  const std::size_t total = dsp::synthesis_length(frames, cfg_.stft);
  Tensor<T> wave(Shape{1, static_cast<int>(total), 1, 1});
  for (std::size_t i = 0; i < samples.size(); ++i) wave[i] = static_cast<T>(samples[i]);
  Graph<T> g(nn::Mode::kEval, false);
  StreamState<T> state;
  Var lat = project_down(g, encode_features(g, analyze(g, g.constant(std::move(wave))), state));
  std::vector<std::int32_t> indices(static_cast<std::size_t>(frames) * cfg_.vq_groups);
  codebook_.assign(g.value(lat).data(), frames, indices.data());
  return indices;
}

template <typename T>
std::vector<double> Codec<T>::decode(std::span<const std::int32_t> indices,
                                     std::span<const std::uint8_t> frame_received) {
  const std::size_t n = cfg_.vq_groups;
  require(!indices.empty() && indices.size() % n == 0, ErrorKind::kShape,
          "index count must be a positive multiple of the group count");
  const int frames = static_cast<int>(indices.size() / n);
  Tensor<T> mask = frame_mask_tensor<T>(1, frames, frame_received);
  Tensor<T> q(Shape{1, frames, 1, cfg_.latent_q});
  for (int t = 0; t < frames; ++t)
    if (mask[t] != T(0))
      codebook_.lookup(indices.data() + t * n, 1, q.data() + static_cast<std::size_t>(t) * cfg_.latent_q);
  Graph<T> g(nn::Mode::kEval, false);
  StreamState<T> state;
  Var spec = decode_latent(g, g.constant(std::move(q)), mask, state);
  const int w = cfg_.stft.window_len, hop = cfg_.stft.hop_len;
  std::vector<T> windowed(static_cast<std::size_t>(frames) * w);
  transform_.inverse(frames, g.value(spec).data(), windowed.data());
  dsp::OverlapAdd<T> ola(cfg_.stft);
  std::vector<T> hop_out(hop);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(frames) * hop);
  for (int t = 0; t < frames; ++t) {
    ola.push(windowed.data() + static_cast<std::size_t>(t) * w, hop_out.data());
    out.insert(out.end(), hop_out.begin(), hop_out.end());
  }
  return out;
}

// --- streaming -----------------------------------------------------------------

template <typename T>
StreamEncoder<T>::StreamEncoder(Codec<T>& codec)
    : codec_(codec), window_(codec.config().stft.window_len, 0.0) {}

template <typename T>
void StreamEncoder<T>::reset() {
  std::fill(window_.begin(), window_.end(), 0.0);
  received_ = 0;
  state_ = StreamState<T>();
}

template <typename T>
std::optional<std::vector<std::int32_t>> StreamEncoder<T>::push(std::span<const double> hop) {
  const auto& cfg = codec_.config();
  const std::size_t h = cfg.stft.hop_len;
  require(hop.size() == h, ErrorKind::kShape,
          "stream encoder expects hops of " + std::to_string(h) + " samples");
  std::copy(window_.begin() + h, window_.end(), window_.begin());
  std::copy(hop.begin(), hop.end(), window_.end() - h);
  received_ += h;
  if (received_ < window_.size()) return std::nullopt;
  Tensor<T> wave(Shape{1, static_cast<int>(window_.size()), 1, 1});
  for (std::size_t i = 0; i < window_.size(); ++i) wave[i] = static_cast<T>(window_[i]);
  Graph<T> g(nn::Mode::kEval, false);
  state_.rewind();
  Var lat = codec_.project_down(
      g, codec_.encode_features(g, codec_.analyze(g, g.constant(std::move(wave))), state_));
  state_.finish();
  std::vector<std::int32_t> idx(cfg.vq_groups);
  codec_.codebook().assign(g.value(lat).data(), 1, idx.data());
  return idx;
}

template <typename T>
StreamDecoder<T>::StreamDecoder(Codec<T>& codec) : codec_(codec), ola_(codec.config().stft) {}

template <typename T>
void StreamDecoder<T>::reset() {
  state_ = StreamState<T>();
  ola_.reset();
}

template <typename T>
std::vector<double> StreamDecoder<T>::push(std::span<const std::int32_t> indices) {
  const auto& cfg = codec_.config();
  const bool lost = indices.empty();
  require(lost || indices.size() == static_cast<std::size_t>(cfg.vq_groups), ErrorKind::kShape,
          "stream decoder expects " + std::to_string(cfg.vq_groups) + " indices per frame");
  Tensor<T> q(Shape{1, 1, 1, cfg.latent_q});
  if (!lost) codec_.codebook().lookup(indices.data(), 1, q.data());
  Tensor<T> mask(Shape{1, 1, 1, 1}, lost ? T(0) : T(1));
  Graph<T> g(nn::Mode::kEval, false);
  state_.rewind();
  Var spec = codec_.decode_latent(g, g.constant(std::move(q)), mask, state_);
  state_.finish();
  std::vector<T> windowed(cfg.stft.window_len), out(cfg.stft.hop_len);
  codec_.transform().inverse(1, g.value(spec).data(), windowed.data());
  ola_.push(windowed.data(), out.data());
  return std::vector<double>(out.begin(), out.end());
}

template class Encoder<float>;
template class Encoder<double>;
template class Decoder<float>;
template class Decoder<double>;
template class Codec<float>;
template class Codec<double>;
template class StreamEncoder<float>;
template class StreamEncoder<double>;
template class StreamDecoder<float>;
template class StreamDecoder<double>;

}  // namespace tfnet::codec
