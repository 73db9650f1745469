#include "tfnet/codec/config.hpp"

namespace tfnet::codec {

int CodecConfig::fold_bins() const {
  int f = net_bins();
  for (int s : enc_strides) f = (f + s - 1) / s;
  return f;
}

vq::VqConfig CodecConfig::vq_config() const {
  vq::VqConfig v;
  v.groups = vq_groups;
  v.codebook_size = vq_size;
  v.dim = vq_groups > 0 ? latent_q / vq_groups : 0;
  v.decay = vq_decay;
  v.eps = vq_eps;
  return v;
}

temporal::TemporalConfig CodecConfig::temporal_config() const {
  temporal::TemporalConfig t;
  t.channels = latent;
  t.tcm_hidden = tcm_hidden;
  t.tcm_kernel = tcm_kernel;
  t.dilations = dilations;
  t.gru_groups = gru_groups;
  return t;
}

void CodecConfig::validate() const {
  require(sample_rate > 0, ErrorKind::kConfig, "sample_rate must be positive");
  stft.validate();
  require(power > 0.0 && power <= 1.0, ErrorKind::kConfig, "power-law exponent must lie in (0, 1]");
  require(!enc_channels.empty() && enc_channels.size() == enc_strides.size(), ErrorKind::kConfig,
          "enc_channels and enc_strides must be non-empty and of equal length");
  for (int c : enc_channels) require(c > 0, ErrorKind::kConfig, "encoder channels must be positive");
  int prod = 1;
  for (int s : enc_strides) {
    require(s >= 1, ErrorKind::kConfig, "encoder strides must be >= 1");
    prod *= s;
  }
  require(net_bins() % prod == 0, ErrorKind::kConfig,
          "product of encoder strides (" + std::to_string(prod) + ") must divide the " +
              std::to_string(net_bins()) + " network bins");
  require(prod * fold_bins() == net_bins(), ErrorKind::kConfig, "strides x fold must equal network bins");
  require(enc_kernel_f >= 1 && conv_kernel_t >= 1, ErrorKind::kConfig, "kernel sizes must be >= 1");
  require(latent > 0 && latent_q > 0, ErrorKind::kConfig, "latent widths must be positive");
  require(latent_q < latent || (allow_square_projection && latent_q == latent), ErrorKind::kConfig,
          "latent_q (C') must be smaller than latent (C)");
  require(vq_groups >= 1 && latent_q % vq_groups == 0, ErrorKind::kConfig,
          "latent_q must be divisible by vq_groups");
  vq_config().validate();
  temporal_config().validate();
  temporal::validate_layout(encode_stack);
  temporal::validate_layout(decode_stack);
  require(decode_stack.size() > encode_stack.size(), ErrorKind::kConfig,
          "decode_stack must have more blocks than encode_stack");
  require(frames_per_packet >= 1, ErrorKind::kConfig, "frames_per_packet must be >= 1");
}

nlohmann::json CodecConfig::to_json() const {
  return {{"sample_rate", sample_rate},
          {"window_len", stft.window_len},
          {"hop_len", stft.hop_len},
          {"power", power},
          {"enc_channels", enc_channels},
          {"enc_strides", enc_strides},
          {"enc_kernel_f", enc_kernel_f},
          {"conv_kernel_t", conv_kernel_t},
          {"latent", latent},
          {"latent_q", latent_q},
          {"tcm_hidden", tcm_hidden},
          {"tcm_kernel", tcm_kernel},
          {"dilations", dilations},
          {"gru_groups", gru_groups},
          {"encode_stack", encode_stack},
          {"decode_stack", decode_stack},
          {"vq_groups", vq_groups},
          {"vq_size", vq_size},
          {"vq_decay", vq_decay},
          {"vq_eps", vq_eps},
          {"frames_per_packet", frames_per_packet},
          {"all_in_one", all_in_one},
          {"allow_square_projection", allow_square_projection}};
}

CodecConfig CodecConfig::from_json(const nlohmann::json& j) {
  CodecConfig c;
  try {
    c.sample_rate = j.at("sample_rate");
    c.stft.window_len = j.at("window_len");
    c.stft.hop_len = j.at("hop_len");
    c.power = j.at("power");
    c.enc_channels = j.at("enc_channels").get<std::vector<int>>();
    c.enc_strides = j.at("enc_strides").get<std::vector<int>>();
    c.enc_kernel_f = j.at("enc_kernel_f");
    c.conv_kernel_t = j.at("conv_kernel_t");
    c.latent = j.at("latent");
    c.latent_q = j.at("latent_q");
    c.tcm_hidden = j.at("tcm_hidden");
    c.tcm_kernel = j.at("tcm_kernel");
    c.dilations = j.at("dilations").get<std::vector<int>>();
    c.gru_groups = j.at("gru_groups");
    c.encode_stack = j.at("encode_stack");
    c.decode_stack = j.at("decode_stack");
    c.vq_groups = j.at("vq_groups");
    c.vq_size = j.at("vq_size");
    c.vq_decay = j.at("vq_decay");
    c.vq_eps = j.at("vq_eps");
    c.frames_per_packet = j.at("frames_per_packet");
    c.all_in_one = j.at("all_in_one");
    c.allow_square_projection = j.value("allow_square_projection", false);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("invalid codec configuration: ") + e.what());
  }
  c.validate();
  return c;
}

const std::vector<std::string>& CodecConfig::keys() {
  static const std::vector<std::string> k{
      "sample_rate", "window_len",   "hop_len",      "power",      "enc_channels",
      "enc_strides", "enc_kernel_f", "conv_kernel_t", "latent",    "latent_q",
      "tcm_hidden",  "tcm_kernel",   "dilations",    "gru_groups", "encode_stack",
      "decode_stack", "vq_groups",   "vq_size",      "vq_decay",   "vq_eps",
      "frames_per_packet", "all_in_one"};
  return k;
}

void CodecConfig::apply(const KeyValues& kv) {
  sample_rate = kv.get_int("sample_rate", sample_rate);
  stft.window_len = kv.get_int("window_len", stft.window_len);
  stft.hop_len = kv.get_int("hop_len", stft.hop_len);
  power = kv.get_double("power", power);
  enc_channels = kv.get_ints("enc_channels", enc_channels);
  enc_strides = kv.get_ints("enc_strides", enc_strides);
  enc_kernel_f = kv.get_int("enc_kernel_f", enc_kernel_f);
  conv_kernel_t = kv.get_int("conv_kernel_t", conv_kernel_t);
  latent = kv.get_int("latent", latent);
  latent_q = kv.get_int("latent_q", latent_q);
  tcm_hidden = kv.get_int("tcm_hidden", tcm_hidden);
  tcm_kernel = kv.get_int("tcm_kernel", tcm_kernel);
  dilations = kv.get_ints("dilations", dilations);
  gru_groups = kv.get_int("gru_groups", gru_groups);
  encode_stack = kv.get_string("encode_stack", encode_stack);
  decode_stack = kv.get_string("decode_stack", decode_stack);
  vq_groups = kv.get_int("vq_groups", vq_groups);
  vq_size = kv.get_int("vq_size", vq_size);
  vq_decay = kv.get_double("vq_decay", vq_decay);
  vq_eps = kv.get_double("vq_eps", vq_eps);
  frames_per_packet = kv.get_int("frames_per_packet", frames_per_packet);
  all_in_one = kv.get_bool("all_in_one", all_in_one);
}

bool operator==(const CodecConfig& a, const CodecConfig& b) { return a.to_json() == b.to_json(); }

CodecConfig tiny_config() {
  CodecConfig c;
  c.stft.window_len = 64;
  c.stft.hop_len = 16;
  c.enc_channels = {4, 6};
  c.enc_strides = {2, 2};
  c.enc_kernel_f = 3;
  c.latent = 12;
  c.latent_q = 8;
  c.tcm_hidden = 6;
  c.dilations = {1, 2};
  c.gru_groups = 2;
  c.vq_groups = 2;
  c.vq_size = 16;
  return c;
}

}  // namespace tfnet::codec
