#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfnet/core/keyvalue.hpp"
#include "tfnet/dsp/stft.hpp"
#include "tfnet/temporal/temporal.hpp"
#include "tfnet/vq/vq.hpp"

namespace tfnet::codec {

struct CodecConfig {
  int sample_rate = 16000;
  dsp::StftConfig stft{};
  double power = 0.3;

  // Encoder convs before the fold layer; the decoder mirrors them.
  std::vector<int> enc_channels{16, 32, 48};
  std::vector<int> enc_strides{2, 2, 4};
  int enc_kernel_f = 5;
  int conv_kernel_t = 2;

  int latent = 192;    // C
  int latent_q = 120;  // C', split into vq_groups codeword vectors

  int tcm_hidden = 36;
  int tcm_kernel = 3;
  std::vector<int> dilations{1, 2, 4, 8};
  int gru_groups = 4;
  std::string encode_stack = "TG";
  std::string decode_stack = "TGTG";

  int vq_groups = 3;
  int vq_size = 1024;
  double vq_decay = 0.99;
  double vq_eps = 1e-5;

  int frames_per_packet = 4;
  /// Adds the auxiliary clean decoder used by all-in-one training.
  bool all_in_one = false;
  /// Test hook: permits latent_q == latent (square projections).
  bool allow_square_projection = false;

  /// Bins seen by the network (Nyquist dropped).
  int net_bins() const { return stft.bins() - 1; }
  /// Bins left for the fold layer after the strided convs.
  int fold_bins() const;
  double hop_ms() const { return 1000.0 * stft.hop_len / sample_rate; }
  double bitrate_kbps() const { return vq::bitrate_kbps(vq_groups, vq_size, hop_ms()); }

  vq::VqConfig vq_config() const;
  temporal::TemporalConfig temporal_config() const;

  void validate() const;

  nlohmann::json to_json() const;
  static CodecConfig from_json(const nlohmann::json& j);

  /// Overrides fields from `key = value` settings (unrelated keys ignored).
  void apply(const KeyValues& kv);
  static const std::vector<std::string>& keys();
};

bool operator==(const CodecConfig& a, const CodecConfig& b);

/// A reduced configuration for tests: window 64 / hop 16, small widths.
CodecConfig tiny_config();

}  // namespace tfnet::codec
