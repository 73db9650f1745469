#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfnet/core/keyvalue.hpp"

namespace tfnet::train {

/// Deterministic speech-like signal: voiced syllables (harmonic source with
/// a moving pitch, shaped by interpolated vowel formants), fricative noise
/// bursts and pauses. Peak level is about -6 dBFS.
std::vector<double> synth_speech(double seconds, std::uint64_t seed, int sample_rate = 16000);

enum class NoiseKind { kWhite, kPink, kBrown, kHum, kBabble };

std::vector<double> synth_noise(double seconds, NoiseKind kind, std::uint64_t seed,
                                int sample_rate = 16000);

struct MixtureSpec {
  double snr_min_db = -5.0;
  double snr_max_db = 20.0;
  double level_min_db = -40.0;
  double level_max_db = -10.0;
  double segment_s = 3.0;
  bool reverb = false;

  void validate() const;
};

struct Mixture {
  std::vector<double> noisy;
  std::vector<double> clean;  // leveled direct-path target
  double snr_db = 0.0;        // drawn and realised SNR
  double level_db = 0.0;      // drawn RMS level of the target, dBFS
};

/// Random crops of clean and noise, the clean crop scaled to the drawn level
/// and the noise scaled to the drawn SNR. Silent clean crops are redrawn.
Mixture synthesize_mixture(const std::vector<double>& clean, const std::vector<double>& noise,
                           const MixtureSpec& spec, std::uint64_t seed, int sample_rate = 16000);

/// A clean crop at a drawn level with no noise (plain codec training).
Mixture leveled_clean(const std::vector<double>& clean, const MixtureSpec& spec, std::uint64_t seed,
                      int sample_rate = 16000);

double rms_dbfs(const std::vector<double>& x);

struct Corpus {
  std::vector<std::vector<double>> clean;
  std::vector<std::vector<double>> noise;

  /// Generated clips standing in for a recorded corpus.
  static Corpus synthetic(int clean_clips, int noise_clips, double seconds, std::uint64_t seed,
                          int sample_rate = 16000);
  /// Manifest lines: "<clean|noise> <path.wav>"; '#' starts a comment;
  /// relative paths resolve against the manifest's directory.
  static Corpus from_manifest(const std::string& path);
};

}  // namespace tfnet::train
