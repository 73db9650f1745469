#pragma once

#include <string>
#include <vector>

namespace tfnet {

/// Mono 16-bit PCM audio mapped to [-1, 1) by division by 32768.
struct PcmAudio {
  std::vector<double> samples;
  int sample_rate = 16000;
};

/// Reads a RIFF/WAVE file. Only PCM, 16-bit, mono is accepted; anything
/// else raises ErrorKind::kFormat.
PcmAudio read_wav(const std::string& path);

/// Writes 16-bit PCM mono. Samples are clamped to the representable range.
void write_wav(const std::string& path, const PcmAudio& audio);

}  // namespace tfnet
