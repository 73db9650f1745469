#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace tfnet::dsp {

enum class Taper { kSqrtHann };

/// Framing parameters. Frames are left-aligned (no centre padding): frame t
/// covers samples [t * hop, t * hop + window).
struct StftConfig {
  int window_len = 320;
  int hop_len = 80;
  Taper taper = Taper::kSqrtHann;

  int bins() const { return window_len / 2 + 1; }
  void validate() const;
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

/// Complex spectrum stored as frames x bins x {re, im}.
struct Spectrum {
  int frames = 0;
  int bins = 0;
  std::vector<double> data;

  Spectrum() = default;
  Spectrum(int t, int f) : frames(t), bins(f), data(static_cast<std::size_t>(t) * f * 2, 0.0) {}

  double& re(int t, int f) { return data[(static_cast<std::size_t>(t) * bins + f) * 2]; }
  double& im(int t, int f) { return data[(static_cast<std::size_t>(t) * bins + f) * 2 + 1]; }
  double re(int t, int f) const { return data[(static_cast<std::size_t>(t) * bins + f) * 2]; }
  double im(int t, int f) const { return data[(static_cast<std::size_t>(t) * bins + f) * 2 + 1]; }
};

std::vector<double> analysis_window(const StftConfig& cfg);

/// Sum over frames of window^2 at an interior sample (the COLA constant).
double cola_constant(const StftConfig& cfg);

/// 1 + floor((samples - window) / hop), or 0 when shorter than one window.
int frame_count(std::size_t samples, const StftConfig& cfg);

/// Number of samples produced by synthesis of `frames` frames.
inline std::size_t synthesis_length(int frames, const StftConfig& cfg) {
  return frames <= 0 ? 0 : static_cast<std::size_t>(frames - 1) * cfg.hop_len + cfg.window_len;
}

/// Windowed real DFT of whole frames as dense matrix products, in working
/// precision T. Analysis and synthesis windows are folded into the bases.
template <typename T>
class FrameTransform {
 public:
  explicit FrameTransform(const StftConfig& cfg);

  const StftConfig& config() const { return cfg_; }
  int window() const { return cfg_.window_len; }
  int bins() const { return cfg_.bins(); }

  /// frames [n x window] -> spectra [n x bins x 2] (overwritten).
  void forward(int n, const T* frames, T* spectra) const;
  /// spectra [n x bins x 2] -> synthesis-windowed frames [n x window] (overwritten).
  void inverse(int n, const T* spectra, T* frames) const;
  /// dframes += adjoint of forward applied to dspectra.
  void forward_adjoint(int n, const T* dspectra, T* dframes) const;
  /// dspectra += adjoint of inverse applied to dframes.
  void inverse_adjoint(int n, const T* dframes, T* dspectra) const;

  const std::vector<T>& window_squared() const { return window_sq_; }

 private:
  StftConfig cfg_;
  std::vector<T> fwd_;    // window x 2*bins
  std::vector<T> fwd_t_;  // 2*bins x window
  std::vector<T> inv_;    // 2*bins x window
  std::vector<T> inv_t_;  // window x 2*bins
  std::vector<T> window_sq_;
};

/// Streaming overlap-add with per-sample window-energy normalisation. Each
/// push finalises the hop samples no later frame overlaps. Batch synthesis
/// is built on the same object so the two paths agree bit for bit.
template <typename T>
class OverlapAdd {
 public:
  explicit OverlapAdd(const StftConfig& cfg);

  void reset();
  void push(const T* windowed_frame, T* out_hop);
  /// Writes the window - hop samples still pending after the last frame.
  void flush(T* out_tail) const;

 private:
  int window_;
  int hop_;
  std::vector<T> window_sq_;
  std::vector<T> buffer_;
  std::vector<T> envelope_;
};

/// Extracts n frames from a signal (no padding).
template <typename T>
void extract_frames(const T* signal, int n, const StftConfig& cfg, T* frames);

/// Full synthesis of n spectra to (n - 1) * hop + window samples.
template <typename T>
void synthesize(const FrameTransform<T>& transform, int n, const T* spectra, T* out);

/// Per-sample window energy sum for a signal made of n frames.
template <typename T>
std::vector<T> synthesis_envelope(const StftConfig& cfg, int n);

/// Samples whose window energy is at or below this are set to zero.
template <typename T>
constexpr T kEnvelopeFloor = T(1e-8);

Spectrum stft(const Waveform& w, const StftConfig& cfg);
Waveform istft(const Spectrum& s, const StftConfig& cfg);

/// z -> |z|^p * z / |z|; zero stays zero.
template <typename T>
inline void compress_bin(T& re, T& im, T p) {
  const T mag = std::hypot(re, im);
  if (mag == T(0)) return;
  const T gain = std::pow(mag, p - T(1));
  re *= gain;
  im *= gain;
}

template <typename T>
inline void expand_bin(T& re, T& im, T p) {
  compress_bin(re, im, T(1) / p);
}

Spectrum power_law_compress(const Spectrum& s, double p);
Spectrum power_law_expand(const Spectrum& s, double p);

}  // namespace tfnet::dsp
