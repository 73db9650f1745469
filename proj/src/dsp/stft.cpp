#include "tfnet/dsp/stft.hpp"

#include <algorithm>
#include <numbers>

#include "tfnet/core/error.hpp"
#include "tfnet/core/gemm.hpp"

namespace tfnet::dsp {

void StftConfig::validate() const {
  require(window_len > 0 && hop_len > 0, ErrorKind::kConfig, "window and hop must be positive");
  require(window_len == 4 * hop_len, ErrorKind::kConfig,
          "window length must be four hops (75% overlap)");
  require(window_len % 2 == 0, ErrorKind::kConfig, "window length must be even");
}

std::vector<double> analysis_window(const StftConfig& cfg) {
  cfg.validate();
  std::vector<double> w(cfg.window_len);
  for (int n = 0; n < cfg.window_len; ++n) {
    // periodic Hann, then square root
    const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / cfg.window_len);
    w[n] = std::sqrt(std::max(hann, 0.0));
  }
  return w;
}

double cola_constant(const StftConfig& cfg) {
  const auto w = analysis_window(cfg);
  double sum = 0.0;
  for (int n = 0; n < cfg.window_len; n += cfg.hop_len) sum += w[n] * w[n];
  return sum;
}

int frame_count(std::size_t samples, const StftConfig& cfg) {
  if (samples < static_cast<std::size_t>(cfg.window_len)) return 0;
  return 1 + static_cast<int>((samples - cfg.window_len) / cfg.hop_len);
}

template <typename T>
FrameTransform<T>::FrameTransform(const StftConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg_.window_len;
  const int f = cfg_.bins();
  const auto w = analysis_window(cfg_);
  fwd_.assign(static_cast<std::size_t>(n) * 2 * f, T(0));
  fwd_t_.assign(fwd_.size(), T(0));
  inv_.assign(fwd_.size(), T(0));
  inv_t_.assign(fwd_.size(), T(0));
  window_sq_.resize(n);
  for (int i = 0; i < n; ++i) window_sq_[i] = static_cast<T>(w[i] * w[i]);

  for (int k = 0; k < f; ++k) {
    const double scale = (k == 0 || 2 * k == n) ? 1.0 / n : 2.0 / n;
    for (int i = 0; i < n; ++i) {
      // reduce k*i mod n before taking the angle to keep it accurate
      const long phase = (static_cast<long>(k) * i) % n;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(phase) / n;
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      const std::size_t fi = static_cast<std::size_t>(i) * 2 * f + 2 * k;
      fwd_[fi] = static_cast<T>(w[i] * c);
      fwd_[fi + 1] = static_cast<T>(-w[i] * s);
      const std::size_t ii = static_cast<std::size_t>(2 * k) * n + i;
      inv_[ii] = static_cast<T>(scale * c * w[i]);
      inv_[ii + n] = static_cast<T>(-scale * s * w[i]);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2 * f; ++j) {
      fwd_t_[static_cast<std::size_t>(j) * n + i] = fwd_[static_cast<std::size_t>(i) * 2 * f + j];
      inv_t_[static_cast<std::size_t>(i) * 2 * f + j] = inv_[static_cast<std::size_t>(j) * n + i];
    }
}

template <typename T>
void FrameTransform<T>::forward(int n, const T* frames, T* spectra) const {
  const int w = window();
  const int f2 = 2 * bins();
  std::fill(spectra, spectra + static_cast<std::size_t>(n) * f2, T(0));
  kernels::gemm_acc(n, f2, w, frames, w, fwd_.data(), f2, spectra, f2);
}

template <typename T>
void FrameTransform<T>::inverse(int n, const T* spectra, T* frames) const {
  const int w = window();
  const int f2 = 2 * bins();
  std::fill(frames, frames + static_cast<std::size_t>(n) * w, T(0));
  kernels::gemm_acc(n, w, f2, spectra, f2, inv_.data(), w, frames, w);
}

template <typename T>
void FrameTransform<T>::forward_adjoint(int n, const T* dspectra, T* dframes) const {
  const int w = window();
  const int f2 = 2 * bins();
  kernels::gemm_acc(n, w, f2, dspectra, f2, fwd_t_.data(), w, dframes, w);
}

template <typename T>
void FrameTransform<T>::inverse_adjoint(int n, const T* dframes, T* dspectra) const {
  const int w = window();
  const int f2 = 2 * bins();
  kernels::gemm_acc(n, f2, w, dframes, w, inv_t_.data(), f2, dspectra, f2);
}

template <typename T>
OverlapAdd<T>::OverlapAdd(const StftConfig& cfg)
    : window_(cfg.window_len), hop_(cfg.hop_len) {
  cfg.validate();
  const auto w = analysis_window(cfg);
  window_sq_.resize(window_);
  for (int i = 0; i < window_; ++i) window_sq_[i] = static_cast<T>(w[i] * w[i]);
  reset();
}

template <typename T>
void OverlapAdd<T>::reset() {
  buffer_.assign(window_, T(0));
  envelope_.assign(window_, T(0));
}

template <typename T>
void OverlapAdd<T>::push(const T* windowed_frame, T* out_hop) {
  for (int i = 0; i < window_; ++i) {
    buffer_[i] += windowed_frame[i];
    envelope_[i] += window_sq_[i];
  }
  for (int i = 0; i < hop_; ++i)
    out_hop[i] = envelope_[i] > kEnvelopeFloor<T> ? buffer_[i] / envelope_[i] : T(0);
  std::copy(buffer_.begin() + hop_, buffer_.end(), buffer_.begin());
  std::copy(envelope_.begin() + hop_, envelope_.end(), envelope_.begin());
  std::fill(buffer_.end() - hop_, buffer_.end(), T(0));
  std::fill(envelope_.end() - hop_, envelope_.end(), T(0));
}

template <typename T>
void OverlapAdd<T>::flush(T* out_tail) const {
  for (int i = 0; i < window_ - hop_; ++i)
    out_tail[i] = envelope_[i] > kEnvelopeFloor<T> ? buffer_[i] / envelope_[i] : T(0);
}

template <typename T>
void extract_frames(const T* signal, int n, const StftConfig& cfg, T* frames) {
  for (int t = 0; t < n; ++t)
    std::copy(signal + static_cast<std::size_t>(t) * cfg.hop_len,
              signal + static_cast<std::size_t>(t) * cfg.hop_len + cfg.window_len,
              frames + static_cast<std::size_t>(t) * cfg.window_len);
}

template <typename T>
void synthesize(const FrameTransform<T>& transform, int n, const T* spectra, T* out) {
  const auto& cfg = transform.config();
  const int w = cfg.window_len;
  const int h = cfg.hop_len;
  std::vector<T> frames(static_cast<std::size_t>(n) * w);
  transform.inverse(n, spectra, frames.data());
  OverlapAdd<T> ola(cfg);
  for (int t = 0; t < n; ++t)
    ola.push(frames.data() + static_cast<std::size_t>(t) * w, out + static_cast<std::size_t>(t) * h);
  if (n > 0) ola.flush(out + static_cast<std::size_t>(n) * h);
}

template <typename T>
std::vector<T> synthesis_envelope(const StftConfig& cfg, int n) {
  const auto w = analysis_window(cfg);
  std::vector<T> env(synthesis_length(n, cfg), T(0));
  for (int t = 0; t < n; ++t)
    for (int i = 0; i < cfg.window_len; ++i)
      env[static_cast<std::size_t>(t) * cfg.hop_len + i] += static_cast<T>(w[i] * w[i]);
  return env;
}

Spectrum stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  const int n = frame_count(w.samples.size(), cfg);
  require(n > 0, ErrorKind::kShape, "insufficient samples: need at least one window");
  FrameTransform<double> transform(cfg);
  std::vector<double> frames(static_cast<std::size_t>(n) * cfg.window_len);
  extract_frames(w.samples.data(), n, cfg, frames.data());
  Spectrum s(n, cfg.bins());
  transform.forward(n, frames.data(), s.data.data());
  return s;
}

Waveform istft(const Spectrum& s, const StftConfig& cfg) {
  cfg.validate();
  require(s.bins == cfg.bins() && s.frames > 0 &&
              s.data.size() == static_cast<std::size_t>(s.frames) * s.bins * 2,
          ErrorKind::kShape, "spectrum shape does not match the STFT configuration");
  FrameTransform<double> transform(cfg);
  Waveform out;
  out.samples.assign(synthesis_length(s.frames, cfg), 0.0);
  synthesize(transform, s.frames, s.data.data(), out.samples.data());
  return out;
}

namespace {

Spectrum map_bins(const Spectrum& s, double exponent) {
  Spectrum out = s;
  for (std::size_t i = 0; i < out.data.size(); i += 2)
    compress_bin(out.data[i], out.data[i + 1], exponent);
  return out;
}

}  // namespace

Spectrum power_law_compress(const Spectrum& s, double p) {
  require(p > 0.0 && p <= 1.0, ErrorKind::kConfig, "power-law exponent must lie in (0, 1]");
  return map_bins(s, p);
}

Spectrum power_law_expand(const Spectrum& s, double p) {
  require(p > 0.0 && p <= 1.0, ErrorKind::kConfig, "power-law exponent must lie in (0, 1]");
  return map_bins(s, 1.0 / p);
}

template class FrameTransform<float>;
template class FrameTransform<double>;
template class OverlapAdd<float>;
template class OverlapAdd<double>;
template void extract_frames<float>(const float*, int, const StftConfig&, float*);
template void extract_frames<double>(const double*, int, const StftConfig&, double*);
template void synthesize<float>(const FrameTransform<float>&, int, const float*, float*);
template void synthesize<double>(const FrameTransform<double>&, int, const double*, double*);
template std::vector<float> synthesis_envelope<float>(const StftConfig&, int);
template std::vector<double> synthesis_envelope<double>(const StftConfig&, int);

}  // namespace tfnet::dsp
