#include "tfnet/train/data.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tfnet/core/error.hpp"
#include "tfnet/core/rng.hpp"
#include "tfnet/core/wav.hpp"

namespace tfnet::train {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vowel {
  double f[3];
};
constexpr std::array<Vowel, 6> kVowels{{{{730, 1090, 2440}},
                                        {{270, 2290, 3010}},
                                        {{300, 870, 2240}},
                                        {{530, 1840, 2480}},
                                        {{570, 840, 2410}},
                                        {{660, 1720, 2410}}}};
constexpr double kBandwidth[3] = {80.0, 100.0, 120.0};

// Cascade of three resonators, unity gain at DC.
double formant_gain(double f, const double* formants) {
  double g = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double fk = formants[k];
    const double d = fk * fk - f * f;
    g *= fk * fk / std::sqrt(d * d + f * f * kBandwidth[k] * kBandwidth[k]);
  }
  return g;
}

double smooth_edge(double pos, double attack, double release, double length) {
  double e = 1.0;
  if (pos < attack) e = 0.5 - 0.5 * std::cos(std::numbers::pi * pos / attack);
  if (pos > length - release) e *= 0.5 - 0.5 * std::cos(std::numbers::pi * (length - pos) / release);
  return std::max(0.0, e);
}

std::vector<double> crop(const std::vector<double>& src, std::size_t n, Rng& rng) {
  const std::size_t off = src.size() == n ? 0 : rng.index(src.size() - n + 1);
  return std::vector<double>(src.begin() + off, src.begin() + off + n);
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

std::vector<double> reverberate(const std::vector<double>& x, Rng& rng, int sr) {
  const double rt60 = rng.uniform(0.2, 0.5);
  const std::size_t len = static_cast<std::size_t>(rt60 * sr);
  const std::size_t predelay = static_cast<std::size_t>(0.005 * sr);
  std::vector<double> h(len, 0.0);
  h[0] = 1.0;
  for (std::size_t n = predelay; n < len; ++n)
    h[n] = 0.3 * rng.normal() * std::exp(-6.9 * static_cast<double>(n) / (rt60 * sr));
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    const std::size_t m = std::min(len, x.size() - i);
    for (std::size_t k = 0; k < m; ++k) y[i + k] += x[i] * h[k];
  }
  return y;
}

}  // namespace

std::vector<double> synth_speech(double seconds, std::uint64_t seed, int sr) {
  require(seconds > 0.0, ErrorKind::kConfig, "speech duration must be positive");
  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(seconds * sr);
  std::vector<double> out(n, 0.0);
  const double base_f0 = rng.uniform(95.0, 210.0);
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.05, 0.15) * sr);
  const std::size_t end = n > static_cast<std::size_t>(0.1 * sr) ? n - static_cast<std::size_t>(0.1 * sr) : 0;
  std::vector<double> phases(64, 0.0);
  double f0_drift = 0.0;

  while (pos < end) {
    if (rng.uniform() < 0.4) {  // fricative
      const std::size_t len = std::min(end - pos, static_cast<std::size_t>(rng.uniform(0.06, 0.15) * sr));
      const double amp = rng.uniform(0.05, 0.12);
      double prev = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double w = rng.normal();
        out[pos + i] += amp * (w - prev) * smooth_edge(double(i), 0.02 * sr, 0.03 * sr, double(len));
        prev = w;
      }
      pos += len;
      if (pos >= end) break;
    }
    // voiced syllable gliding between two vowels
    const std::size_t len = std::min(end - pos, static_cast<std::size_t>(rng.uniform(0.12, 0.3) * sr));
    const Vowel& va = kVowels[rng.index(kVowels.size())];
    const Vowel& vb = kVowels[rng.index(kVowels.size())];
    const double amp = rng.uniform(0.5, 1.0);
    const double glide = rng.uniform(-0.15, 0.15);
    for (std::size_t i = 0; i < len; ++i) {
      const double u = static_cast<double>(i) / len;
      f0_drift = 0.999 * f0_drift + 0.002 * rng.normal();
      const double f0 = base_f0 * (1.0 + glide * (u - 0.5) + f0_drift) * (1.0 - 0.1 * double(pos) / n);
      double formants[3];
      for (int k = 0; k < 3; ++k) formants[k] = (1.0 - u) * va.f[k] + u * vb.f[k];
      double v = 0.0;
      for (int h = 1; h <= 64 && h * f0 < 0.45 * sr; ++h) {
        phases[h - 1] += kTwoPi * h * f0 / sr;
        if (phases[h - 1] > kTwoPi) phases[h - 1] -= kTwoPi;
        v += std::sin(phases[h - 1]) * formant_gain(h * f0, formants) / h;
      }
      out[pos + i] += 0.08 * amp * v * smooth_edge(double(i), 0.03 * sr, 0.05 * sr, double(len));
    }
    pos += len;
    const double pause = rng.uniform() < 0.2 ? rng.uniform(0.2, 0.4) : rng.uniform(0.02, 0.12);
    pos += static_cast<std::size_t>(pause * sr);
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v *= 0.5 / peak;
  return out;
}

std::vector<double> synth_noise(double seconds, NoiseKind kind, std::uint64_t seed, int sr) {
  require(seconds > 0.0, ErrorKind::kConfig, "noise duration must be positive");
  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(seconds * sr);
  std::vector<double> out(n, 0.0);
  switch (kind) {
    case NoiseKind::kWhite:
      for (auto& v : out) v = rng.normal();
      break;
    case NoiseKind::kPink: {
      double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
      for (auto& v : out) {
        const double w = rng.normal();
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
      }
      break;
    }
    case NoiseKind::kBrown: {
      double acc = 0.0;
      for (auto& v : out) v = acc = 0.995 * acc + 0.1 * rng.normal();
      break;
    }
    case NoiseKind::kHum: {
      const double f = rng.uniform() < 0.5 ? 50.0 : 60.0;
      for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (int h = 1; h <= 10; ++h) v += std::sin(kTwoPi * f * h * i / sr + h) / (h * h);
        out[i] = v + 0.05 * rng.normal();
      }
      break;
    }
    case NoiseKind::kBabble:
      for (int k = 0; k < 5; ++k) {
        const auto s = synth_speech(seconds, derive_seed(seed, k), sr);
        for (std::size_t i = 0; i < n; ++i) out[i] += s[i];
      }
      break;
  }
  const double rms = std::sqrt(energy(out) / std::max<std::size_t>(n, 1));
  if (rms > 0.0)
    for (auto& v : out) v *= 0.1 / rms;
  return out;
}

void MixtureSpec::validate() const {
  require(snr_min_db <= snr_max_db && level_min_db <= level_max_db, ErrorKind::kConfig,
          "mixture ranges must be ordered");
  require(segment_s > 0.0, ErrorKind::kConfig, "segment length must be positive");
}

double rms_dbfs(const std::vector<double>& x) {
  if (x.empty()) return -INFINITY;
  return 10.0 * std::log10(energy(x) / x.size());
}

Mixture leveled_clean(const std::vector<double>& clean, const MixtureSpec& spec, std::uint64_t seed,
                      int sr) {
  spec.validate();
  const std::size_t n = static_cast<std::size_t>(spec.segment_s * sr);
  require(clean.size() >= n, ErrorKind::kShape, "clean source shorter than one segment");
  Rng rng(seed);
  Mixture m;
  m.snr_db = rng.uniform(spec.snr_min_db, spec.snr_max_db);
  m.level_db = rng.uniform(spec.level_min_db, spec.level_max_db);
  std::vector<double> c;
  for (int attempt = 0;; ++attempt) {
    c = crop(clean, n, rng);
    if (energy(c) > 0.0) break;
    require(attempt < 100, ErrorKind::kShape, "clean source is silent");
  }
  const double gain = std::pow(10.0, m.level_db / 20.0) / std::sqrt(energy(c) / n);
  for (auto& v : c) v *= gain;
  m.clean = c;
  m.noisy = spec.reverb ? reverberate(c, rng, sr) : c;
  return m;
}

Mixture synthesize_mixture(const std::vector<double>& clean, const std::vector<double>& noise,
                           const MixtureSpec& spec, std::uint64_t seed, int sr) {
  const std::size_t n = static_cast<std::size_t>(spec.segment_s * sr);
  require(noise.size() >= n, ErrorKind::kShape, "noise source shorter than one segment");
  Mixture m = leveled_clean(clean, spec, seed, sr);
  Rng rng(derive_seed(seed, 0x6e6f6973));
  std::vector<double> z = crop(noise, n, rng);
  const double en = energy(z);
  if (en > 0.0) {
    const double gain = std::sqrt(energy(m.noisy) / en / std::pow(10.0, m.snr_db / 10.0));
    for (std::size_t i = 0; i < n; ++i) m.noisy[i] += gain * z[i];
  }
  return m;
}

Corpus Corpus::synthetic(int clean_clips, int noise_clips, double seconds, std::uint64_t seed, int sr) {
  Corpus c;
  for (int i = 0; i < clean_clips; ++i) c.clean.push_back(synth_speech(seconds, derive_seed(seed, i), sr));
  for (int i = 0; i < noise_clips; ++i)
    c.noise.push_back(synth_noise(seconds, static_cast<NoiseKind>(i % 5), derive_seed(seed, 1000 + i), sr));
  return c;
}

Corpus Corpus::from_manifest(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorKind::kFormat, "cannot open manifest " + path);
  const auto dir = std::filesystem::path(path).parent_path();
  Corpus c;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string role, file;
    if (!(ss >> role) || role[0] == '#') continue;
    require(static_cast<bool>(ss >> file), ErrorKind::kFormat,
            path + ":" + std::to_string(lineno) + ": expected '<clean|noise> <path>'");
    std::filesystem::path p(file);
    if (p.is_relative()) p = dir / p;
    auto audio = read_wav(p.string());
    require(audio.sample_rate == 16000, ErrorKind::kFormat, p.string() + ": sample rate must be 16 kHz");
    if (role == "clean")
      c.clean.push_back(std::move(audio.samples));
    else if (role == "noise")
      c.noise.push_back(std::move(audio.samples));
    else
      fail(ErrorKind::kFormat, path + ":" + std::to_string(lineno) + ": unknown role '" + role + "'");
  }
  require(!c.clean.empty(), ErrorKind::kFormat, "manifest lists no clean files");
  return c;
}

}  // namespace tfnet::train
