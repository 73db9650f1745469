#include <doctest.h>

#include <complex>
#include <numbers>

#include "helpers.hpp"
#include "tfnet/dsp/stft.hpp"

using namespace tfnet;
using namespace tfnet::dsp;

namespace {

Waveform wave(std::vector<double> x) { return Waveform{std::move(x), 16000}; }

double energy(const Spectrum& s) {
  double e = 0;
  for (double v : s.data) e += v * v;
  return e;
}

// Full-spectrum squared distance: bins other than DC and Nyquist stand for
// a conjugate pair.
double distance_sq(const Spectrum& a, const Spectrum& b) {
  double e = 0;
  for (int t = 0; t < a.frames; ++t)
    for (int f = 0; f < a.bins; ++f) {
      const double w = (f == 0 || f == a.bins - 1) ? 1.0 : 2.0;
      const double dr = a.re(t, f) - b.re(t, f), di = a.im(t, f) - b.im(t, f);
      e += w * (dr * dr + di * di);
    }
  return e;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("frame and bin counts") {
    StftConfig cfg;
    const auto s = stft(wave(std::vector<double>(16000, 0.0)), cfg);
    CHECK(s.frames == 197);
    CHECK(s.bins == 161);
    CHECK(frame_count(319, cfg) == 0);
    CHECK(frame_count(320, cfg) == 1);
    CHECK(frame_count(399, cfg) == 1);
    CHECK(frame_count(400, cfg) == 2);
    CHECK(synthesis_length(197, cfg) == 16000);
  }

  TEST_CASE("shorter than one window is rejected") {
    StftConfig cfg;
    try {
      stft(wave(std::vector<double>(319, 0.0)), cfg);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kShape);
      CHECK(std::string(e.what()).find("insufficient samples") != std::string::npos);
    }
  }

  TEST_CASE("invalid framing is a config error") {
    StftConfig cfg{320, 100};
    CHECK(testing::error_kind([&] { cfg.validate(); }) == ErrorKind::kConfig);
    StftConfig odd{318, 80};
    CHECK(testing::error_kind([&] { odd.validate(); }) == ErrorKind::kConfig);
  }

  TEST_CASE("zero in, zero out") {
    StftConfig cfg;
    const auto s = stft(wave(std::vector<double>(1000, 0.0)), cfg);
    CHECK(energy(s) == 0.0);
    const auto w = istft(Spectrum(9, 161), cfg);
    for (double v : w.samples) CHECK(v == 0.0);
  }

  TEST_CASE("single-frame sine matches a direct DFT and peaks at bin 20") {
    StftConfig cfg;
    std::vector<double> x(320);
    for (int n = 0; n < 320; ++n) x[n] = std::sin(2 * std::numbers::pi * 1000.0 * n / 16000.0);
    const auto s = stft(wave(x), cfg);
    REQUIRE(s.frames == 1);
    // Independent oracle: direct DFT of the sqrt-periodic-Hann windowed frame.
    double worst = 0, peak = 0;
    int arg = -1;
    for (int k = 0; k < 161; ++k) {
      std::complex<long double> acc = 0;
      for (int n = 0; n < 320; ++n) {
        const long double w = std::sqrt(0.5L - 0.5L * std::cos(2 * std::numbers::pi_v<long double> * n / 320));
        acc += w * static_cast<long double>(x[n]) *
               std::polar(1.0L, -2 * std::numbers::pi_v<long double> * k * n / 320);
      }
      worst = std::max(worst, static_cast<double>(std::abs(acc - std::complex<long double>(s.re(0, k), s.im(0, k)))));
      const double mag = std::hypot(s.re(0, k), s.im(0, k));
      if (mag > peak) {
        peak = mag;
        arg = k;
      }
    }
    CHECK(worst < 1e-10);
    CHECK(arg == 20);
  }

  TEST_CASE("COLA constant") {
    StftConfig cfg;
    const auto w = analysis_window(cfg);
    const double c = cola_constant(cfg);
    CHECK(c == doctest::Approx(2.0).epsilon(1e-12));
    // Every interior index sees the same window-energy sum.
    for (int n = 320; n < 640; ++n) {
      double acc = 0;
      for (int t = 0; t < 12; ++t) {
        const int i = n - t * 80;
        if (i >= 0 && i < 320) acc += w[i] * w[i];
      }
      CHECK(std::abs(acc - c) < 1e-10);
    }
  }

  TEST_CASE("interior round trip below -120 dB") {
    StftConfig cfg;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto x = testing::random_signal(16000 + 37 * seed, seed);
      const auto y = istft(stft(wave(x), cfg), cfg).samples;
      double se = 0, ne = 0;
      for (std::size_t i = 320; i + 320 < y.size(); ++i) {
        se += x[i] * x[i];
        ne += (x[i] - y[i]) * (x[i] - y[i]);
      }
      CHECK(10 * std::log10(ne / se) < -120.0);
    }
  }

  TEST_CASE("istft is the least-squares projection") {
    StftConfig cfg{64, 16};
    Rng rng(4);
    Spectrum s(20, cfg.bins());
    for (auto& v : s.data) v = rng.normal();
    for (int t = 0; t < s.frames; ++t) {
      s.im(t, 0) = 0;
      s.im(t, cfg.bins() - 1) = 0;
    }
    const auto w = istft(s, cfg);
    const auto p = stft(w, cfg);
    const auto pp = stft(istft(p, cfg), cfg);
    // The projection is idempotent, and random spectra are not consistent.
    CHECK(distance_sq(p, pp) < 1e-20 * energy(p));
    CHECK(distance_sq(s, p) > 1e-3 * energy(s));
    // No perturbed waveform has a spectrum closer to s.
    const double best = distance_sq(stft(w, cfg), s);
    for (int trial = 0; trial < 20; ++trial) {
      auto v = w;
      for (auto& x : v.samples) x += 1e-3 * rng.normal();
      CHECK(distance_sq(stft(v, cfg), s) > best);
    }
  }

  TEST_CASE("istft rejects a mismatched spectrum") {
    StftConfig cfg;
    CHECK(testing::error_kind([&] { istft(Spectrum(3, 100), cfg); }) == ErrorKind::kShape);
  }

  TEST_CASE("power-law compression examples") {
    Spectrum s(1, 4);
    s.re(0, 0) = 0;
    s.im(0, 0) = 0;
    s.re(0, 1) = std::cos(1.1);
    s.im(0, 1) = std::sin(1.1);
    s.re(0, 2) = 4;
    s.im(0, 2) = 0;
    s.re(0, 3) = -2.4;
    s.im(0, 3) = 3.2;
    const auto c = power_law_compress(s, 0.3);
    CHECK(c.re(0, 0) == 0.0);
    CHECK(c.im(0, 0) == 0.0);
    CHECK(std::hypot(c.re(0, 1), c.im(0, 1)) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::hypot(c.re(0, 2), c.im(0, 2)) == doctest::Approx(1.5157165665103982).epsilon(1e-14));
    CHECK(std::atan2(c.im(0, 3), c.re(0, 3)) == doctest::Approx(std::atan2(3.2, -2.4)).epsilon(1e-15));

    Spectrum e(1, 1);
    e.re(0, 0) = 1.5157165665103982;
    const auto x = power_law_expand(e, 0.3);
    CHECK(x.re(0, 0) == doctest::Approx(4.0).epsilon(1e-12));

    const auto back = power_law_expand(c, 0.3);
    for (std::size_t i = 0; i < s.data.size(); ++i)
      CHECK(std::abs(back.data[i] - s.data[i]) <= 1e-12 * (1 + std::abs(s.data[i])));
    CHECK(testing::error_kind([&] { power_law_compress(s, 0.0); }) == ErrorKind::kConfig);
    CHECK(testing::error_kind([&] { power_law_compress(s, -1.0); }) == ErrorKind::kConfig);
  }

  TEST_CASE("compression is monotone in magnitude") {
    Spectrum s(1, 200);
    for (int f = 0; f < 200; ++f) s.re(0, f) = 0.01 + f * 0.37;
    const auto c = power_law_compress(s, 0.3);
    for (int f = 1; f < 200; ++f) CHECK(c.re(0, f) > c.re(0, f - 1));
  }

  TEST_CASE("streaming overlap-add matches batch synthesis") {
    StftConfig cfg;
    FrameTransform<double> tr(cfg);
    Rng rng(3);
    const int n = 30;
    std::vector<double> spec(static_cast<std::size_t>(n) * tr.bins() * 2);
    for (auto& v : spec) v = rng.normal();
    std::vector<double> batch(synthesis_length(n, cfg));
    synthesize(tr, n, spec.data(), batch.data());
    std::vector<double> frames(static_cast<std::size_t>(n) * 320), hop(80), streamed;
    tr.inverse(n, spec.data(), frames.data());
    OverlapAdd<double> ola(cfg);
    for (int t = 0; t < n; ++t) {
      ola.push(frames.data() + t * 320, hop.data());
      streamed.insert(streamed.end(), hop.begin(), hop.end());
    }
    std::vector<double> tail(240);
    ola.flush(tail.data());
    streamed.insert(streamed.end(), tail.begin(), tail.end());
    CHECK(streamed == batch);
  }
}
