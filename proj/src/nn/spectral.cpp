#include "tfnet/nn/spectral.hpp"

#include <cmath>
#include <memory>

namespace tfnet::nn {

template <typename T>
Var stft(Graph<T>& g, Var wave, const dsp::FrameTransform<T>& transform) {
  const auto& vw = g.value(wave);
  const Shape s = vw.shape();
  require(s[2] == 1 && s[3] == 1, ErrorKind::kShape, "stft expects a [B, L, 1, 1] waveform");
  const auto& cfg = transform.config();
  const int n = dsp::frame_count(static_cast<std::size_t>(s[1]), cfg);
  require(n > 0, ErrorKind::kShape, "insufficient samples: need at least one window");
  const int w = cfg.window_len;
  std::vector<T> frames(static_cast<std::size_t>(s[0]) * n * w);
  for (int b = 0; b < s[0]; ++b)
    dsp::extract_frames(vw.data() + static_cast<std::size_t>(b) * s[1], n, cfg,
                        frames.data() + static_cast<std::size_t>(b) * n * w);
  Tensor<T> out(Shape{s[0], n, cfg.bins(), 2});
  transform.forward(s[0] * n, frames.data(), out.data());
  const auto* tr = &transform;
  return g.record(std::move(out), {wave}, [=](Graph<T>& g, const Tensor<T>& dy) {
    std::vector<T> dframes(static_cast<std::size_t>(s[0]) * n * w, T(0));
    tr->forward_adjoint(s[0] * n, dy.data(), dframes.data());
    auto& gw = g.grad(wave);
    const int hop = tr->config().hop_len;
    for (int b = 0; b < s[0]; ++b)
      for (int t = 0; t < n; ++t) {
        T* dst = gw.data() + static_cast<std::size_t>(b) * s[1] + static_cast<std::size_t>(t) * hop;
        const T* src = dframes.data() + (static_cast<std::size_t>(b) * n + t) * w;
        for (int i = 0; i < w; ++i) dst[i] += src[i];
      }
  });
}

template <typename T>
Var istft(Graph<T>& g, Var spectrum, const dsp::FrameTransform<T>& transform) {
  const auto& vs = g.value(spectrum);
  const Shape s = vs.shape();
  const auto& cfg = transform.config();
  require(s[2] == cfg.bins() && s[3] == 2 && s[1] > 0, ErrorKind::kShape,
          "istft: spectrum shape " + to_string(s) + " does not match the STFT configuration");
  const int n = s[1];
  const int len = static_cast<int>(dsp::synthesis_length(n, cfg));
  const std::size_t per = static_cast<std::size_t>(n) * s[2] * 2;
  Tensor<T> out(Shape{s[0], len, 1, 1});
  for (int b = 0; b < s[0]; ++b)
    dsp::synthesize(transform, n, vs.data() + b * per, out.data() + static_cast<std::size_t>(b) * len);
  const auto* tr = &transform;
  return g.record(std::move(out), {spectrum}, [=](Graph<T>& g, const Tensor<T>& dy) {
    const auto& c = tr->config();
    const int w = c.window_len;
    const int hop = c.hop_len;
    const auto env = dsp::synthesis_envelope<T>(c, n);
    std::vector<T> dframes(static_cast<std::size_t>(s[0]) * n * w);
    for (int b = 0; b < s[0]; ++b)
      for (int t = 0; t < n; ++t)
        for (int i = 0; i < w; ++i) {
          const std::size_t pos = static_cast<std::size_t>(t) * hop + i;
          const T e = env[pos];
          dframes[(static_cast<std::size_t>(b) * n + t) * w + i] =
              e > dsp::kEnvelopeFloor<T> ? dy[static_cast<std::size_t>(b) * len + pos] / e : T(0);
        }
    tr->inverse_adjoint(s[0] * n, dframes.data(), g.grad(spectrum).data());
  });
}

namespace {

// z -> z * (|z|^2 + eps)^a
template <typename T>
Var power_map(Graph<T>& g, Var x, T a, T eps) {
  const auto& vx = g.value(x);
  require(vx.dim(3) == 2, ErrorKind::kShape, "power-law map expects a trailing re/im axis");
  Tensor<T> out(vx.shape());
  for (std::size_t i = 0; i < vx.size(); i += 2) {
    const T re = vx[i];
    const T im = vx[i + 1];
    const T u = re * re + im * im + eps;
    if (u == T(0)) continue;
    const T sc = std::pow(u, a);
    out[i] = re * sc;
    out[i + 1] = im * sc;
  }
  return g.record(std::move(out), {x}, [x, a, eps](Graph<T>& g, const Tensor<T>& dy) {
    const auto& xv = g.value(x);
    auto& gx = g.grad(x);
    for (std::size_t i = 0; i < xv.size(); i += 2) {
      const T re = xv[i];
      const T im = xv[i + 1];
      const T u = re * re + im * im + eps;
      if (u == T(0)) {
        if (a == T(0)) {
          gx[i] += dy[i];
          gx[i + 1] += dy[i + 1];
        }
        continue;
      }
      const T sc = std::pow(u, a);
      const T q = T(2) * a * sc / u;
      const T jrr = sc + q * re * re;
      const T jii = sc + q * im * im;
      const T jri = q * re * im;
      gx[i] += dy[i] * jrr + dy[i + 1] * jri;
      gx[i + 1] += dy[i] * jri + dy[i + 1] * jii;
    }
  });
}

}  // namespace

template <typename T>
Var power_compress(Graph<T>& g, Var spectrum, T p, T eps) {
  require(p > T(0) && p <= T(1), ErrorKind::kConfig, "power-law exponent must lie in (0, 1]");
  return power_map(g, spectrum, (p - T(1)) / T(2), eps);
}

template <typename T>
Var power_expand(Graph<T>& g, Var spectrum, T p) {
  require(p > T(0) && p <= T(1), ErrorKind::kConfig, "power-law exponent must lie in (0, 1]");
  return power_map(g, spectrum, (T(1) / p - T(1)) / T(2), T(0));
}

template Var stft<float>(Graph<float>&, Var, const dsp::FrameTransform<float>&);
template Var stft<double>(Graph<double>&, Var, const dsp::FrameTransform<double>&);
template Var istft<float>(Graph<float>&, Var, const dsp::FrameTransform<float>&);
template Var istft<double>(Graph<double>&, Var, const dsp::FrameTransform<double>&);
template Var power_compress<float>(Graph<float>&, Var, float, float);
template Var power_compress<double>(Graph<double>&, Var, double, double);
template Var power_expand<float>(Graph<float>&, Var, float);
template Var power_expand<double>(Graph<double>&, Var, double);

}  // namespace tfnet::nn
