#include "tfnet/nn/ops.hpp"

#include <cmath>
#include <memory>

#include "tfnet/core/gemm.hpp"

namespace tfnet::nn {
namespace {

template <typename T>
using Buffer = std::shared_ptr<std::vector<T>>;

template <typename T>
Buffer<T> make_buffer(std::size_t n) {
  return std::make_shared<std::vector<T>>(n, T(0));
}

void check_bias(const Shape& b, int channels, const char* what) {
  require_shape(b, Shape{1, 1, 1, channels}, what);
}

}  // namespace

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  const auto& va = g.value(a);
  const auto& vb = g.value(b);
  require_shape(vb.shape(), va.shape(), "add");
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(a)) accumulate(g.grad(a), dy);
    if (g.requires_grad(b)) accumulate(g.grad(b), dy);
  });
}

template <typename T>
Var sub(Graph<T>& g, Var a, Var b) {
  const auto& va = g.value(a);
  const auto& vb = g.value(b);
  require_shape(vb.shape(), va.shape(), "sub");
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(a)) accumulate(g.grad(a), dy);
    if (g.requires_grad(b)) {
      auto& gb = g.grad(b);
      for (std::size_t i = 0; i < dy.size(); ++i) gb[i] -= dy[i];
    }
  });
}

template <typename T>
Var scale(Graph<T>& g, Var a, T factor) {
  const auto& va = g.value(a);
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * factor;
  return g.record(std::move(out), {a}, [a, factor](Graph<T>& g, const Tensor<T>& dy) {
    auto& ga = g.grad(a);
    for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i] * factor;
  });
}

template <typename T>
Var concat_time(Graph<T>& g, Var a, Var b) {
  const auto& va = g.value(a);
  const auto& vb = g.value(b);
  const Shape sa = va.shape();
  const Shape sb = vb.shape();
  require(sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3], ErrorKind::kShape,
          "concat_time: " + to_string(sa) + " vs " + to_string(sb));
  const Shape so{sa[0], sa[1] + sb[1], sa[2], sa[3]};
  Tensor<T> out(so);
  const std::size_t fa = static_cast<std::size_t>(sa[1]) * sa[2] * sa[3];
  const std::size_t fb = static_cast<std::size_t>(sb[1]) * sb[2] * sb[3];
  for (int n = 0; n < sa[0]; ++n) {
    std::copy_n(va.data() + n * fa, fa, out.data() + n * (fa + fb));
    std::copy_n(vb.data() + n * fb, fb, out.data() + n * (fa + fb) + fa);
  }
  return g.record(std::move(out), {a, b}, [a, b, fa, fb, batch = sa[0]](Graph<T>& g,
                                                                        const Tensor<T>& dy) {
    for (int n = 0; n < batch; ++n) {
      const T* src = dy.data() + n * (fa + fb);
      if (g.requires_grad(a)) {
        T* ga = g.grad(a).data() + n * fa;
        for (std::size_t i = 0; i < fa; ++i) ga[i] += src[i];
      }
      if (g.requires_grad(b)) {
        T* gb = g.grad(b).data() + n * fb;
        for (std::size_t i = 0; i < fb; ++i) gb[i] += src[fa + i];
      }
    }
  });
}

template <typename T>
Var slice_time(Graph<T>& g, Var x, int begin, int end) {
  const auto& vx = g.value(x);
  const Shape s = vx.shape();
  require(0 <= begin && begin <= end && end <= s[1], ErrorKind::kShape, "slice_time range");
  const Shape so{s[0], end - begin, s[2], s[3]};
  Tensor<T> out(so);
  const std::size_t frame = static_cast<std::size_t>(s[2]) * s[3];
  for (int n = 0; n < s[0]; ++n)
    std::copy_n(vx.data() + (static_cast<std::size_t>(n) * s[1] + begin) * frame,
                so[1] * frame, out.data() + static_cast<std::size_t>(n) * so[1] * frame);
  return g.record(std::move(out), {x}, [x, s, so, begin, frame](Graph<T>& g,
                                                                const Tensor<T>& dy) {
    auto& gx = g.grad(x);
    for (int n = 0; n < s[0]; ++n) {
      T* dst = gx.data() + (static_cast<std::size_t>(n) * s[1] + begin) * frame;
      const T* src = dy.data() + static_cast<std::size_t>(n) * so[1] * frame;
      for (std::size_t i = 0; i < so[1] * frame; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var concat_channels(Graph<T>& g, std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::kShape, "concat_channels: no inputs");
  const Shape s0 = g.value(parts[0]).shape();
  int total = 0;
  std::vector<int> widths;
  bool req = false;
  for (Var p : parts) {
    const Shape s = g.value(p).shape();
    require(s[0] == s0[0] && s[1] == s0[1] && s[2] == s0[2], ErrorKind::kShape,
            "concat_channels: mismatched leading dims");
    widths.push_back(s[3]);
    total += s[3];
    req = req || g.requires_grad(p);
  }
  const Shape so{s0[0], s0[1], s0[2], total};
  Tensor<T> out(so);
  const std::size_t rows = static_cast<std::size_t>(s0[0]) * s0[1] * s0[2];
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = g.value(parts[k]);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return g.record_any(std::move(out), req, [ins, widths, rows, total](Graph<T>& g,
                                                                      const Tensor<T>& dy) {
    int off = 0;
    for (std::size_t k = 0; k < ins.size(); ++k) {
      if (g.requires_grad(ins[k])) {
        auto& gk = g.grad(ins[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (int c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += dy[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

template <typename T>
Var slice_channels(Graph<T>& g, Var x, int begin, int end) {
  const auto& vx = g.value(x);
  const Shape s = vx.shape();
  require(0 <= begin && begin < end && end <= s[3], ErrorKind::kShape, "slice_channels range");
  const int w = end - begin;
  const std::size_t rows = static_cast<std::size_t>(s[0]) * s[1] * s[2];
  Tensor<T> out(Shape{s[0], s[1], s[2], w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(vx.data() + r * s[3] + begin, w, out.data() + r * w);
  return g.record(std::move(out), {x}, [x, rows, w, begin, c = s[3]](Graph<T>& g,
                                                                   const Tensor<T>& dy) {
    auto& gx = g.grad(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (int k = 0; k < w; ++k) gx[r * c + begin + k] += dy[r * w + k];
  });
}

template <typename T>
Var slice_freq(Graph<T>& g, Var x, int begin, int end) {
  const auto& vx = g.value(x);
  const Shape s = vx.shape();
  require(0 <= begin && begin < end && end <= s[2], ErrorKind::kShape, "slice_freq range");
  const int w = end - begin;
  const std::size_t rows = static_cast<std::size_t>(s[0]) * s[1];
  const std::size_t c = s[3];
  Tensor<T> out(Shape{s[0], s[1], w, s[3]});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(vx.data() + (r * s[2] + begin) * c, w * c, out.data() + r * w * c);
  return g.record(std::move(out), {x}, [x, rows, w, begin, c, f = s[2]](Graph<T>& g,
                                                                      const Tensor<T>& dy) {
    auto& gx = g.grad(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < w * c; ++k) gx[(r * f + begin) * c + k] += dy[r * w * c + k];
  });
}

template <typename T>
Var pad_freq(Graph<T>& g, Var x, int extra) {
  const auto& vx = g.value(x);
  const Shape s = vx.shape();
  require(extra >= 0, ErrorKind::kShape, "pad_freq: negative padding");
  const int fo = s[2] + extra;
  const std::size_t rows = static_cast<std::size_t>(s[0]) * s[1];
  const std::size_t c = s[3];
  Tensor<T> out(Shape{s[0], s[1], fo, s[3]});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(vx.data() + r * s[2] * c, s[2] * c, out.data() + r * fo * c);
  return g.record(std::move(out), {x}, [x, rows, c, f = s[2], fo](Graph<T>& g,
                                                                const Tensor<T>& dy) {
    auto& gx = g.grad(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < f * c; ++k) gx[r * f * c + k] += dy[r * fo * c + k];
  });
}

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, const Conv2dSpec& spec) {
  const auto& vx = g.value(x);
  const auto& vw = g.value(w);
  const Shape s = vx.shape();
  const Shape sw = vw.shape();
  const int cin = s[3];
  const int cout = sw[3];
  require_shape(sw, Shape{spec.kt, spec.kf, cin, cout}, "conv2d weight");
  check_bias(g.value(b).shape(), cout, "conv2d bias");
  require(spec.stride_f >= 1 && spec.dilation_t >= 1, ErrorKind::kShape, "conv2d stride/dilation");
  const int tout = s[1] - spec.history();
  require(tout >= 1, ErrorKind::kShape, "conv2d: input shorter than temporal receptive field");
  const int fin = s[2];
  const int fout = (fin + spec.stride_f - 1) / spec.stride_f;
  const int k = spec.kt * spec.kf * cin;
  const int rows = s[0] * tout * fout;

  auto col = make_buffer<T>(static_cast<std::size_t>(rows) * k);
  for (int n = 0; n < s[0]; ++n)
    for (int t = 0; t < tout; ++t)
      for (int fo = 0; fo < fout; ++fo) {
        T* dst = col->data() + (static_cast<std::size_t>(n * tout + t) * fout + fo) * k;
        for (int dt = 0; dt < spec.kt; ++dt)
          for (int j = 0; j < spec.kf; ++j) {
            const int fi = fo * spec.stride_f + j;
            if (fi >= fin) continue;
            const T* src = vx.data() + vx.offset(n, t + dt * spec.dilation_t, fi, 0);
            std::copy_n(src, cin, dst + (dt * spec.kf + j) * cin);
          }
      }

  Tensor<T> out(Shape{s[0], tout, fout, cout});
  const auto& vb = g.value(b);
  for (int r = 0; r < rows; ++r) std::copy_n(vb.data(), cout, out.data() + static_cast<std::size_t>(r) * cout);
  kernels::gemm_acc(rows, cout, k, col->data(), k, vw.data(), cout, out.data(), cout);

  return g.record(std::move(out), {x, w, b}, [=](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(w))
      kernels::gemm_tn_acc(k, cout, rows, col->data(), k, dy.data(), cout, g.grad(w).data(), cout);
    if (g.requires_grad(b)) {
      auto& gb = g.grad(b);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cout; ++c) gb[c] += dy[static_cast<std::size_t>(r) * cout + c];
    }
    if (g.requires_grad(x)) {
      std::vector<T> dcol(static_cast<std::size_t>(rows) * k, T(0));
      kernels::gemm_nt_acc(rows, k, cout, dy.data(), cout, g.value(w).data(), cout, dcol.data(), k);
      auto& gx = g.grad(x);
      for (int n = 0; n < s[0]; ++n)
        for (int t = 0; t < tout; ++t)
          for (int fo = 0; fo < fout; ++fo) {
            const T* src = dcol.data() + (static_cast<std::size_t>(n * tout + t) * fout + fo) * k;
            for (int dt = 0; dt < spec.kt; ++dt)
              for (int j = 0; j < spec.kf; ++j) {
                const int fi = fo * spec.stride_f + j;
                if (fi >= fin) continue;
                T* dst = gx.data() + gx.offset(n, t + dt * spec.dilation_t, fi, 0);
                const T* sp = src + (dt * spec.kf + j) * cin;
                for (int c = 0; c < cin; ++c) dst[c] += sp[c];
              }
          }
    }
  });
}

template <typename T>
Var deconv2d(Graph<T>& g, Var x, Var w, Var b, const Conv2dSpec& spec) {
  const auto& vx = g.value(x);
  const auto& vw = g.value(w);
  const Shape s = vx.shape();
  const Shape sw = vw.shape();
  const int cin = s[3];
  const int cout = sw[3];
  const int kf = spec.kf;
  const int stride = spec.stride_f;
  require_shape(sw, Shape{spec.kt, kf, cin, cout}, "deconv2d weight");
  check_bias(g.value(b).shape(), cout, "deconv2d bias");
  const int tin = s[1];
  const int tout = tin - spec.history();
  require(tout >= 1, ErrorKind::kShape, "deconv2d: input shorter than temporal receptive field");
  const int fin = s[2];
  const int fout = fin * stride;
  const int in_rows = s[0] * tin * fin;
  const int wide = kf * cout;

  // Per temporal tap, weights rearranged to [Cin, kf * Cout].
  auto wr = make_buffer<T>(static_cast<std::size_t>(spec.kt) * cin * wide);
  for (int dt = 0; dt < spec.kt; ++dt)
    for (int j = 0; j < kf; ++j)
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
          (*wr)[(static_cast<std::size_t>(dt) * cin + ci) * wide + j * cout + co] =
              vw(dt, j, ci, co);

  Tensor<T> out(Shape{s[0], tout, fout, cout});
  const auto& vb = g.value(b);
  for (std::size_t r = 0; r < out.size() / cout; ++r) std::copy_n(vb.data(), cout, out.data() + r * cout);

  std::vector<T> proj(static_cast<std::size_t>(in_rows) * wide);
  for (int dt = 0; dt < spec.kt; ++dt) {
    std::fill(proj.begin(), proj.end(), T(0));
    kernels::gemm_acc(in_rows, wide, cin, vx.data(), cin,
                      wr->data() + static_cast<std::size_t>(dt) * cin * wide, wide, proj.data(), wide);
    for (int n = 0; n < s[0]; ++n)
      for (int t = 0; t < tout; ++t) {
        const int ti = t + dt * spec.dilation_t;
        for (int fi = 0; fi < fin; ++fi) {
          const T* src = proj.data() + (static_cast<std::size_t>(n * tin + ti) * fin + fi) * wide;
          for (int j = 0; j < kf; ++j) {
            const int fo = fi * stride + j;
            if (fo >= fout) break;
            T* dst = out.data() + out.offset(n, t, fo, 0);
            for (int c = 0; c < cout; ++c) dst[c] += src[j * cout + c];
          }
        }
      }
  }

  return g.record(std::move(out), {x, w, b}, [=](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(b)) {
      auto& gb = g.grad(b);
      for (std::size_t r = 0; r < dy.size() / cout; ++r)
        for (int c = 0; c < cout; ++c) gb[c] += dy[r * cout + c];
    }
    const bool need_w = g.requires_grad(w);
    const bool need_x = g.requires_grad(x);
    if (!need_w && !need_x) return;
    const auto& xv = g.value(x);
    std::vector<T> dproj(static_cast<std::size_t>(in_rows) * wide);
    std::vector<T> dwr(static_cast<std::size_t>(cin) * wide);
    for (int dt = 0; dt < spec.kt; ++dt) {
      std::fill(dproj.begin(), dproj.end(), T(0));
      for (int n = 0; n < s[0]; ++n)
        for (int t = 0; t < tout; ++t) {
          const int ti = t + dt * spec.dilation_t;
          for (int fi = 0; fi < fin; ++fi) {
            T* dst = dproj.data() + (static_cast<std::size_t>(n * tin + ti) * fin + fi) * wide;
            for (int j = 0; j < kf; ++j) {
              const int fo = fi * stride + j;
              if (fo >= fout) break;
              const T* src = dy.data() + dy.offset(n, t, fo, 0);
              for (int c = 0; c < cout; ++c) dst[j * cout + c] += src[c];
            }
          }
        }
      const T* wdt = wr->data() + static_cast<std::size_t>(dt) * cin * wide;
      if (need_x)
        kernels::gemm_nt_acc(in_rows, cin, wide, dproj.data(), wide, wdt, wide, g.grad(x).data(), cin);
      if (need_w) {
        std::fill(dwr.begin(), dwr.end(), T(0));
        kernels::gemm_tn_acc(cin, wide, in_rows, xv.data(), cin, dproj.data(), wide, dwr.data(), wide);
        auto& gw = g.grad(w);
        for (int j = 0; j < kf; ++j)
          for (int ci = 0; ci < cin; ++ci)
            for (int co = 0; co < cout; ++co)
              gw(dt, j, ci, co) += dwr[static_cast<std::size_t>(ci) * wide + j * cout + co];
      }
    }
  });
}

template <typename T>
Var depthwise_conv_time(Graph<T>& g, Var x, Var w, Var b, int dilation) {
  const auto& vx = g.value(x);
  const auto& vw = g.value(w);
  const Shape s = vx.shape();
  const int c = s[3];
  const int kt = vw.dim(0);
  require_shape(vw.shape(), Shape{kt, 1, 1, c}, "depthwise weight");
  check_bias(g.value(b).shape(), c, "depthwise bias");
  const int hist = (kt - 1) * dilation;
  const int tout = s[1] - hist;
  require(tout >= 1, ErrorKind::kShape, "depthwise: input shorter than receptive field");
  const int f = s[2];
  Tensor<T> out(Shape{s[0], tout, f, c});
  const auto& vb = g.value(b);
  for (int n = 0; n < s[0]; ++n)
    for (int t = 0; t < tout; ++t)
      for (int fi = 0; fi < f; ++fi) {
        T* dst = out.data() + out.offset(n, t, fi, 0);
        for (int ch = 0; ch < c; ++ch) dst[ch] = vb[ch];
        for (int dt = 0; dt < kt; ++dt) {
          const T* src = vx.data() + vx.offset(n, t + dt * dilation, fi, 0);
          const T* wk = vw.data() + static_cast<std::size_t>(dt) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch] * wk[ch];
        }
      }
  return g.record(std::move(out), {x, w, b}, [=](Graph<T>& g, const Tensor<T>& dy) {
    const auto& xv = g.value(x);
    const auto& wv = g.value(w);
    const bool nx = g.requires_grad(x), nw = g.requires_grad(w), nb = g.requires_grad(b);
    for (int n = 0; n < s[0]; ++n)
      for (int t = 0; t < tout; ++t)
        for (int fi = 0; fi < f; ++fi) {
          const T* d = dy.data() + dy.offset(n, t, fi, 0);
          if (nb) {
            auto& gb = g.grad(b);
            for (int ch = 0; ch < c; ++ch) gb[ch] += d[ch];
          }
          for (int dt = 0; dt < kt; ++dt) {
            const std::size_t xo = xv.offset(n, t + dt * dilation, fi, 0);
            if (nw) {
              T* gw = g.grad(w).data() + static_cast<std::size_t>(dt) * c;
              for (int ch = 0; ch < c; ++ch) gw[ch] += d[ch] * xv[xo + ch];
            }
            if (nx) {
              T* gx = g.grad(x).data() + xo;
              const T* wk = wv.data() + static_cast<std::size_t>(dt) * c;
              for (int ch = 0; ch < c; ++ch) gx[ch] += d[ch] * wk[ch];
            }
          }
        }
  });
}

template <typename T>
Var conv1x1(Graph<T>& g, Var x, Var w, Var b) {
  const auto& vx = g.value(x);
  const auto& vw = g.value(w);
  const Shape s = vx.shape();
  const int cin = s[3];
  const int cout = vw.dim(3);
  require_shape(vw.shape(), Shape{1, 1, cin, cout}, "conv1x1 weight");
  check_bias(g.value(b).shape(), cout, "conv1x1 bias");
  const int rows = s[0] * s[1] * s[2];
  Tensor<T> out(Shape{s[0], s[1], s[2], cout});
  const auto& vb = g.value(b);
  for (int r = 0; r < rows; ++r) std::copy_n(vb.data(), cout, out.data() + static_cast<std::size_t>(r) * cout);
  kernels::gemm_acc(rows, cout, cin, vx.data(), cin, vw.data(), cout, out.data(), cout);
  return g.record(std::move(out), {x, w, b}, [=](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(w))
      kernels::gemm_tn_acc(cin, cout, rows, g.value(x).data(), cin, dy.data(), cout,
                           g.grad(w).data(), cout);
    if (g.requires_grad(b)) {
      auto& gb = g.grad(b);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cout; ++c) gb[c] += dy[static_cast<std::size_t>(r) * cout + c];
    }
    if (g.requires_grad(x))
      kernels::gemm_nt_acc(rows, cin, cout, dy.data(), cout, g.value(w).data(), cout,
                           g.grad(x).data(), cin);
  });
}

template <typename T>
Var prelu(Graph<T>& g, Var x, Var slopes) {
  const auto& vx = g.value(x);
  const auto& va = g.value(slopes);
  const int c = vx.dim(3);
  check_bias(va.shape(), c, "prelu slopes");
  Tensor<T> out(vx.shape());
  for (std::size_t i = 0; i < vx.size(); ++i) {
    const T v = vx[i];
    out[i] = v >= T(0) ? v : va[i % c] * v;
  }
  return g.record(std::move(out), {x, slopes}, [x, slopes, c](Graph<T>& g, const Tensor<T>& dy) {
    const auto& xv = g.value(x);
    const auto& av = g.value(slopes);
    if (g.requires_grad(x)) {
      auto& gx = g.grad(x);
      for (std::size_t i = 0; i < dy.size(); ++i) gx[i] += xv[i] >= T(0) ? dy[i] : av[i % c] * dy[i];
    }
    if (g.requires_grad(slopes)) {
      auto& ga = g.grad(slopes);
      for (std::size_t i = 0; i < dy.size(); ++i)
        if (xv[i] < T(0)) ga[i % c] += dy[i] * xv[i];
    }
  });
}

template <typename T>
Var channel_norm(Graph<T>& g, Var x, Var gain, Var bias, T eps) {
  const auto& vx = g.value(x);
  const int c = vx.dim(3);
  check_bias(g.value(gain).shape(), c, "channel_norm gain");
  check_bias(g.value(bias).shape(), c, "channel_norm bias");
  const std::size_t rows = vx.size() / c;
  const auto& vg = g.value(gain);
  const auto& vb = g.value(bias);
  auto xhat = make_buffer<T>(vx.size());
  auto inv = make_buffer<T>(rows);
  Tensor<T> out(vx.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = vx.data() + r * c;
    T mean = 0;
    for (int k = 0; k < c; ++k) mean += xr[k];
    mean /= T(c);
    T var = 0;
    for (int k = 0; k < c; ++k) var += (xr[k] - mean) * (xr[k] - mean);
    var /= T(c);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv)[r] = is;
    for (int k = 0; k < c; ++k) {
      const T h = (xr[k] - mean) * is;
      (*xhat)[r * c + k] = h;
      out[r * c + k] = h * vg[k] + vb[k];
    }
  }
  return g.record(std::move(out), {x, gain, bias}, [=](Graph<T>& g, const Tensor<T>& dy) {
    const auto& gv = g.value(gain);
    if (g.requires_grad(gain)) {
      auto& gg = g.grad(gain);
      for (std::size_t r = 0; r < rows; ++r)
        for (int k = 0; k < c; ++k) gg[k] += dy[r * c + k] * (*xhat)[r * c + k];
    }
    if (g.requires_grad(bias)) {
      auto& gb = g.grad(bias);
      for (std::size_t r = 0; r < rows; ++r)
        for (int k = 0; k < c; ++k) gb[k] += dy[r * c + k];
    }
    if (g.requires_grad(x)) {
      auto& gx = g.grad(x);
      for (std::size_t r = 0; r < rows; ++r) {
        T m1 = 0, m2 = 0;
        for (int k = 0; k < c; ++k) {
          const T dh = dy[r * c + k] * gv[k];
          m1 += dh;
          m2 += dh * (*xhat)[r * c + k];
        }
        m1 /= T(c);
        m2 /= T(c);
        for (int k = 0; k < c; ++k) {
          const T dh = dy[r * c + k] * gv[k];
          gx[r * c + k] += (*inv)[r] * (dh - m1 - (*xhat)[r * c + k] * m2);
        }
      }
    }
  });
}

template <typename T>
Var batch_norm(Graph<T>& g, Var x, Var gain, Var bias, Tensor<T>& running_mean,
               Tensor<T>& running_var, T momentum, T eps) {
  const auto& vx = g.value(x);
  const int c = vx.dim(3);
  check_bias(g.value(gain).shape(), c, "batch_norm gain");
  check_bias(g.value(bias).shape(), c, "batch_norm bias");
  check_bias(running_mean.shape(), c, "batch_norm running mean");
  check_bias(running_var.shape(), c, "batch_norm running var");
  const std::size_t rows = vx.size() / c;
  const auto& vg = g.value(gain);
  const auto& vb = g.value(bias);
  auto xhat = make_buffer<T>(vx.size());
  auto inv = make_buffer<T>(c);
  Tensor<T> out(vx.shape());
  const bool train = g.training();

  std::vector<T> mean(c, T(0)), var(c, T(0));
  if (train) {
    for (std::size_t r = 0; r < rows; ++r)
      for (int k = 0; k < c; ++k) mean[k] += vx[r * c + k];
    for (int k = 0; k < c; ++k) mean[k] /= T(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (int k = 0; k < c; ++k) {
        const T d = vx[r * c + k] - mean[k];
        var[k] += d * d;
      }
    for (int k = 0; k < c; ++k) {
      const T unbiased = rows > 1 ? var[k] / T(rows - 1) : T(0);
      var[k] /= T(rows);
      running_mean[k] = (T(1) - momentum) * running_mean[k] + momentum * mean[k];
      running_var[k] = (T(1) - momentum) * running_var[k] + momentum * unbiased;
    }
  } else {
    for (int k = 0; k < c; ++k) {
      mean[k] = running_mean[k];
      var[k] = running_var[k];
    }
  }
  for (int k = 0; k < c; ++k) (*inv)[k] = T(1) / std::sqrt(var[k] + eps);
  for (std::size_t r = 0; r < rows; ++r)
    for (int k = 0; k < c; ++k) {
      const T h = (vx[r * c + k] - mean[k]) * (*inv)[k];
      (*xhat)[r * c + k] = h;
      out[r * c + k] = h * vg[k] + vb[k];
    }

  return g.record(std::move(out), {x, gain, bias}, [=](Graph<T>& g, const Tensor<T>& dy) {
    const auto& gv = g.value(gain);
    std::vector<T> sum_dy(c, T(0)), sum_dy_h(c, T(0));
    for (std::size_t r = 0; r < rows; ++r)
      for (int k = 0; k < c; ++k) {
        sum_dy[k] += dy[r * c + k];
        sum_dy_h[k] += dy[r * c + k] * (*xhat)[r * c + k];
      }
    if (g.requires_grad(gain)) {
      auto& gg = g.grad(gain);
      for (int k = 0; k < c; ++k) gg[k] += sum_dy_h[k];
    }
    if (g.requires_grad(bias)) {
      auto& gb = g.grad(bias);
      for (int k = 0; k < c; ++k) gb[k] += sum_dy[k];
    }
    if (g.requires_grad(x)) {
      auto& gx = g.grad(x);
      for (std::size_t r = 0; r < rows; ++r)
        for (int k = 0; k < c; ++k) {
          const T scale_k = gv[k] * (*inv)[k];
          if (train) {
            gx[r * c + k] += scale_k * (dy[r * c + k] - sum_dy[k] / T(rows) -
                                        (*xhat)[r * c + k] * sum_dy_h[k] / T(rows));
          } else {
            gx[r * c + k] += scale_k * dy[r * c + k];
          }
        }
    }
  });
}

namespace {

template <typename T>
inline T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
GruOutput<T> gru(Graph<T>& g, Var x, const Tensor<T>& h0, Var w_input, Var w_hidden, Var bias) {
  const auto& vx = g.value(x);
  const Shape s = vx.shape();
  require(s[2] == 1, ErrorKind::kShape, "gru expects a collapsed frequency axis");
  const int batch = s[0];
  const int steps = s[1];
  const int cin = s[3];
  const int h = g.value(w_hidden).dim(2);
  const int h3 = 3 * h;
  require_shape(g.value(w_input).shape(), Shape{1, 1, cin, h3}, "gru input weights");
  require_shape(g.value(w_hidden).shape(), Shape{1, 1, h, h3}, "gru hidden weights");
  check_bias(g.value(bias).shape(), h3, "gru bias");
  require_shape(h0.shape(), Shape{batch, 1, 1, h}, "gru initial state");

  const int rows = batch * steps;
  std::vector<T> gx(static_cast<std::size_t>(rows) * h3);
  const auto& vbias = g.value(bias);
  for (int r = 0; r < rows; ++r) std::copy_n(vbias.data(), h3, gx.data() + static_cast<std::size_t>(r) * h3);
  kernels::gemm_acc(rows, h3, cin, vx.data(), cin, g.value(w_input).data(), h3, gx.data(), h3);

  // Caches laid out [b, t, H]; prev holds h_{t-1}.
  const std::size_t cells = static_cast<std::size_t>(rows) * h;
  auto z = make_buffer<T>(cells);
  auto rg = make_buffer<T>(cells);
  auto nv = make_buffer<T>(cells);
  auto rh = make_buffer<T>(cells);
  auto prev = make_buffer<T>(cells);
  Tensor<T> out(Shape{batch, steps, 1, h});
  const T* wh = g.value(w_hidden).data();
  std::vector<T> hp(static_cast<std::size_t>(batch) * h);
  std::vector<T> gh(static_cast<std::size_t>(batch) * 2 * h);
  std::vector<T> gn(static_cast<std::size_t>(batch) * h);
  std::vector<T> rh_t(static_cast<std::size_t>(batch) * h);
  std::copy_n(h0.data(), hp.size(), hp.data());

  for (int t = 0; t < steps; ++t) {
    std::fill(gh.begin(), gh.end(), T(0));
    kernels::gemm_acc(batch, 2 * h, h, hp.data(), h, wh, h3, gh.data(), 2 * h);
    for (int b = 0; b < batch; ++b) {
      const std::size_t row = static_cast<std::size_t>(b) * steps + t;
      const T* gxr = gx.data() + row * h3;
      const T* hpr = hp.data() + static_cast<std::size_t>(b) * h;
      const T* ghr = gh.data() + static_cast<std::size_t>(b) * 2 * h;
      for (int k = 0; k < h; ++k) {
        const T zv = sigmoid(gxr[k] + ghr[k]);
        const T rv = sigmoid(gxr[h + k] + ghr[h + k]);
        (*z)[row * h + k] = zv;
        (*rg)[row * h + k] = rv;
        (*prev)[row * h + k] = hpr[k];
        rh_t[static_cast<std::size_t>(b) * h + k] = rv * hpr[k];
        (*rh)[row * h + k] = rv * hpr[k];
      }
    }
    std::fill(gn.begin(), gn.end(), T(0));
    kernels::gemm_acc(batch, h, h, rh_t.data(), h, wh + 2 * h, h3, gn.data(), h);
    for (int b = 0; b < batch; ++b) {
      const std::size_t row = static_cast<std::size_t>(b) * steps + t;
      const T* gxr = gx.data() + row * h3;
      T* hpr = hp.data() + static_cast<std::size_t>(b) * h;
      T* hr = out.data() + row * h;
      for (int k = 0; k < h; ++k) {
        const T n = std::tanh(gxr[2 * h + k] + gn[static_cast<std::size_t>(b) * h + k]);
        (*nv)[row * h + k] = n;
        const T zv = (*z)[row * h + k];
        hr[k] = (T(1) - zv) * n + zv * hpr[k];
      }
      std::copy_n(hr, h, hpr);
    }
  }

  Tensor<T> last(Shape{batch, 1, 1, h}, std::vector<T>(hp.begin(), hp.end()));

  Var y = g.record(std::move(out), {x, w_input, w_hidden, bias}, [=](Graph<T>& g,
                                                                    const Tensor<T>& dy) {
    const T* whv = g.value(w_hidden).data();
    std::vector<T> dgx(static_cast<std::size_t>(rows) * h3, T(0));
    std::vector<T> dh(static_cast<std::size_t>(batch) * h, T(0));
    std::vector<T> dzr(static_cast<std::size_t>(batch) * 2 * h);
    std::vector<T> dan(static_cast<std::size_t>(batch) * h);
    std::vector<T> drh(static_cast<std::size_t>(batch) * h);
    std::vector<T> hprev(static_cast<std::size_t>(batch) * h);
    std::vector<T> rhm(static_cast<std::size_t>(batch) * h);
    std::vector<T> dwh(static_cast<std::size_t>(h) * h3, T(0));
    std::vector<T> dwh_zr(static_cast<std::size_t>(h) * 2 * h);
    std::vector<T> dwh_n(static_cast<std::size_t>(h) * h);
    const bool need_wh = g.requires_grad(w_hidden);

    for (int t = steps - 1; t >= 0; --t) {
      for (int b = 0; b < batch; ++b) {
        const std::size_t row = static_cast<std::size_t>(b) * steps + t;
        for (int k = 0; k < h; ++k) {
          const std::size_t bi = static_cast<std::size_t>(b) * h + k;
          const std::size_t ci = row * h + k;
          const T d = dh[bi] + dy[ci];
          const T zv = (*z)[ci];
          const T n = (*nv)[ci];
          const T hpv = (*prev)[ci];
          const T dz = d * (hpv - n);
          const T dn = d * (T(1) - zv);
          dan[bi] = dn * (T(1) - n * n);
          dzr[static_cast<std::size_t>(b) * 2 * h + k] = dz * zv * (T(1) - zv);
          dh[bi] = d * zv;  // direct path through z * h_{t-1}
          hprev[bi] = hpv;
          rhm[bi] = (*rh)[ci];
        }
      }
      // d(r * h) = dan * Un^T
      std::fill(drh.begin(), drh.end(), T(0));
      kernels::gemm_nt_acc(batch, h, h, dan.data(), h, whv + 2 * h, h3, drh.data(), h);
      for (int b = 0; b < batch; ++b) {
        const std::size_t row = static_cast<std::size_t>(b) * steps + t;
        for (int k = 0; k < h; ++k) {
          const std::size_t bi = static_cast<std::size_t>(b) * h + k;
          const T rv = (*rg)[row * h + k];
          const T dr = drh[bi] * hprev[bi];
          dh[bi] += drh[bi] * rv;
          dzr[static_cast<std::size_t>(b) * 2 * h + h + k] = dr * rv * (T(1) - rv);
          T* dg = dgx.data() + row * h3;
          dg[k] = dzr[static_cast<std::size_t>(b) * 2 * h + k];
          dg[h + k] = dzr[static_cast<std::size_t>(b) * 2 * h + h + k];
          dg[2 * h + k] = dan[bi];
        }
      }
      // dh_{t-1} += [dz, dr] * [Uz, Ur]^T
      kernels::gemm_nt_acc(batch, h, 2 * h, dzr.data(), 2 * h, whv, h3, dh.data(), h);
      if (need_wh) {
        std::fill(dwh_zr.begin(), dwh_zr.end(), T(0));
        std::fill(dwh_n.begin(), dwh_n.end(), T(0));
        kernels::gemm_tn_acc(h, 2 * h, batch, hprev.data(), h, dzr.data(), 2 * h, dwh_zr.data(), 2 * h);
        kernels::gemm_tn_acc(h, h, batch, rhm.data(), h, dan.data(), h, dwh_n.data(), h);
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < 2 * h; ++j) dwh[static_cast<std::size_t>(i) * h3 + j] += dwh_zr[static_cast<std::size_t>(i) * 2 * h + j];
          for (int j = 0; j < h; ++j) dwh[static_cast<std::size_t>(i) * h3 + 2 * h + j] += dwh_n[static_cast<std::size_t>(i) * h + j];
        }
      }
    }
    if (need_wh) {
      auto& gw = g.grad(w_hidden);
      for (std::size_t i = 0; i < dwh.size(); ++i) gw[i] += dwh[i];
    }
    if (g.requires_grad(bias)) {
      auto& gb = g.grad(bias);
      for (int r = 0; r < rows; ++r)
        for (int k = 0; k < h3; ++k) gb[k] += dgx[static_cast<std::size_t>(r) * h3 + k];
    }
    if (g.requires_grad(w_input))
      kernels::gemm_tn_acc(cin, h3, rows, g.value(x).data(), cin, dgx.data(), h3,
                           g.grad(w_input).data(), h3);
    if (g.requires_grad(x))
      kernels::gemm_nt_acc(rows, cin, h3, dgx.data(), h3, g.value(w_input).data(), h3,
                           g.grad(x).data(), cin);
  });
  return GruOutput<T>{y, std::move(last)};
}

template <typename T>
Var straight_through(Graph<T>& g, Var x, Tensor<T> replacement) {
  require_shape(replacement.shape(), g.value(x).shape(), "straight_through");
  return g.record(std::move(replacement), {x}, [x](Graph<T>& g, const Tensor<T>& dy) {
    accumulate(g.grad(x), dy);
  });
}

template <typename T>
Var mask_add(Graph<T>& g, Var x, const Tensor<T>& mask, Var w) {
  const auto& vx = g.value(x);
  const Shape s = vx.shape();
  const int c = s[3];
  require_shape(mask.shape(), Shape{s[0], s[1], 1, 1}, "mask_add mask");
  check_bias(g.value(w).shape(), c, "mask_add weights");
  const auto& vw = g.value(w);
  Tensor<T> out(s);
  const std::size_t per_frame = static_cast<std::size_t>(s[2]) * c;
  for (std::size_t fr = 0; fr < mask.size(); ++fr)
    for (std::size_t i = 0; i < per_frame; ++i)
      out[fr * per_frame + i] = vx[fr * per_frame + i] + mask[fr] * vw[i % c];
  auto m = std::make_shared<Tensor<T>>(mask);
  return g.record(std::move(out), {x, w}, [=](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(x)) accumulate(g.grad(x), dy);
    if (g.requires_grad(w)) {
      auto& gw = g.grad(w);
      for (std::size_t fr = 0; fr < m->size(); ++fr)
        for (std::size_t i = 0; i < per_frame; ++i) gw[i % c] += dy[fr * per_frame + i] * (*m)[fr];
    }
  });
}

template <typename T>
Var frame_mask(Graph<T>& g, Var x, const Tensor<T>& mask) {
  const auto& vx = g.value(x);
  const Shape s = vx.shape();
  require_shape(mask.shape(), Shape{s[0], s[1], 1, 1}, "frame_mask mask");
  const std::size_t per_frame = static_cast<std::size_t>(s[2]) * s[3];
  Tensor<T> out(s);
  for (std::size_t fr = 0; fr < mask.size(); ++fr)
    for (std::size_t i = 0; i < per_frame; ++i)
      out[fr * per_frame + i] = vx[fr * per_frame + i] * mask[fr];
  auto m = std::make_shared<Tensor<T>>(mask);
  return g.record(std::move(out), {x}, [=](Graph<T>& g, const Tensor<T>& dy) {
    auto& gx = g.grad(x);
    for (std::size_t fr = 0; fr < m->size(); ++fr)
      for (std::size_t i = 0; i < per_frame; ++i) gx[fr * per_frame + i] += dy[fr * per_frame + i] * (*m)[fr];
  });
}

template <typename T>
Var mse(Graph<T>& g, Var a, Var b) {
  const auto& va = g.value(a);
  const auto& vb = g.value(b);
  require_shape(vb.shape(), va.shape(), "mse");
  T acc = 0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const T d = va[i] - vb[i];
    acc += d * d;
  }
  const T n = static_cast<T>(va.size());
  Tensor<T> out(Shape{1, 1, 1, 1}, acc / n);
  return g.record(std::move(out), {a, b}, [a, b, n](Graph<T>& g, const Tensor<T>& dy) {
    const auto& av = g.value(a);
    const auto& bv = g.value(b);
    const T k = T(2) * dy[0] / n;
    if (g.requires_grad(a)) {
      auto& ga = g.grad(a);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += k * (av[i] - bv[i]);
    }
    if (g.requires_grad(b)) {
      auto& gb = g.grad(b);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= k * (av[i] - bv[i]);
    }
  });
}

template <typename T>
Var weighted_sum(Graph<T>& g, Var x, const Tensor<T>& weights) {
  const auto& vx = g.value(x);
  require_shape(weights.shape(), vx.shape(), "weighted_sum");
  T acc = 0;
  for (std::size_t i = 0; i < vx.size(); ++i) acc += vx[i] * weights[i];
  auto w = std::make_shared<Tensor<T>>(weights);
  return g.record(Tensor<T>(Shape{1, 1, 1, 1}, acc), {x}, [x, w](Graph<T>& g, const Tensor<T>& dy) {
    auto& gx = g.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dy[0] * (*w)[i];
  });
}

#define TFNET_INSTANTIATE_OPS(T)                                                              \
  template Var add<T>(Graph<T>&, Var, Var);                                                   \
  template Var sub<T>(Graph<T>&, Var, Var);                                                   \
  template Var scale<T>(Graph<T>&, Var, T);                                                   \
  template Var concat_time<T>(Graph<T>&, Var, Var);                                           \
  template Var slice_time<T>(Graph<T>&, Var, int, int);                                       \
  template Var concat_channels<T>(Graph<T>&, std::span<const Var>);                           \
  template Var slice_channels<T>(Graph<T>&, Var, int, int);                                   \
  template Var slice_freq<T>(Graph<T>&, Var, int, int);                                       \
  template Var pad_freq<T>(Graph<T>&, Var, int);                                              \
  template Var conv2d<T>(Graph<T>&, Var, Var, Var, const Conv2dSpec&);                        \
  template Var deconv2d<T>(Graph<T>&, Var, Var, Var, const Conv2dSpec&);                      \
  template Var depthwise_conv_time<T>(Graph<T>&, Var, Var, Var, int);                         \
  template Var conv1x1<T>(Graph<T>&, Var, Var, Var);                                          \
  template Var prelu<T>(Graph<T>&, Var, Var);                                                 \
  template Var channel_norm<T>(Graph<T>&, Var, Var, Var, T);                                  \
  template Var batch_norm<T>(Graph<T>&, Var, Var, Var, Tensor<T>&, Tensor<T>&, T, T);         \
  template GruOutput<T> gru<T>(Graph<T>&, Var, const Tensor<T>&, Var, Var, Var);              \
  template Var straight_through<T>(Graph<T>&, Var, Tensor<T>);                                \
  template Var mask_add<T>(Graph<T>&, Var, const Tensor<T>&, Var);                            \
  template Var frame_mask<T>(Graph<T>&, Var, const Tensor<T>&);                               \
  template Var mse<T>(Graph<T>&, Var, Var);                                                   \
  template Var weighted_sum<T>(Graph<T>&, Var, const Tensor<T>&);

TFNET_INSTANTIATE_OPS(float)
TFNET_INSTANTIATE_OPS(double)

}  // namespace tfnet::nn
