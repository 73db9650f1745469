// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Usage: tfnet_acceptance [criterion numbers...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "tfnet/bitstream/bitstream.hpp"
#include "tfnet/channel/channel.hpp"
#include "tfnet/codec/codec.hpp"
#include "tfnet/dsp/stft.hpp"
#include "tfnet/train/ablation.hpp"
#include "tfnet/train/data.hpp"
#include "tfnet/train/gradsuite.hpp"
#include "tfnet/train/trainer.hpp"

using namespace tfnet;
using nn::Mode;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::vector<double> noise(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = scale * rng.normal();
  return x;
}

Tensor<double> noise_tensor(const Shape& s, std::uint64_t seed) {
  return Tensor<double>(s, noise(numel(s), seed, 1.0));
}

// --- 1 ----------------------------------------------------------------------

void bitrate(Outcome& o) {
  const auto speech = train::synth_speech(10.0, 1);
  for (int size : {1024, 32}) {
    codec::CodecConfig cfg;
    cfg.vq_size = size;
    codec::Codec<float> model(cfg, 1);
    bitstream::StreamHeader h;
    h.codebook_size = size;
    h.num_samples = static_cast<std::uint32_t>(speech.size());
    const auto bytes = bitstream::serialize(bitstream::packetize(model.encode(speech), h));
    const auto parsed = bitstream::parse(bytes);
    const double kbps = bitstream::payload_kbps(parsed);
    const double want = size == 1024 ? 6.0 : 3.0;
    o.detail << " S=" << size << ": " << parsed.packets.size() * h.payload_bits() << " bits, " << kbps << " kbps;";
    o.expect(kbps == want, "measured bitrate for S=" + std::to_string(size));
    o.expect(kbps == cfg.bitrate_kbps(), "formula for S=" + std::to_string(size));
  }
}

// --- 2 ----------------------------------------------------------------------

/// Perturbs frame `frame` of x and reports whether any earlier output frame
/// changed (must not) and whether a later one did (sanity). A quantized path
/// may absorb the perturbation, so the sanity half is optional.
bool causal(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& x, int frame,
            bool need_effect = true) {
  auto y = x;
  for (int b = 0; b < x.dim(0); ++b)
    for (int q = 0; q < x.dim(2); ++q)
      for (int c = 0; c < x.dim(3); ++c) y(b, frame, q, c) += 0.5;
  const auto a = f(x), p = f(y);
  bool before = true, after = false;
  for (int b = 0; b < a.dim(0); ++b)
    for (int t = 0; t < a.dim(1); ++t)
      for (int q = 0; q < a.dim(2); ++q)
        for (int c = 0; c < a.dim(3); ++c) {
          const bool same = a(b, t, q, c) == p(b, t, q, c);
          if (t < frame) before = before && same;
          else after = after || !same;
        }
  return before && (after || !need_effect);
}

template <typename Layer>
std::function<Tensor<double>(const Tensor<double>&)> stateful(Layer& l) {
  return [&l](const Tensor<double>& x) {
    nn::Graph<double> g(Mode::kEval, false);
    nn::StreamState<double> st;
    return g.value(l.forward(g, g.constant(x), st));
  };
}

void latency(Outcome& o) {
  Rng rng(2);
  codec::CodecConfig cfg;
  const auto tcfg = cfg.temporal_config();
  nn::Conv2d<double> conv("conv", 2, 16, nn::Conv2dSpec{2, 5, 2, 1}, false, rng);
  nn::Conv2d<double> deconv("deconv", 16, 2, nn::Conv2dSpec{2, 5, 2, 1}, true, rng);
  nn::DepthwiseTime<double> dw("dw", 8, 3, 4, rng);
  nn::Gru<double> gru("gru", 8, 8, rng);
  temporal::TcmBlock<double> tcm("tcm", 192, 36, 3, 8, rng);
  temporal::TcmGroup<double> group("group", tcfg, rng);
  temporal::GGruBlock<double> ggru("ggru", 192, 4, rng);
  temporal::TemporalStack<double> stack("stack", "TGTG", tcfg, true, rng);
  codec::Encoder<double> enc("enc", cfg, rng);
  codec::Decoder<double> dec("dec", cfg, rng);
  codec::Codec<double> model(cfg, 3);
  auto full = [&](const Tensor<double>& s) {
    nn::Graph<double> g(Mode::kEval, false);
    nn::StreamState<double> es, ds;
    auto lat = model.project_down(g, model.encode_features(g, g.constant(s), es));
    auto q = vq::quantize(g, lat, model.codebook());
    Tensor<double> mask(Shape{s.dim(0), s.dim(1), 1, 1}, 1.0);
    return g.value(model.decode_latent(g, q.output, mask, ds));
  };
  const std::vector<std::pair<std::string, std::function<bool(int)>>> layers = {
      {"conv2d", [&](int t) { return causal(stateful(conv), noise_tensor({2, 40, 16, 2}, 4), t); }},
      {"deconv2d", [&](int t) { return causal(stateful(deconv), noise_tensor({2, 40, 8, 16}, 5), t); }},
      {"depthwise", [&](int t) { return causal(stateful(dw), noise_tensor({2, 40, 1, 8}, 6), t); }},
      {"gru", [&](int t) { return causal(stateful(gru), noise_tensor({2, 40, 1, 8}, 7), t); }},
      {"tcm_block", [&](int t) { return causal(stateful(tcm), noise_tensor({1, 40, 1, 192}, 8), t); }},
      {"tcm_group", [&](int t) { return causal(stateful(group), noise_tensor({1, 40, 1, 192}, 9), t); }},
      {"ggru", [&](int t) { return causal(stateful(ggru), noise_tensor({1, 40, 1, 192}, 10), t); }},
      {"stack", [&](int t) { return causal(stateful(stack), noise_tensor({1, 40, 1, 192}, 11), t); }},
      {"encoder", [&](int t) { return causal(stateful(enc), noise_tensor({1, 40, 160, 2}, 12), t); }},
      {"decoder", [&](int t) { return causal(stateful(dec), noise_tensor({1, 40, 1, 192}, 13), t); }},
      {"codec", [&](int t) { return causal(full, noise_tensor({1, 40, 160, 2}, 14), t, false); }},
  };
  int checked = 0;
  for (const auto& [name, test] : layers)
    for (int t : {0, 17, 39}) {
      o.expect(test(t), "causality of " + name + " at frame " + std::to_string(t));
      ++checked;
    }
  o.detail << " " << checked << " perturbation checks over " << layers.size() << " layer types;";

  // Waveform truncation sweep through encode -> decode.
  codec::Codec<float> wave_model(cfg, 4);
  const auto x = train::synth_speech(1.0, 5);
  const auto ref = wave_model.decode(wave_model.encode(x), {});
  int lookahead = 0, cuts = 0;
  for (std::size_t n = 1000; n < x.size(); n += 1337) {
    const std::vector<double> cut(x.begin(), x.begin() + n);
    const auto y = wave_model.decode(wave_model.encode(cut), {});
    std::size_t first = y.size();
    for (std::size_t i = 0; i < std::min(y.size(), ref.size()); ++i)
      if (y[i] != ref[i]) {
        first = i;
        break;
      }
    lookahead = std::max(lookahead, static_cast<int>(n) - static_cast<int>(first));
    ++cuts;
  }
  o.detail << " truncation sweep (" << cuts << " cuts): max look-ahead " << lookahead << " samples ("
           << 1000.0 * lookahead / cfg.sample_rate << " ms);";
  o.expect(lookahead <= cfg.stft.window_len, "look-ahead within one window");
}

// --- 3 ----------------------------------------------------------------------

void streaming(Outcome& o) {
  codec::CodecConfig cfg;
  const int hop = cfg.stft.hop_len, w = cfg.stft.window_len;
  codec::Codec<float> model(cfg, 6);
  const auto x = train::synth_speech(2.0, 6);
  const auto idx = model.encode(x);
  codec::StreamEncoder<float> enc(model);
  std::vector<std::int32_t> streamed;
  std::vector<double> padded(x);
  padded.resize(static_cast<std::size_t>(model.frames_for(x.size())) * hop + (w - hop), 0.0);
  for (std::size_t off = 0; off < padded.size(); off += hop)
    if (auto f = enc.push(std::span<const double>(padded).subspan(off, hop)))
      streamed.insert(streamed.end(), f->begin(), f->end());
  o.expect(streamed == idx, "hop-by-hop encoder equals batch");

  const std::size_t frames = idx.size() / 3;
  std::vector<std::uint8_t> received(frames, 1);
  for (std::size_t t = 40; t < 48; ++t) received[t] = 0;
  codec::StreamDecoder<float> dec(model);
  std::vector<double> out;
  double max_diff = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const auto y = received[t] ? dec.push(std::span<const std::int32_t>(idx).subspan(t * 3, 3)) : dec.push({});
    out.insert(out.end(), y.begin(), y.end());
  }
  const auto batch = model.decode(idx, received);
  for (std::size_t i = 0; i < out.size(); ++i) max_diff = std::max(max_diff, std::abs(out[i] - batch[i]));
  o.expect(out == batch, "hop-by-hop decoder equals batch");
  o.detail << " 2 s speech, hop-by-hop max |diff| = " << max_diff << ";";

  // Random chunkings of the graph pipeline.
  codec::Codec<double> dm(cfg, 7);
  const int n = 120;
  const auto spec = noise_tensor({1, n, 160, 2}, 8);
  Tensor<double> mask(Shape{1, n, 1, 1}, 1.0);
  for (int t = 50; t < 58; ++t) mask[t] = 0.0;
  auto run = [&](const std::vector<int>& cuts) {
    nn::StreamState<double> es, ds;
    std::vector<double> y;
    int b = 0;
    for (int e : cuts) {
      nn::Graph<double> g(Mode::kEval, false);
      auto s = nn::slice_time(g, g.constant(spec), b, e);
      es.rewind();
      auto lat = dm.project_down(g, dm.encode_features(g, s, es));
      es.finish();
      auto q = vq::quantize(g, lat, dm.codebook());
      Tensor<double> m(Shape{1, e - b, 1, 1});
      for (int t = b; t < e; ++t) m[t - b] = mask[t];
      ds.rewind();
      const auto& v = g.value(dm.decode_latent(g, q.output, m, ds));
      ds.finish();
      y.insert(y.end(), v.vec().begin(), v.vec().end());
      b = e;
    }
    return y;
  };
  const auto whole = run({n});
  Rng rng(9);
  int splits = 0;
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<int> cuts;
    for (int t = 1; t < n; ++t)
      if (rng.uniform() < 0.1) cuts.push_back(t);
    cuts.push_back(n);
    o.expect(run(cuts) == whole, "random split " + std::to_string(trial));
    ++splits;
  }
  o.detail << " " << splits << " random chunkings bit-identical;";
}

// --- 4 ----------------------------------------------------------------------

void gradients(Outcome& o) {
  const auto results = train::run_gradcheck("all");
  double worst = 0;
  std::string name;
  for (const auto& r : results) {
    if (r.result.max_rel_error > worst) {
      worst = r.result.max_rel_error;
      name = r.scope + "/" + r.name + ":" + r.result.worst;
    }
    o.expect(r.result.max_rel_error < 1e-5, r.scope + "/" + r.name);
  }
  o.detail << " " << results.size() << " cases, worst " << worst << " (" << name << ");";
}

// --- 5 ----------------------------------------------------------------------

void vq_checks(Outcome& o) {
  vq::VqConfig vc;  // N = 3, S = 1024, K = 40
  vq::GroupCodebook<double> cb("vq", vc);
  Rng rng(10);
  for (auto& v : cb.codewords.value.vec()) v = rng.normal();
  const std::size_t n = 10000;
  std::vector<double> x(n * vc.channels());
  for (auto& v : x) v = rng.normal();
  std::vector<std::int32_t> idx(n * vc.groups);
  cb.assign(x.data(), n, idx.data());
  std::size_t mismatch = 0;
  for (std::size_t f = 0; f < n; ++f)
    for (int g = 0; g < vc.groups; ++g) {
      long double best = INFINITY;
      int arg = -1;
      for (int j = 0; j < vc.codebook_size; ++j) {
        long double d = 0;
        for (int k = 0; k < vc.dim; ++k) {
          const long double e = static_cast<long double>(x[(f * vc.groups + g) * vc.dim + k]) - cb.codeword(g, j)[k];
          d += e * e;
        }
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      mismatch += arg != idx[f * vc.groups + g];
    }
  o.detail << " brute force: " << mismatch << " mismatches / " << n * vc.groups << ";";
  o.expect(mismatch == 0, "brute-force oracle");

  // Straight-through and idempotence on a random graph.
  Tensor<double> xt(Shape{2, 20, 1, vc.channels()}, std::vector<double>(x.begin(), x.begin() + 40 * vc.channels()));
  nn::Graph<double> g(Mode::kTrain);
  auto in = g.input(xt, true);
  auto q = vq::quantize(g, in, cb);
  auto loss = nn::mse(g, nn::scale(g, q.output, 2.0), g.constant(noise_tensor(xt.shape(), 11)));
  g.backward(loss);
  o.expect(g.grad(in).vec() == g.grad(q.output).vec(), "straight-through identity");
  auto qq = vq::quantize(g, g.constant(q.values), cb);
  o.expect(qq.indices == q.indices && qq.values.vec() == q.values.vec(), "idempotence");

  // EMA on a Gaussian mixture.
  const int k = 8, dim = 4, batch = 512, steps = 800;
  const double sigma = 0.2, gamma = 0.99;
  vq::VqConfig mc;
  mc.groups = 1;
  mc.codebook_size = k;
  mc.dim = dim;
  vq::GroupCodebook<double> mix("mix", mc);
  std::vector<std::array<double, dim>> means(k);
  for (int c = 0; c < k; ++c)
    for (int d = 0; d < dim; ++d) means[c][d] = 4.0 * rng.normal();
  auto draw = [&](int c, double* out) {
    for (int d = 0; d < dim; ++d) out[d] = means[c][d] + sigma * rng.normal();
  };
  std::vector<double> first(k * dim);
  for (int c = 0; c < k; ++c) draw(c, first.data() + c * dim);
  Rng init(12);
  mix.init_from(first.data(), k, init);
  std::vector<double> xb(batch * dim);
  std::vector<std::int32_t> ib(batch);
  for (int s = 0; s < steps; ++s) {
    for (int i = 0; i < batch; ++i) draw(static_cast<int>(rng.index(k)), xb.data() + i * dim);
    mix.assign(xb.data(), batch, ib.data());
    mix.ema_update(xb.data(), ib.data(), batch);
  }
  const double neff = (batch / double(k)) * (1 + gamma) / (1 - gamma);
  const double tol = 3 * sigma / std::sqrt(neff);
  double worst = 0;
  for (int c = 0; c < k; ++c) {
    double best = INFINITY;
    for (int j = 0; j < k; ++j) {
      double e = 0;
      for (int d = 0; d < dim; ++d) e = std::max(e, std::abs(mix.codeword(0, j)[d] - means[c][d]));
      best = std::min(best, e);
    }
    worst = std::max(worst, best);
  }
  o.detail << " EMA mixture: worst coordinate error " << worst << " vs 3 sigma / sqrt(n) = " << tol << ";";
  o.expect(worst < tol, "EMA recovers mixture means");
}

// --- 6 ----------------------------------------------------------------------

void dsp_checks(Outcome& o) {
  dsp::StftConfig cfg;
  const auto w = dsp::analysis_window(cfg);
  double cola_err = 0;
  for (int n = 0; n < 4 * 320; ++n) {
    double acc = 0;
    for (int t = 0; t < 40; ++t) {
      const int i = n + 320 - t * 80;
      if (i >= 0 && i < 320) acc += w[i] * w[i];
    }
    cola_err = std::max(cola_err, std::abs(acc - dsp::cola_constant(cfg)));
  }
  o.expect(cola_err < 1e-10, "COLA");
  double worst_db = -INFINITY;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto x = noise(32000 + 11 * seed, seed);
    const auto y = dsp::istft(dsp::stft(dsp::Waveform{x, 16000}, cfg), cfg).samples;
    double se = 0, ne = 0;
    for (std::size_t i = 320; i + 320 < y.size(); ++i) {
      se += x[i] * x[i];
      ne += (x[i] - y[i]) * (x[i] - y[i]);
    }
    worst_db = std::max(worst_db, 10 * std::log10(ne / se));
  }
  o.expect(worst_db < -120, "round trip");
  const auto s = dsp::stft(dsp::Waveform{noise(8000, 9), 16000}, cfg);
  const auto back = dsp::power_law_expand(dsp::power_law_compress(s, 0.3), 0.3);
  double rel = 0;
  for (int t = 0; t < s.frames; ++t)
    for (int f = 0; f < s.bins; ++f) {
      const double m = std::hypot(s.re(t, f), s.im(t, f));
      if (m == 0) continue;
      rel = std::max(rel, std::hypot(back.re(t, f) - s.re(t, f), back.im(t, f) - s.im(t, f)) / m);
    }
  o.expect(rel < 1e-6, "power-law round trip");
  o.detail << " COLA err " << cola_err << ", round trip " << worst_db << " dB, power-law rel " << rel << ";";
}

// --- 7 ----------------------------------------------------------------------

void channel_checks(Outcome& o) {
  channel::ThreeStateModel m;
  const auto sim = channel::simulate_states(m, 1000000, 13);
  const double analytic = channel::stationary_loss_rate(m);
  const double empirical = sim.trace.loss_rate();
  o.detail << " loss rate " << empirical << " vs stationary " << analytic << ";";
  o.expect(std::abs(empirical - analytic) < 0.01, "stationary loss rate");

  std::array<std::vector<int>, 3> runs;
  std::size_t start = 0;
  for (std::size_t i = 1; i < sim.states.size(); ++i)
    if (sim.states[i] != sim.states[start]) {
      if (start > 0) runs[static_cast<int>(sim.states[start])].push_back(static_cast<int>(i - start));
      start = i;
    }
  for (int s = 0; s < 3; ++s) {
    const double p = 1 - m.P[s][s];
    std::map<int, std::size_t> hist;
    for (int r : runs[s]) ++hist[r];
    const double n = static_cast<double>(runs[s].size());
    double stat = 0, tail = 1;
    int bins = 0;
    for (int k = 1;; ++k) {
      const double pk = tail * p;
      if (n * (tail - pk) < 5 || n * pk < 5) {
        double obs = 0;
        for (auto it = hist.lower_bound(k); it != hist.end(); ++it) obs += it->second;
        stat += (obs - n * tail) * (obs - n * tail) / (n * tail);
        ++bins;
        break;
      }
      const double obs = hist.count(k) ? static_cast<double>(hist[k]) : 0.0;
      stat += (obs - n * pk) * (obs - n * pk) / (n * pk);
      ++bins;
      tail -= pk;
    }
    const double crit = boost::math::quantile(boost::math::chi_squared(bins - 1), 0.99);
    o.detail << " dwell[" << s << "] chi2 " << stat << " < " << crit << " (dof " << bins - 1 << ");";
    o.expect(stat < crit, "dwell-time fit for state " + std::to_string(s));
  }
  o.expect(channel::format_trace(channel::simulate(m, 100000, 14)) ==
               channel::format_trace(channel::simulate(m, 100000, 14)),
           "determinism");
}

// --- 8 ----------------------------------------------------------------------

void bitstream_checks(Outcome& o) {
  std::size_t packets = 0, failures = 0;
  for (std::uint32_t size = 2; size <= 1024; size *= 2)
    for (std::uint32_t groups : {1u, 2u, 3u})
      for (std::uint32_t fpp : {1u, 2u, 4u}) {
        bitstream::StreamHeader h;
        h.groups = groups;
        h.codebook_size = size;
        h.frames_per_packet = fpp;
        const std::size_t count = h.indices_per_packet();
        for (std::uint32_t mask = 0; mask < (1u << count); ++mask) {
          std::vector<std::int32_t> idx(count);
          for (std::size_t i = 0; i < count; ++i) idx[i] = (mask >> i) & 1 ? static_cast<std::int32_t>(size - 1) : 0;
          failures += bitstream::unpack(bitstream::pack(idx, mask, h), h) != idx;
          ++packets;
        }
      }
  o.expect(failures == 0, "boundary round trip");
  o.detail << " " << packets << " boundary packets;";

  bitstream::StreamHeader h;
  h.num_samples = 16000;
  std::vector<std::int32_t> idx(200 * 3);
  Rng rng(15);
  for (auto& v : idx) v = static_cast<std::int32_t>(rng.index(1024));
  const auto good = bitstream::serialize(bitstream::packetize(idx, h));
  std::size_t decoded = 0, rejected = 0, other = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    std::string b = good;
    if (trial % 3 == 0) {
      b.resize(rng.index(200));
      for (auto& c : b) c = static_cast<char>(rng.index(256));
      if (b.size() >= 4) b.replace(0, 4, "TFN1");
    } else {
      for (int i = 0, e = 1 + static_cast<int>(rng.index(8)); i < e; ++i)
        b[rng.index(b.size())] = static_cast<char>(rng.index(256));
      if (trial % 3 == 1) b.resize(rng.index(b.size() + 1));
    }
    try {
      bitstream::depacketize(bitstream::parse(b));
      ++decoded;
    } catch (const Error& e) {
      (e.kind() == ErrorKind::kFormat ? rejected : other)++;
    }
  }
  o.detail << " fuzz: " << decoded << " decoded, " << rejected << " rejected;";
  o.expect(other == 0, "fuzz errors are format errors");

  const auto s = bitstream::packetize(std::vector<std::int32_t>(16 * 4 * 3, 5), h);
  channel::PacketTrace alt;
  for (int i = 0; i < 16; ++i) alt.received.push_back(i % 2 == 0);
  const auto d = bitstream::apply_trace(s, alt);
  bool law = true;
  for (std::size_t f = 0; f < d.frame_received.size(); ++f) {
    const bool want = (f / 4) % 2 == 0;
    law = law && d.frame_received[f] == want;
    for (int g = 0; g < 3; ++g) law = law && d.indices[f * 3 + g] == (want ? 5 : 0);
  }
  o.expect(law, "11110000 mask law");
}

// --- 9 ----------------------------------------------------------------------

void training(Outcome& o) {
  codec::CodecConfig cfg;
  codec::Codec<float> model(cfg, 1);
  const auto clip = train::synth_speech(3.0, 7);
  train::OverfitConfig oc;  // lr 1e-3 cosine to 1e-4, clip 1.0, 30 min limit
  const auto r = train::overfit(model, clip, oc, [](int step, double loss, double snr) {
    std::fprintf(stderr, "  overfit step %d loss %.5f snr %.2f dB\n", step, loss, snr);
  });
  const auto blocks = train::block_means(r.losses, 50);
  bool monotone = blocks.size() >= 2;
  for (std::size_t i = 1; i < blocks.size(); ++i) monotone = monotone && blocks[i] < blocks[i - 1];
  o.detail << " overfit: " << r.losses.size() << " steps, " << r.seconds << " s, SNR " << r.final_snr_db
           << " dB; 50-step block means";
  for (double b : blocks) o.detail << " " << b;
  o.detail << ";";
  o.expect(r.reached && r.final_snr_db > 10.0, "SNR > 10 dB");
  o.expect(r.seconds < 1800.0, "within 30 min");
  o.expect(monotone, "smoothed loss monotone");

  codec::CodecConfig aio = cfg;
  aio.all_in_one = true;
  train::TrainConfig tc;
  tc.batch = 1;
  tc.mix.segment_s = 1.0;
  tc.steps = 500;
  tc.steps_per_epoch = 500;
  train::Trainer trainer(aio, tc, train::Corpus::synthetic(8, 5, 4.0, 99));
  bool finite = true;
  double last = 0;
  try {
    for (int s = 0; s < tc.steps; ++s) {
      const auto m = trainer.step();
      finite = finite && std::isfinite(m.total) && m.aux && std::isfinite(*m.aux);
      last = m.total;
      if ((s + 1) % 100 == 0) std::fprintf(stderr, "  all-in-one step %d loss %.5f\n", s + 1, m.total);
    }
  } catch (const Error& e) {
    finite = false;
    o.detail << " all-in-one raised: " << e.what() << ";";
  }
  o.expect(finite, "all-in-one 500 steps without NaN");
  nn::Graph<float> g(Mode::kEval, false);
  Tensor<float> wave(Shape{1, 4000, 1, 1});
  auto f = trainer.model().forward(g, g.constant(wave), nullptr);
  const auto aux = trainer.model().aux_parameters();
  std::size_t aux_bound = 0;
  for (const auto* p : g.bound_parameters()) aux_bound += std::count(aux.begin(), aux.end(), p);
  o.expect(aux_bound == 0 && !f.aux_decoded, "aux decoder absent at inference");
  o.detail << " all-in-one: 500 steps, last loss " << last << ", aux params bound at inference " << aux_bound
           << " of " << aux.size() << ";";
}

// --- 10 ---------------------------------------------------------------------

void ablation(Outcome& o) {
  codec::CodecConfig base;
  const auto arms = train::ablation_arms(base);
  const double spread = train::parameter_spread(arms);
  o.detail << " parameter spread " << spread << ";";
  o.expect(spread <= 0.05, "parameter counts within 5%");
  train::TrainConfig tc;
  tc.batch = 1;
  tc.mix.segment_s = 1.0;
  tc.steps = 500;
  tc.steps_per_epoch = 500;
  const auto results = train::run_ablation(base, tc, train::Corpus::synthetic(8, 5, 4.0, 99), 0.05,
                                           [](const std::string& arm, const train::StepMetrics& m) {
                                             if (m.step % 100 == 0)
                                               std::fprintf(stderr, "  %s step %lld loss %.5f\n", arm.c_str(),
                                                            static_cast<long long>(m.step), m.total);
                                           });
  o.expect(results.size() == 3, "three arms ran");
  std::string best;
  double best_v = INFINITY;
  for (const auto& r : results) {
    o.detail << " " << r.name << ": " << r.parameters << " params, final loss " << r.final_loss
             << ", validation " << r.validation_distance << ";";
    o.expect(std::isfinite(r.final_loss), r.name + " finite");
    if (r.validation_distance < best_v) {
      best_v = r.validation_distance;
      best = r.name;
    }
  }
  o.detail << " best validation: " << best << " (reported, not asserted);";
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    void (*run)(Outcome&);
  };
  const std::vector<Criterion> all = {
      {1, "bitrate exactness", 60, bitrate},        {2, "latency and causality", 300, latency},
      {3, "streaming equivalence", 120, streaming}, {4, "gradient suite", 600, gradients},
      {5, "vq correctness", 120, vq_checks},        {6, "dsp", 60, dsp_checks},
      {7, "channel", 60, channel_checks},           {8, "bitstream", 120, bitstream_checks},
      {9, "training smoke", 3600, training},        {10, "ablation harness", 3600, ablation},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    // Criterion 9 carries its own 30-minute limit on the overfit run.
    if (c.id != 9 && c.id != 10 && secs > c.budget_s) {
      o.pass = false;
      o.detail << " [over runtime budget " << c.budget_s << " s]";
    }
    std::printf("criterion %d %s: %s (%.1f s)%s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, secs,
                o.detail.str().c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
