#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "tfnet/codec/codec.hpp"
#include "tfnet/temporal/temporal.hpp"

using namespace tfnet;
using namespace tfnet::codec;
using nn::Mode;

namespace {

std::size_t analytic_parameter_count(const CodecConfig& c) {
  const std::size_t n = c.enc_channels.size(), kt = c.conv_kernel_t;
  std::size_t total = 0;
  std::size_t cin = 2;
  for (std::size_t i = 0; i <= n; ++i) {
    const std::size_t cout = i == n ? c.latent : c.enc_channels[i];
    const std::size_t kf = i == n ? c.fold_bins() : c.enc_kernel_f;
    total += kt * kf * cin * cout + 3 * cout;  // conv (no bias), BN gain/bias, PReLU
    cin = cout;
  }
  cin = c.latent;
  for (std::size_t i = 0; i <= n; ++i) {
    const bool last = i == n;
    const std::size_t cout = last ? 2 : c.enc_channels[n - 1 - i];
    const std::size_t kf = i == 0 ? c.fold_bins() : c.enc_kernel_f;
    total += kt * kf * cin * cout + (last ? cout : 3 * cout);
    cin = cout;
  }
  const std::size_t C = c.latent, H = c.tcm_hidden, k = c.tcm_kernel;
  const std::size_t tcm_block = 2 * C * H + C + H * (8 + k);
  const std::size_t tcm_group = c.dilations.size() * tcm_block;
  auto stack = [&](const std::string& layout) {
    std::size_t s = 0;
    for (char b : layout) s += b == 'T' ? tcm_group : temporal::ggru_parameter_count(c.latent, c.gru_groups);
    return s;
  };
  total += stack(c.encode_stack) + stack(c.decode_stack) + C * c.decode_stack.size();
  total += C * c.latent_q + c.latent_q;        // project down
  total += (c.latent_q + 1) * C + C;            // project up, mask channel included
  return total;
}

std::vector<double> run_codec(Codec<float>& m, const std::vector<double>& x) {
  return m.decode(m.encode(x), {});
}

}  // namespace

TEST_SUITE("codec") {
  TEST_CASE("default configuration shape law") {
    CodecConfig cfg;
    CHECK(cfg.fold_bins() == 10);
    CHECK(cfg.net_bins() == 160);
    CHECK(cfg.bitrate_kbps() == 6.0);
    Codec<float> model(cfg, 1);
    const auto wave = Tensor<double>(Shape{1, 16000, 1, 1}, testing::random_signal(16000, 2)).cast<float>();
    nn::Graph<float> g(Mode::kEval, false);
    auto f = model.forward(g, g.constant(wave), nullptr);
    CHECK(g.value(f.input).shape() == Shape{1, 197, 160, 2});
    CHECK(g.value(f.features).shape() == Shape{1, 197, 1, 192});
    CHECK(g.value(f.latent).shape() == Shape{1, 197, 1, 120});
    CHECK(g.value(f.decoded).shape() == Shape{1, 197, 161, 2});
    CHECK(f.indices.size() == 197 * 3);
    CHECK_FALSE(f.aux_decoded.has_value());
  }

  TEST_CASE("parameter count matches the analytic sum") {
    for (auto cfg : {CodecConfig{}, tiny_config()}) {
      Codec<float> model(cfg, 1);
      CHECK(model.trainable_count() == analytic_parameter_count(cfg));
    }
    CodecConfig def;
    Codec<float> m(def, 1);
    MESSAGE("default trainable parameters: ", m.trainable_count());
  }

  TEST_CASE("config validation") {
    auto bad = [](auto mutate) {
      CodecConfig c;
      mutate(c);
      return testing::error_kind([&] { c.validate(); });
    };
    CHECK(bad([](CodecConfig& c) { c.latent_q = 192; }) == ErrorKind::kConfig);
    CHECK(bad([](CodecConfig& c) { c.latent_q = 200; }) == ErrorKind::kConfig);
    CHECK(bad([](CodecConfig& c) { c.decode_stack = "TG"; }) == ErrorKind::kConfig);
    CHECK(bad([](CodecConfig& c) { c.enc_strides = {2, 2, 3}; }) == ErrorKind::kConfig);
    CHECK(bad([](CodecConfig& c) { c.vq_size = 1000; }) == ErrorKind::kConfig);
    CHECK(bad([](CodecConfig& c) { c.latent_q = 121; }) == ErrorKind::kConfig);
    CodecConfig ok;
    ok.validate();
    CHECK(CodecConfig::from_json(ok.to_json()) == ok);
  }

  TEST_CASE("identity square projection") {
    auto cfg = tiny_config();
    cfg.latent_q = cfg.latent;
    cfg.allow_square_projection = true;
    Codec<double> model(cfg, 2);
    model.identity_projections();
    const auto x = testing::random_tensor(Shape{1, 5, 1, cfg.latent}, 3);
    nn::Graph<double> g(Mode::kEval, false);
    CHECK(testing::bit_equal(g.value(model.project_down(g, g.constant(x))), x));
  }

  TEST_CASE("T in equals T out and decode length") {
    Codec<float> model(tiny_config(), 3);
    for (std::size_t n : {64u, 65u, 100u, 1000u}) {
      const auto x = testing::random_signal(n, n);
      const auto idx = model.encode(x);
      CHECK(idx.size() == static_cast<std::size_t>(model.frames_for(n)) * 2);
      CHECK(model.decode(idx, {}).size() == static_cast<std::size_t>(model.frames_for(n)) * 16);
    }
    CHECK(testing::error_kind([&] { model.encode(std::vector<double>{}); }) == ErrorKind::kShape);
  }

  TEST_CASE("latency: truncating the future changes nothing more than one window back") {
    const auto cfg = tiny_config();
    const int w = cfg.stft.window_len;
    Codec<float> model(cfg, 4);
    const auto x = testing::random_signal(1600, 5);
    const auto full = run_codec(model, x);
    int max_lookahead = 0;
    for (std::size_t n = 100; n < 1600; n += 37) {
      const std::vector<double> cut(x.begin(), x.begin() + n);
      const auto y = run_codec(model, cut);
      std::size_t first_diff = y.size();
      for (std::size_t i = 0; i < std::min(y.size(), full.size()); ++i)
        if (y[i] != full[i]) {
          first_diff = i;
          break;
        }
      CHECK(first_diff + w >= n);
      max_lookahead = std::max(max_lookahead, static_cast<int>(n) - static_cast<int>(first_diff));
    }
    // Output sample i needs input up to i + w - 1: less than one window, and
    // at least w - hop whenever the cut falls mid-frame.
    MESSAGE("max look-ahead " << max_lookahead << " samples, window " << w);
    CHECK(max_lookahead < w);
    CHECK(max_lookahead >= w - cfg.stft.hop_len);
  }

  TEST_CASE("end-to-end causality by frame perturbation") {
    Codec<double> model(tiny_config(), 5);
    const int frames = 24;
    auto spec = testing::random_tensor(Shape{1, frames, 32, 2}, 6);
    auto run = [&](const Tensor<double>& s) {
      nn::Graph<double> g(Mode::kEval, false);
      nn::StreamState<double> es, ds;
      auto lat = model.project_down(g, model.encode_features(g, g.constant(s), es));
      Tensor<double> mask(Shape{1, frames, 1, 1}, 1.0);
      return g.value(model.decode_latent(g, lat, mask, ds));
    };
    const auto a = run(spec);
    for (int f = 0; f < 32; ++f) spec(0, 10, f, 0) += 0.5;
    const auto b = run(spec);
    bool before_same = true, after_differs = false;
    for (int t = 0; t < frames; ++t)
      for (int f = 0; f < 33; ++f)
        for (int c = 0; c < 2; ++c) {
          const bool same = a(0, t, f, c) == b(0, t, f, c);
          if (t < 10) before_same = before_same && same;
          else after_differs = after_differs || !same;
        }
    CHECK(before_same);
    CHECK(after_differs);
  }

  TEST_CASE("hop-by-hop streaming equals batch") {
    const auto cfg = tiny_config();
    const int hop = cfg.stft.hop_len, w = cfg.stft.window_len;
    Codec<float> model(cfg, 6);
    const auto x = testing::random_signal(50 * hop + 7, 7);
    const auto idx = model.encode(x);

    StreamEncoder<float> enc(model);
    std::vector<std::int32_t> streamed;
    std::vector<double> padded(x);
    padded.resize(static_cast<std::size_t>(model.frames_for(x.size())) * hop + (w - hop), 0.0);
    for (std::size_t o = 0; o < padded.size(); o += hop)
      if (auto f = enc.push(std::span<const double>(padded).subspan(o, hop))) streamed.insert(streamed.end(), f->begin(), f->end());
    CHECK(streamed == idx);

    std::vector<std::uint8_t> received(idx.size() / 2, 1);
    received[9] = 0;
    received[30] = received[31] = 0;
    StreamDecoder<float> dec(model);
    std::vector<double> out;
    for (std::size_t t = 0; t < received.size(); ++t) {
      const auto y = received[t] ? dec.push(std::span<const std::int32_t>(idx).subspan(t * 2, 2)) : dec.push({});
      out.insert(out.end(), y.begin(), y.end());
    }
    CHECK(out == model.decode(idx, received));
    CHECK(out != model.decode(idx, {}));
  }

  TEST_CASE("a lost frame equals a zeroed latent with mask 0") {
    Codec<double> model(tiny_config(), 7);
    const int frames = 12;
    auto q = testing::random_tensor(Shape{1, frames, 1, 8}, 8);
    Tensor<double> mask(Shape{1, frames, 1, 1}, 1.0);
    mask[4] = 0.0;
    auto decode = [&](const Tensor<double>& qq) {
      nn::Graph<double> g(Mode::kEval, false);
      nn::StreamState<double> st;
      return g.value(model.decode_latent(g, g.constant(qq), mask, st));
    };
    auto zeroed = q;
    for (int c = 0; c < 8; ++c) zeroed(0, 4, 0, c) = 0.0;
    CHECK(testing::bit_equal(decode(q), decode(zeroed)));
  }

  TEST_CASE("mask channel has no effect at initialisation") {
    Codec<double> model(tiny_config(), 8);
    const int frames = 12;
    auto q = testing::random_tensor(Shape{1, frames, 1, 8}, 9);
    Tensor<double> ones(Shape{1, frames, 1, 1}, 1.0), holes(Shape{1, frames, 1, 1}, 1.0);
    for (int t : {2, 3, 7}) {
      holes[t] = 0.0;
      for (int c = 0; c < 8; ++c) q(0, t, 0, c) = 0.0;
    }
    auto decode = [&](const Tensor<double>& m) {
      nn::Graph<double> g(Mode::kEval, false);
      nn::StreamState<double> st;
      return g.value(model.decode_latent(g, g.constant(q), m, st));
    };
    CHECK(testing::bit_equal(decode(ones), decode(holes)));
    Tensor<double> wrong(Shape{1, frames - 1, 1, 1}, 1.0);
    CHECK(testing::error_kind([&] { decode(wrong); }) == ErrorKind::kShape);
  }

  TEST_CASE("chunked graph pipeline equals the whole-sequence pass") {
    Codec<double> model(tiny_config(), 10);
    const int frames = 60;
    const auto spec = testing::random_tensor(Shape{1, frames, 32, 2}, 11);
    Tensor<double> mask(Shape{1, frames, 1, 1}, 1.0);
    for (int t = 20; t < 28; ++t) mask[t] = 0.0;
    auto run = [&](const std::vector<int>& cuts) {
      nn::StreamState<double> es, ds;
      std::vector<double> out;
      int b = 0;
      for (int e : cuts) {
        nn::Graph<double> g(Mode::kEval, false);
        Var s = nn::slice_time(g, g.constant(spec), b, e);
        es.rewind();
        auto lat = model.project_down(g, model.encode_features(g, s, es));
        es.finish();
        auto q = vq::quantize(g, lat, model.codebook());
        Tensor<double> m(Shape{1, e - b, 1, 1});
        for (int t = b; t < e; ++t) m[t - b] = mask[t];
        ds.rewind();
        const auto& y = g.value(model.decode_latent(g, q.output, m, ds));
        ds.finish();
        out.insert(out.end(), y.vec().begin(), y.vec().end());
        b = e;
      }
      return out;
    };
    const auto whole = run({frames});
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<int> cuts;
      for (int t = 1; t < frames; ++t)
        if (rng.uniform() < 0.15) cuts.push_back(t);
      cuts.push_back(frames);
      CHECK(run(cuts) == whole);
    }
  }

  TEST_CASE("auxiliary decoder exists only for training") {
    auto cfg = tiny_config();
    cfg.all_in_one = true;
    Codec<float> model(cfg, 13);
    REQUIRE(model.has_aux());
    CHECK(model.trainable_count(true) > model.trainable_count(false));
    const auto wave = Tensor<double>(Shape{1, 400, 1, 1}, testing::random_signal(400, 14)).cast<float>();

    nn::Graph<float> eval(Mode::kEval, false);
    auto fe = model.forward(eval, eval.constant(wave), nullptr);
    CHECK_FALSE(fe.aux_decoded.has_value());
    const auto aux = model.aux_parameters();
    for (const auto* p : eval.bound_parameters()) CHECK(std::find(aux.begin(), aux.end(), p) == aux.end());
    CHECK(testing::error_kind([&] { model.aux_decode(eval, fe.features); }) == ErrorKind::kState);

    for (auto* p : model.parameters()) p->zero_grad();
    nn::Graph<float> g(Mode::kTrain);
    auto f = model.forward(g, g.constant(wave), nullptr);
    REQUIRE(f.aux_decoded.has_value());
    CHECK(g.value(*f.aux_decoded).shape() == g.value(f.decoded).shape());
    g.backward(nn::weighted_sum(g, *f.aux_decoded, testing::random_tensor<float>(g.value(f.decoded).shape(), 15)));
    double enc_norm = 0;
    for (auto* p : model.inference_parameters())
      if (p->name.rfind("encoder.", 0) == 0)
        for (float v : p->grad.vec()) enc_norm += double(v) * v;
    CHECK(enc_norm > 0.0);

    Codec<float> plain(tiny_config(), 13);
    nn::Graph<float> t2(Mode::kTrain, false);
    auto f2 = plain.forward(t2, t2.constant(wave), nullptr);
    CHECK(testing::error_kind([&] { plain.aux_decode(t2, f2.features); }) == ErrorKind::kState);
  }

  TEST_CASE("decoder state from another model is rejected") {
    Codec<float> a(tiny_config(), 1);
    auto other = tiny_config();
    other.latent = 16;
    Codec<float> b(other, 1);
    StreamDecoder<float> dec(a);
    const std::vector<std::int32_t> idx{0, 1};
    dec.push(idx);
    // Reuse a's decoder state on b's network through the graph API.
    nn::StreamState<float> st;
    {
      nn::Graph<float> g(Mode::kEval, false);
      Tensor<float> m(Shape{1, 1, 1, 1}, 1.0f);
      a.decode_latent(g, g.constant(Tensor<float>(Shape{1, 1, 1, 8})), m, st);
    }
    st.rewind();
    nn::Graph<float> g(Mode::kEval, false);
    Tensor<float> m(Shape{1, 1, 1, 1}, 1.0f);
    CHECK(testing::error_kind([&] { b.decode_latent(g, g.constant(Tensor<float>(Shape{1, 1, 1, 8})), m, st); }) ==
          ErrorKind::kState);
  }
}
