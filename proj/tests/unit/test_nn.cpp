#include <doctest.h>

#include "helpers.hpp"
#include "tfnet/codec/codec.hpp"
#include "tfnet/nn/gradcheck.hpp"
#include "tfnet/nn/layers.hpp"
#include "tfnet/nn/optim.hpp"
#include "tfnet/train/loss.hpp"

using namespace tfnet;
using namespace tfnet::nn;
using testing::random_tensor;

namespace {

Tensor<double> identity_kernel(int c) {
  Tensor<double> w(Shape{1, 1, c, c});
  for (int i = 0; i < c; ++i) w(0, 0, i, i) = 1.0;
  return w;
}

/// Runs a stateful temporal layer on x from a fresh state.
template <typename Layer>
Tensor<double> run_layer(Layer& layer, const Tensor<double>& x) {
  Graph<double> g(Mode::kEval, false);
  StreamState<double> st;
  return g.value(layer.forward(g, g.constant(x), st));
}

template <typename Layer>
void check_causal(Layer& layer, const Tensor<double>& x, int frame) {
  auto y = x;
  for (int b = 0; b < x.dim(0); ++b)
    for (int f = 0; f < x.dim(2); ++f)
      for (int c = 0; c < x.dim(3); ++c) y(b, frame, f, c) += 1.0;
  const auto a = run_layer(layer, x);
  const auto p = run_layer(layer, y);
  REQUIRE(a.dim(1) == x.dim(1));
  bool before_same = true, after_differs = false;
  for (int b = 0; b < a.dim(0); ++b)
    for (int t = 0; t < a.dim(1); ++t)
      for (int f = 0; f < a.dim(2); ++f)
        for (int c = 0; c < a.dim(3); ++c) {
          const bool same = a(b, t, f, c) == p(b, t, f, c);
          if (t < frame) before_same = before_same && same;
          else after_differs = after_differs || !same;
        }
  CHECK(before_same);
  CHECK(after_differs);
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("identity kernels") {
    const auto x = random_tensor(Shape{2, 7, 5, 4}, 1);
    Graph<double> g(Mode::kEval, false);
    Var in = g.constant(x);
    Var zero4 = g.constant(Tensor<double>(Shape{1, 1, 1, 4}));
    CHECK(testing::bit_equal(g.value(conv2d(g, in, g.constant(identity_kernel(4)), zero4, Conv2dSpec{})), x));
    CHECK(testing::bit_equal(g.value(conv1x1(g, in, g.constant(identity_kernel(4)), zero4)), x));
    Var taps1 = g.constant(Tensor<double>(Shape{1, 1, 1, 4}, 1.0));
    CHECK(testing::bit_equal(g.value(depthwise_conv_time(g, in, taps1, zero4, 3)), x));
  }

  TEST_CASE("shape laws") {
    Graph<double> g(Mode::kEval, false);
    Var x = g.constant(random_tensor(Shape{1, 6, 1, 3}, 2));
    Conv2dSpec up{1, 3, 2, 1};
    Var y = deconv2d(g, x, g.constant(random_tensor(Shape{1, 3, 3, 5}, 3)),
                     g.constant(Tensor<double>(Shape{1, 1, 1, 5})), up);
    CHECK(g.value(y).shape() == Shape{1, 6, 2, 5});
    Var z = g.constant(random_tensor(Shape{1, 6, 9, 2}, 4));
    Conv2dSpec down{2, 3, 2, 1};
    Var d = conv2d(g, z, g.constant(random_tensor(Shape{2, 3, 2, 4}, 5)),
                   g.constant(Tensor<double>(Shape{1, 1, 1, 4})), down);
    CHECK(g.value(d).shape() == Shape{1, 5, 5, 4});  // valid time, ceil(9 / 2) bins
    CHECK(testing::error_kind([&] {
            conv2d(g, z, g.constant(random_tensor(Shape{2, 3, 3, 4}, 5)),
                   g.constant(Tensor<double>(Shape{1, 1, 1, 4})), down);
          }) == ErrorKind::kShape);
  }

  TEST_CASE("temporal causality of every layer type") {
    Rng rng(7);
    const auto x = random_tensor(Shape{2, 12, 8, 3}, 8);
    Conv2d<double> conv("c", 3, 4, Conv2dSpec{2, 3, 2, 1}, false, rng);
    Conv2d<double> dil("d", 3, 4, Conv2dSpec{3, 3, 1, 2}, false, rng);
    Conv2d<double> deconv("t", 3, 2, Conv2dSpec{2, 3, 2, 1}, true, rng);
    DepthwiseTime<double> dw("w", 3, 3, 4, rng);
    Gru<double> gru("g", 3, 5, rng);
    for (int frame : {0, 5, 11}) {
      check_causal(conv, x, frame);
      check_causal(dil, x, frame);
      check_causal(deconv, x, frame);
      check_causal(dw, x, frame);
    }
    const auto xg = random_tensor(Shape{2, 12, 1, 3}, 9);
    check_causal(gru, xg, 5);
  }

  TEST_CASE("depthwise conv keeps channels independent") {
    Rng rng(1);
    DepthwiseTime<double> dw("w", 4, 3, 2, rng);
    auto x = random_tensor(Shape{1, 10, 1, 4}, 2);
    const auto a = run_layer(dw, x);
    for (int t = 0; t < 10; ++t) x(0, t, 0, 2) += 1.0;
    const auto b = run_layer(dw, x);
    for (int t = 0; t < 10; ++t)
      for (int c = 0; c < 4; ++c)
        if (c != 2) CHECK(a(0, t, 0, c) == b(0, t, 0, c));
  }

  TEST_CASE("GRU fixed point and saturated update gate") {
    const int h = 4;
    Graph<double> g(Mode::kEval, false);
    Var wi = g.constant(random_tensor(Shape{1, 1, 3, 3 * h}, 1));
    Var wh = g.constant(random_tensor(Shape{1, 1, h, 3 * h}, 2));
    Var zero_b = g.constant(Tensor<double>(Shape{1, 1, 1, 3 * h}));
    auto out = gru(g, g.constant(Tensor<double>(Shape{1, 5, 1, 3})), Tensor<double>(Shape{1, 1, 1, h}), wi, wh,
                   zero_b);
    for (double v : g.value(out.output).vec()) CHECK(v == 0.0);

    Tensor<double> b(Shape{1, 1, 1, 3 * h});
    for (int i = 0; i < h; ++i) b[i] = 60.0;  // z gate
    const auto h0 = random_tensor(Shape{1, 1, 1, h}, 3);
    auto sat = gru(g, g.constant(random_tensor(Shape{1, 3, 1, 3}, 4)), h0, wi, wh, g.constant(b));
    for (int t = 0; t < 3; ++t)
      for (int i = 0; i < h; ++i) CHECK(g.value(sat.output)(0, t, 0, i) == doctest::Approx(h0[i]).epsilon(1e-12));
  }

  TEST_CASE("batch norm modes") {
    BatchNorm<double> bn("bn", 3);
    bn.eps = 0.0;
    const auto x = random_tensor(Shape{2, 6, 4, 3}, 5, 3.0);
    {
      Graph<double> g(Mode::kEval, false);
      CHECK(testing::bit_equal(g.value(bn.forward(g, g.constant(x))), x));
    }
    Graph<double> g(Mode::kTrain, false);
    const auto& y = g.value(bn.forward(g, g.constant(x)));
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      const std::size_t n = y.size() / 3;
      for (std::size_t r = 0; r < n; ++r) m += y[r * 3 + c];
      m /= n;
      for (std::size_t r = 0; r < n; ++r) v += (y[r * 3 + c] - m) * (y[r * 3 + c] - m);
      v /= n;
      CHECK(std::abs(m) < 1e-12);
      CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Running statistics moved toward the batch statistics.
    CHECK(bn.running_mean.value[0] != 0.0);
  }

  TEST_CASE("prelu") {
    Graph<double> g(Mode::kEval, false);
    Tensor<double> x(Shape{1, 1, 1, 2}, std::vector<double>{-2.0, 3.0});
    Var y = prelu(g, g.constant(x), g.constant(Tensor<double>(Shape{1, 1, 1, 2}, 0.25)));
    CHECK(g.value(y)[0] == -0.5);
    CHECK(g.value(y)[1] == 3.0);
  }

  TEST_CASE("linear op gradient check is exact") {
    GradCheckOptions opt;
    opt.step = 1e-3;
    auto r = grad_check([](Graph<double>& g, std::span<const Var> in) { return scale(g, add(g, in[0], in[1]), 1.7); },
                        {random_tensor(Shape{2, 3, 4, 2}, 1), random_tensor(Shape{2, 3, 4, 2}, 2)}, {}, opt);
    CHECK(r.max_rel_error < 1e-10);
  }

  TEST_CASE("conv gradient check at step 1e-4") {
    Rng rng(3);
    Conv2d<double> conv("c", 3, 4, Conv2dSpec{2, 3, 2, 1}, false, rng);
    ParameterList<double> params;
    conv.collect(params);
    GradCheckOptions opt;
    opt.step = 1e-4;
    auto r = grad_check(
        [&](Graph<double>& g, std::span<const Var> in) {
          StreamState<double> st;
          return conv.forward(g, in[0], st);
        },
        {random_tensor(Shape{2, 6, 8, 3}, 4)}, params, opt);
    MESSAGE("conv worst ", r.worst, " ", r.max_rel_error);
    CHECK(r.max_rel_error < 1e-8);
  }

  TEST_CASE("straight-through gradients equal the bypassed quantizer's") {
    // With every latent frame present in the codebook the quantized values
    // equal the latents, so both graphs see the same forward values.
    auto cfg = codec::tiny_config();
    codec::Codec<double> model(cfg, 11);
    const int frames = cfg.vq_size;
    const int len = (frames - 1) * cfg.stft.hop_len + cfg.stft.window_len;
    Tensor<double> wave(Shape{1, len, 1, 1}, testing::random_signal(len, 12));
    {
      Graph<double> g(Mode::kTrain, false);
      StreamState<double> st;
      Var lat = model.project_down(g, model.encode_features(g, model.analyze(g, g.constant(wave)), st));
      Rng rng(1);
      model.codebook().init_from(g.value(lat).data(), frames, rng);
    }
    train::LossConfig lc;
    auto grads = [&](bool bypass) {
      model.bypass_vq = bypass;
      auto params = model.inference_parameters();
      for (auto* p : params) p->zero_grad();
      Graph<double> g(Mode::kTrain);
      Var w = g.constant(wave);
      auto f = model.forward(g, w, nullptr);
      if (!bypass) CHECK(testing::bit_equal(f.codewords, g.value(f.latent)));
      Var loss = train::recon_loss(g, f.decoded, w, model.transform(), lc);
      g.backward(loss);
      std::vector<std::vector<double>> out;
      for (auto* p : params)
        if (p->trainable) out.push_back(p->grad.vec());
      return out;
    };
    const auto st = grads(false);
    const auto by = grads(true);
    REQUIRE(st.size() == by.size());
    bool equal = true, nonzero = false;
    for (std::size_t i = 0; i < st.size(); ++i) {
      equal = equal && st[i] == by[i];
      for (double v : st[i]) nonzero = nonzero || v != 0.0;
    }
    CHECK(equal);
    CHECK(nonzero);
  }

  TEST_CASE("eval forward is deterministic") {
    codec::Codec<float> model(codec::tiny_config(), 3);
    const auto x = testing::random_signal(800, 4);
    CHECK(model.decode(model.encode(x), {}) == model.decode(model.encode(x), {}));
  }

  TEST_CASE("adam leaves parameters alone under zero gradients") {
    Parameter<float> p("p", random_tensor<float>(Shape{1, 1, 3, 3}, 1));
    const auto before = p.value.vec();
    Adam<float> adam({&p}, AdamConfig{});
    for (int i = 0; i < 5; ++i) {
      adam.zero_grad();
      adam.step();
    }
    CHECK(p.value.vec() == before);
    CHECK(adam.steps() == 5);
  }

  TEST_CASE("adam first step moves by lr against the gradient sign") {
    Parameter<double> p("p", Tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{1.0, 1.0}));
    Adam<double> adam({&p}, AdamConfig{0.1});
    adam.zero_grad();
    p.grad[0] = 3.0;
    p.grad[1] = -0.5;
    adam.step();
    CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(1.1).epsilon(1e-6));
  }
}
