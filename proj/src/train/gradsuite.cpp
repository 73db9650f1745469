#include "tfnet/train/gradsuite.hpp"

#include <functional>

#include "tfnet/codec/codec.hpp"
#include "tfnet/core/error.hpp"
#include "tfnet/nn/layers.hpp"
#include "tfnet/nn/ops.hpp"
#include "tfnet/nn/spectral.hpp"
#include "tfnet/temporal/temporal.hpp"
#include "tfnet/train/loss.hpp"
#include "tfnet/vq/vq.hpp"

namespace tfnet::train {
namespace {

using nn::Graph;
using nn::Parameter;
using nn::ParameterList;
using nn::Var;
using D = double;

Tensor<D> randn(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<D> t(s);
  for (auto& v : t.vec()) v = scale * rng.normal();
  return t;
}

// Values bounded away from zero, for ops with a kink or singularity there.
Tensor<D> rand_away(const Shape& s, Rng& rng) {
  Tensor<D> t(s);
  for (auto& v : t.vec()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.5);
  return t;
}

Parameter<D> param(const std::string& name, const Shape& s, Rng& rng, double scale = 0.5) {
  return Parameter<D>(name, randn(s, rng, scale));
}

struct Case {
  std::string scope;
  std::string name;
  std::function<nn::GradCheckResult()> run;
};

using Inputs = std::span<const Var>;

std::vector<Case> build_cases() {
  std::vector<Case> cases;
  auto add = [&](const std::string& scope, const std::string& name, std::function<nn::GradCheckResult()> fn) {
    cases.push_back({scope, name, std::move(fn)});
  };

  // --- elementwise and structural ops -------------------------------------
  add("ops", "add", [] {
    Rng r(1);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::add(g, x[0], x[1]); },
                          {randn({2, 3, 2, 3}, r), randn({2, 3, 2, 3}, r)}, {});
  });
  add("ops", "sub", [] {
    Rng r(2);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::sub(g, x[0], x[1]); },
                          {randn({2, 3, 2, 3}, r), randn({2, 3, 2, 3}, r)}, {});
  });
  add("ops", "scale", [] {
    Rng r(3);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::scale(g, x[0], -1.7); },
                          {randn({1, 4, 2, 3}, r)}, {});
  });
  add("ops", "concat_time", [] {
    Rng r(4);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::concat_time(g, x[0], x[1]); },
                          {randn({2, 3, 2, 2}, r), randn({2, 4, 2, 2}, r)}, {});
  });
  add("ops", "slice_time", [] {
    Rng r(5);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::slice_time(g, x[0], 1, 4); },
                          {randn({2, 6, 2, 2}, r)}, {});
  });
  add("ops", "concat_channels", [] {
    Rng r(6);
    return nn::grad_check(
        [](Graph<D>& g, Inputs x) {
          const Var parts[] = {x[0], x[1]};
          return nn::concat_channels<D>(g, parts);
        },
        {randn({2, 3, 2, 2}, r), randn({2, 3, 2, 5}, r)}, {});
  });
  add("ops", "slice_channels", [] {
    Rng r(7);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::slice_channels(g, x[0], 1, 4); },
                          {randn({2, 3, 2, 5}, r)}, {});
  });
  add("ops", "slice_freq", [] {
    Rng r(8);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::slice_freq(g, x[0], 1, 4); },
                          {randn({2, 3, 6, 2}, r)}, {});
  });
  add("ops", "pad_freq", [] {
    Rng r(9);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::pad_freq(g, x[0], 2); },
                          {randn({2, 3, 4, 2}, r)}, {});
  });
  add("ops", "conv2d", [] {
    Rng r(10);
    auto w = param("w", {2, 3, 3, 4}, r);
    auto b = param("b", {1, 1, 1, 4}, r);
    nn::Conv2dSpec spec{2, 3, 2, 1};
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::conv2d(g, x[0], g.param(w), g.param(b), spec); },
                          {randn({2, 5, 7, 3}, r)}, {&w, &b});
  });
  add("ops", "conv2d_dilated", [] {
    Rng r(11);
    auto w = param("w", {2, 1, 2, 3}, r);
    auto b = param("b", {1, 1, 1, 3}, r);
    nn::Conv2dSpec spec{2, 1, 1, 3};
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::conv2d(g, x[0], g.param(w), g.param(b), spec); },
                          {randn({1, 7, 2, 2}, r)}, {&w, &b});
  });
  add("ops", "deconv2d", [] {
    Rng r(12);
    auto w = param("w", {2, 5, 3, 2}, r);
    auto b = param("b", {1, 1, 1, 2}, r);
    nn::Conv2dSpec spec{2, 5, 2, 1};
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::deconv2d(g, x[0], g.param(w), g.param(b), spec); },
                          {randn({2, 4, 3, 3}, r)}, {&w, &b});
  });
  add("ops", "depthwise_conv_time", [] {
    Rng r(13);
    auto w = param("w", {3, 1, 1, 4}, r);
    auto b = param("b", {1, 1, 1, 4}, r);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) { return nn::depthwise_conv_time(g, x[0], g.param(w), g.param(b), 2); },
        {randn({2, 9, 1, 4}, r)}, {&w, &b});
  });
  add("ops", "conv1x1", [] {
    Rng r(14);
    auto w = param("w", {1, 1, 4, 3}, r);
    auto b = param("b", {1, 1, 1, 3}, r);
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::conv1x1(g, x[0], g.param(w), g.param(b)); },
                          {randn({2, 3, 2, 4}, r)}, {&w, &b});
  });
  add("ops", "prelu", [] {
    Rng r(15);
    auto a = param("slopes", {1, 1, 1, 3}, r);
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::prelu(g, x[0], g.param(a)); },
                          {rand_away({2, 4, 2, 3}, r)}, {&a});
  });
  add("ops", "channel_norm", [] {
    Rng r(16);
    auto gain = param("gain", {1, 1, 1, 5}, r);
    auto bias = param("bias", {1, 1, 1, 5}, r);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) { return nn::channel_norm(g, x[0], g.param(gain), g.param(bias), 1e-5); },
        {randn({2, 3, 2, 5}, r)}, {&gain, &bias});
  });
  add("ops", "batch_norm_train", [] {
    Rng r(17);
    nn::BatchNorm<D> bn("bn", 3);
    bn.gain.value = randn({1, 1, 1, 3}, r);
    bn.bias.value = randn({1, 1, 1, 3}, r);
    ParameterList<D> ps;
    bn.collect(ps);
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return bn.forward(g, x[0]); }, {randn({2, 4, 3, 3}, r)},
                          ps);
  });
  add("ops", "batch_norm_eval", [] {
    Rng r(18);
    nn::BatchNorm<D> bn("bn", 3);
    bn.running_mean.value = randn({1, 1, 1, 3}, r);
    for (auto& v : bn.running_var.value.vec()) v = r.uniform(0.5, 2.0);
    ParameterList<D> ps;
    bn.collect(ps);
    nn::GradCheckOptions opt;
    opt.mode = nn::Mode::kEval;
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return bn.forward(g, x[0]); }, {randn({2, 4, 3, 3}, r)},
                          ps, opt);
  });
  add("ops", "gru", [] {
    Rng r(19);
    nn::Gru<D> cell("gru", 3, 4, r);
    ParameterList<D> ps;
    cell.collect(ps);
    const Tensor<D> h0 = randn({2, 1, 1, 4}, r, 0.5);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          return nn::gru(g, x[0], h0, g.param(cell.w_input), g.param(cell.w_hidden), g.param(cell.bias)).output;
        },
        {randn({2, 5, 1, 3}, r)}, ps);
  });
  add("ops", "mask_add", [] {
    Rng r(20);
    auto w = param("w", {1, 1, 1, 3}, r);
    Tensor<D> mask(Shape{2, 4, 1, 1});
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3) ? 1.0 : 0.0;
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::mask_add(g, x[0], mask, g.param(w)); },
                          {randn({2, 4, 1, 3}, r)}, {&w});
  });
  add("ops", "frame_mask", [] {
    Rng r(21);
    Tensor<D> mask(Shape{2, 4, 1, 1});
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i % 3) ? 1.0 : 0.0;
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::frame_mask(g, x[0], mask); },
                          {randn({2, 4, 2, 3}, r)}, {});
  });
  add("ops", "mse", [] {
    Rng r(22);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::mse(g, x[0], x[1]); },
                          {randn({2, 3, 2, 2}, r), randn({2, 3, 2, 2}, r)}, {});
  });
  add("ops", "weighted_sum", [] {
    Rng r(23);
    const Tensor<D> w = randn({2, 3, 2, 2}, r);
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::weighted_sum(g, x[0], w); },
                          {randn({2, 3, 2, 2}, r)}, {});
  });

  // --- spectral ------------------------------------------------------------
  add("spectral", "stft", [] {
    Rng r(30);
    dsp::FrameTransform<D> tr(dsp::StftConfig{16, 4});
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::stft(g, x[0], tr); }, {randn({2, 40, 1, 1}, r)},
                          {});
  });
  add("spectral", "istft", [] {
    Rng r(31);
    dsp::FrameTransform<D> tr(dsp::StftConfig{16, 4});
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::istft(g, x[0], tr); },
                          {randn({2, 6, 9, 2}, r)}, {});
  });
  add("spectral", "power_compress", [] {
    Rng r(32);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::power_compress(g, x[0], 0.3, 1e-10); },
                          {rand_away({2, 3, 4, 2}, r)}, {});
  });
  add("spectral", "power_expand", [] {
    Rng r(33);
    return nn::grad_check([](Graph<D>& g, Inputs x) { return nn::power_expand(g, x[0], 0.3); },
                          {rand_away({2, 3, 4, 2}, r)}, {});
  });
  add("spectral", "istft_stft_roundtrip", [] {
    Rng r(34);
    dsp::FrameTransform<D> tr(dsp::StftConfig{16, 4});
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return nn::stft(g, nn::istft(g, x[0], tr), tr); },
                          {randn({1, 6, 9, 2}, r)}, {});
  });

  // --- layers with stream state -------------------------------------------
  add("layers", "conv2d_layer_with_history", [] {
    Rng r(40);
    nn::Conv2d<D> conv("c", 2, 3, nn::Conv2dSpec{2, 3, 2, 1}, false, r);
    ParameterList<D> ps;
    conv.collect(ps);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          nn::StreamState<D> st;
          return conv.forward(g, x[0], st);
        },
        {randn({2, 4, 6, 2}, r)}, ps);
  });
  add("layers", "deconv_layer_with_history", [] {
    Rng r(41);
    nn::Conv2d<D> conv("d", 3, 2, nn::Conv2dSpec{2, 3, 2, 1}, true, r);
    ParameterList<D> ps;
    conv.collect(ps);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          nn::StreamState<D> st;
          return conv.forward(g, x[0], st);
        },
        {randn({2, 4, 3, 3}, r)}, ps);
  });

  // --- temporal blocks -------------------------------------------------------
  add("tcm", "tcm_block", [] {
    Rng r(50);
    temporal::TcmBlock<D> blk("tcm", 4, 3, 3, 2, r);
    ParameterList<D> ps;
    blk.collect(ps);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          nn::StreamState<D> st;
          return blk.forward(g, x[0], st);
        },
        {randn({2, 6, 1, 4}, r)}, ps);
  });
  add("tcm", "tcm_group", [] {
    Rng r(51);
    temporal::TemporalConfig cfg;
    cfg.channels = 4;
    cfg.tcm_hidden = 3;
    cfg.dilations = {1, 2, 4};
    temporal::TcmGroup<D> grp("grp", cfg, r);
    ParameterList<D> ps;
    grp.collect(ps);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          nn::StreamState<D> st;
          return grp.forward(g, x[0], st);
        },
        {randn({1, 8, 1, 4}, r)}, ps);
  });
  add("ggru", "ggru_block", [] {
    Rng r(52);
    temporal::GGruBlock<D> blk("gg", 6, 2, r);
    ParameterList<D> ps;
    blk.collect(ps);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          nn::StreamState<D> st;
          return blk.forward(g, x[0], st);
        },
        {randn({2, 5, 1, 6}, r)}, ps);
  });
  add("ggru", "ggru_single_group", [] {
    Rng r(53);
    temporal::GGruBlock<D> blk("gg1", 4, 1, r);
    ParameterList<D> ps;
    blk.collect(ps);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          nn::StreamState<D> st;
          return blk.forward(g, x[0], st);
        },
        {randn({1, 5, 1, 4}, r)}, ps);
  });
  add("stack", "interleaved_stack_with_mask", [] {
    Rng r(54);
    temporal::TemporalConfig cfg;
    cfg.channels = 4;
    cfg.tcm_hidden = 3;
    cfg.dilations = {1, 2};
    cfg.gru_groups = 2;
    temporal::TemporalStack<D> stack("st", "TGTG", cfg, true, r);
    ParameterList<D> ps;
    stack.collect(ps);
    // mask weights start at zero; move them off so their gradient path is live
    for (auto* p : ps)
      if (p->name.find("mask") != std::string::npos)
        for (auto& v : p->value.vec()) v = r.normal() * 0.3;
    Tensor<D> mask(Shape{1, 6, 1, 1}, 1.0);
    mask[2] = mask[3] = 0.0;
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          nn::StreamState<D> st;
          return stack.forward(g, x[0], st, &mask);
        },
        {randn({1, 6, 1, 4}, r)}, ps);
  });

  // --- full codec ---------------------------------------------------------
  add("codec", "codec_bypass_vq", [] {
    auto cfg = codec::tiny_config();
    cfg.enc_channels = {3, 4};
    cfg.latent = 6;
    cfg.latent_q = 4;
    cfg.tcm_hidden = 3;
    cfg.dilations = {1};
    codec::Codec<D> model(cfg, 5);
    model.bypass_vq = true;
    // zero-initialised residual paths are moved off zero so they carry gradient
    Rng r(60);
    for (auto* p : model.parameters())
      if (p->trainable && p->name.find("mask") != std::string::npos)
        for (auto& v : p->value.vec()) v = 0.3 * r.normal();
    Tensor<D> mask(Shape{1, 4, 1, 1}, 1.0);
    mask[1] = 0.0;
    nn::GradCheckOptions opt;
    opt.max_entries = 24;
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return model.forward(g, x[0], &mask).decoded; },
                          {randn({1, 112, 1, 1}, r, 0.3)}, model.inference_parameters(), opt);
  });
  add("codec", "aux_decoder", [] {
    auto cfg = codec::tiny_config();
    cfg.enc_channels = {3, 4};
    cfg.latent = 6;
    cfg.latent_q = 4;
    cfg.tcm_hidden = 3;
    cfg.dilations = {1};
    cfg.all_in_one = true;
    codec::Codec<D> model(cfg, 6);
    model.bypass_vq = true;
    Rng r(61);
    nn::GradCheckOptions opt;
    opt.max_entries = 24;
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return *model.forward(g, x[0], nullptr).aux_decoded; },
                          {randn({1, 112, 1, 1}, r, 0.3)}, model.parameters(), opt);
  });

  // --- losses ---------------------------------------------------------------
  add("loss", "recon_loss", [] {
    Rng r(70);
    dsp::FrameTransform<D> tr(dsp::StftConfig{16, 4});
    LossConfig lc;
    const Tensor<D> target = randn({1, 36, 1, 1}, r);
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) { return recon_loss(g, x[0], g.constant(target), tr, lc); },
        {rand_away({1, 6, 9, 2}, r)}, {});
  });
  add("loss", "commitment_loss", [] {
    Rng r(71);
    const Tensor<D> q = randn({1, 4, 1, 6}, r);
    return nn::grad_check([&](Graph<D>& g, Inputs x) { return vq::commitment_loss(g, x[0], q); },
                          {randn({1, 4, 1, 6}, r)}, {});
  });
  add("loss", "total_loss_all_in_one", [] {
    Rng r(72);
    LossConfig lc;
    return nn::grad_check(
        [&](Graph<D>& g, Inputs x) {
          return total_loss<D>(g, nn::mse(g, x[0], x[1]), nn::mse(g, x[1], x[2]), nn::mse(g, x[0], x[2]), lc)
              .total;
        },
        {randn({1, 3, 1, 2}, r), randn({1, 3, 1, 2}, r), randn({1, 3, 1, 2}, r)}, {});
  });
  return cases;
}

}  // namespace

const std::vector<std::string>& gradcheck_scopes() {
  static const std::vector<std::string> scopes{"ops",   "spectral", "layers", "tcm", "ggru",
                                               "stack", "codec",    "loss",   "all"};
  return scopes;
}

std::vector<GradCaseResult> run_gradcheck(const std::string& scope) {
  const auto& scopes = gradcheck_scopes();
  if (std::find(scopes.begin(), scopes.end(), scope) == scopes.end()) {
    std::string list;
    for (const auto& s : scopes) list += (list.empty() ? "" : ", ") + s;
    fail(ErrorKind::kUsage, "unknown gradcheck scope '" + scope + "'; valid scopes: " + list);
  }
  std::vector<GradCaseResult> out;
  for (const auto& c : build_cases())
    if (scope == "all" || c.scope == scope) out.push_back({c.scope, c.name, c.run()});
  return out;
}

}  // namespace tfnet::train
