#include "tfnet/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "tfnet/core/error.hpp"
#include "tfnet/nn/checkpoint.hpp"
#include "tfnet/nn/ops.hpp"

namespace tfnet::train {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<float> to_floats(const Tensor<float>& t) { return t.vec(); }

// Scales all gradients so their global norm is at most `clip`.
double clip_gradients(nn::Adam<float>& adam, double clip) {
  const double norm = std::sqrt(adam.grad_norm_sq());
  if (clip > 0.0 && norm > clip) {
    const float s = static_cast<float>(clip / norm);
    for (auto* p : adam.parameters())
      for (auto& v : p->grad.vec()) v *= s;
  }
  return norm;
}

void init_codebook(codec::Codec<float>& model, const Tensor<float>& input, const Tensor<float>* mask,
                   std::uint64_t seed) {
  nn::Graph<float> g(nn::Mode::kTrain, false);
  auto f = model.forward(g, g.constant(input), mask);
  const auto& lat = g.value(f.latent);
  Rng rng(derive_seed(seed, 0xc0de));
  model.codebook().init_from(lat.data(), static_cast<std::size_t>(lat.dim(0)) * lat.dim(1), rng);
}

}  // namespace

// --- config ---------------------------------------------------------------

void TrainConfig::validate() const {
  require(adam.lr > 0.0, ErrorKind::kConfig, "lr must be positive");
  require(batch >= 1, ErrorKind::kConfig, "batch must be >= 1");
  require(steps >= 0, ErrorKind::kConfig, "steps must be >= 0");
  require(steps_per_epoch >= 1, ErrorKind::kConfig, "steps_per_epoch must be >= 1");
  require(grad_clip >= 0.0, ErrorKind::kConfig, "grad_clip must be >= 0");
  loss.validate();
  mix.validate();
  channel.validate();
}

void TrainConfig::apply(const KeyValues& kv) {
  adam.lr = kv.get_double("lr", adam.lr);
  batch = kv.get_int("batch", batch);
  steps = kv.get_int("steps", steps);
  steps_per_epoch = kv.get_int("steps_per_epoch", steps_per_epoch);
  grad_clip = kv.get_double("grad_clip", grad_clip);
  seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<int>(seed)));
  checkpoint_dir = kv.get_string("checkpoint_dir", checkpoint_dir);
  metrics_path = kv.get_string("metrics", metrics_path);
  loss.alpha = kv.get_double("alpha", loss.alpha);
  loss.aux_weight = kv.get_double("aux_weight", loss.aux_weight);
  mix.snr_min_db = kv.get_double("snr_min", mix.snr_min_db);
  mix.snr_max_db = kv.get_double("snr_max", mix.snr_max_db);
  mix.level_min_db = kv.get_double("level_min", mix.level_min_db);
  mix.level_max_db = kv.get_double("level_max", mix.level_max_db);
  mix.segment_s = kv.get_double("segment_s", mix.segment_s);
  mix.reverb = kv.get_bool("reverb", mix.reverb);
  channel.apply(kv);
  validate();
}

std::vector<std::string> TrainConfig::keys() {
  return {"lr",        "batch",     "steps",     "steps_per_epoch", "grad_clip", "seed",
          "checkpoint_dir", "metrics", "alpha", "aux_weight", "snr_min", "snr_max",
          "level_min", "level_max", "segment_s", "reverb", "channel_p", "channel_loss"};
}

nlohmann::json StepMetrics::to_json() const {
  nlohmann::json j{{"step", step},
                   {"total", total},
                   {"recon", recon},
                   {"commit", commit},
                   {"entropy_bits", entropy_bits},
                   {"dead_codes", dead_codes},
                   {"grad_norm", grad_norm},
                   {"seconds", seconds}};
  if (aux) j["aux"] = *aux;
  return j;
}

// --- trainer ---------------------------------------------------------------

Trainer::Trainer(const codec::CodecConfig& model_cfg, const TrainConfig& cfg, Corpus corpus)
    : model_cfg_(model_cfg), cfg_(cfg), corpus_(std::move(corpus)) {
  model_cfg_.validate();
  cfg_.validate();
  require(!corpus_.clean.empty(), ErrorKind::kConfig, "training corpus has no clean clips");
  require(!model_cfg_.all_in_one || !corpus_.noise.empty(), ErrorKind::kConfig,
          "all-in-one training needs noise clips");
  model_ = std::make_unique<codec::Codec<float>>(model_cfg_, cfg_.seed);
  adam_ = std::make_unique<nn::Adam<float>>(model_->parameters(), cfg_.adam);
}

Batch Trainer::make_batch(std::int64_t step) const {
  const int sr = model_cfg_.sample_rate;
  const int len = static_cast<int>(cfg_.mix.segment_s * sr);
  const auto& st = model_cfg_.stft;
  require(len >= st.window_len, ErrorKind::kConfig, "segment shorter than one window");
  const int frames = (len - st.window_len) / st.hop_len + 1;
  const int B = cfg_.batch;
  Batch b{Tensor<float>(Shape{B, len, 1, 1}), Tensor<float>(Shape{B, len, 1, 1}),
          Tensor<float>(Shape{B, frames, 1, 1}, 1.0f)};
  const std::uint64_t step_seed = derive_seed(cfg_.seed, static_cast<std::uint64_t>(step));
  for (int i = 0; i < B; ++i) {
    const std::uint64_t s = derive_seed(step_seed, static_cast<std::uint64_t>(i));
    Rng pick(s);
    const auto& clean = corpus_.clean[pick.index(corpus_.clean.size())];
    Mixture m;
    if (model_cfg_.all_in_one) {
      const auto& noise = corpus_.noise[pick.index(corpus_.noise.size())];
      m = synthesize_mixture(clean, noise, cfg_.mix, derive_seed(s, 1), sr);
      const int fpp = model_cfg_.frames_per_packet;
      const auto trace = channel::simulate(cfg_.channel, (frames + fpp - 1) / fpp, derive_seed(s, 2));
      const auto flags = channel::expand_to_frames(trace, fpp, frames);
      for (int t = 0; t < frames; ++t) b.mask(i, t, 0, 0) = flags[t] ? 1.0f : 0.0f;
    } else {
      m = leveled_clean(clean, cfg_.mix, derive_seed(s, 1), sr);
    }
    for (int n = 0; n < len; ++n) {
      b.input(i, n, 0, 0) = static_cast<float>(m.noisy[n]);
      b.target(i, n, 0, 0) = static_cast<float>(m.clean[n]);
    }
  }
  return b;
}

StepMetrics Trainer::run(const Batch& batch, double lr) {
  auto& model = *model_;
  const auto t0 = Clock::now();
  const Tensor<float>* mask = model_cfg_.all_in_one ? &batch.mask : nullptr;
  if (!model.codebook().initialized()) init_codebook(model, batch.input, mask, cfg_.seed);

  nn::Graph<float> g(nn::Mode::kTrain);
  auto f = model.forward(g, g.constant(batch.input), mask);
  Var target = g.constant(batch.target);
  Var recon = recon_loss(g, f.decoded, target, model.transform(), cfg_.loss);
  Var commit = vq::commitment_loss(g, f.latent, f.codewords);
  std::optional<Var> aux;
  if (f.aux_decoded) aux = recon_loss(g, *f.aux_decoded, target, model.transform(), cfg_.loss);
  auto terms = total_loss<float>(g, recon, commit, aux, cfg_.loss);

  StepMetrics m;
  m.step = adam_->steps() + 1;
  m.total = g.value(terms.total)[0];
  m.recon = g.value(recon)[0];
  m.commit = g.value(commit)[0];
  if (aux) m.aux = g.value(*aux)[0];
  if (!std::isfinite(m.total)) {
    const std::string dir = cfg_.checkpoint_dir.empty() ? "." : cfg_.checkpoint_dir;
    const std::string dump = dir + "/nan_dump_step" + std::to_string(m.step) + ".json";
    nlohmann::json j = m.to_json();
    nlohmann::json norms = nlohmann::json::object();
    for (auto* p : model.parameters()) {
      double acc = 0.0;
      for (float v : p->value.vec()) acc += double(v) * v;
      norms[p->name] = std::sqrt(acc);
    }
    j["parameter_norms"] = norms;
    std::ofstream(dump) << j.dump(2) << "\n";
    fail(ErrorKind::kNumerical,
         "non-finite loss at step " + std::to_string(m.step) + "; diagnostics written to " + dump);
  }

  adam_->zero_grad();
  g.backward(terms.total);
  m.grad_norm = clip_gradients(*adam_, cfg_.grad_clip);
  adam_->set_lr(lr);
  adam_->step();
  const auto& lat = g.value(f.latent);
  if (!f.indices.empty())
    model.codebook().ema_update(lat.data(), f.indices.data(),
                                static_cast<std::size_t>(lat.dim(0)) * lat.dim(1));
  m.entropy_bits = vq::usage_entropy_bits(f.indices, model_cfg_.vq_groups, model_cfg_.vq_size);
  m.dead_codes = model.codebook().dead_codes();
  m.seconds = seconds_since(t0);
  return m;
}

void Trainer::log(const StepMetrics& m) const {
  if (cfg_.metrics_path.empty()) return;
  std::ofstream f(cfg_.metrics_path, std::ios::app);
  require(static_cast<bool>(f), ErrorKind::kFormat, "cannot append to " + cfg_.metrics_path);
  f << m.to_json().dump() << "\n";
}

StepMetrics Trainer::step() {
  const auto m = run(make_batch(adam_->steps()), cfg_.adam.lr);
  log(m);
  return m;
}

std::vector<StepMetrics> Trainer::train_epoch() {
  std::vector<StepMetrics> out;
  for (int i = 0; i < cfg_.steps_per_epoch; ++i) out.push_back(step());
  if (!cfg_.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg_.checkpoint_dir);
    const auto path = cfg_.checkpoint_dir + "/step" + std::to_string(adam_->steps()) + ".ckpt";
    save(path);
    save(cfg_.checkpoint_dir + "/last.ckpt");
  }
  return out;
}

std::vector<StepMetrics> Trainer::train() {
  std::vector<StepMetrics> out;
  while (adam_->steps() < cfg_.steps) {
    const int left = static_cast<int>(cfg_.steps - adam_->steps());
    if (left >= cfg_.steps_per_epoch) {
      auto e = train_epoch();
      out.insert(out.end(), e.begin(), e.end());
    } else {
      for (int i = 0; i < left; ++i) out.push_back(step());
    }
  }
  return out;
}

void Trainer::save(const std::string& path) const {
  nn::Checkpoint ckpt;
  ckpt.meta["codec"] = model_cfg_.to_json();
  ckpt.meta["step"] = adam_->steps();
  ckpt.meta["seed"] = cfg_.seed;
  ckpt.meta["batch"] = cfg_.batch;
  ckpt.meta["segment_s"] = cfg_.mix.segment_s;
  nn::export_parameters(model_->parameters(), ckpt);
  const auto& params = adam_->parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    ckpt.put("adam.m." + params[k]->name, params[k]->value.shape(), to_floats(adam_->first_moments()[k]));
    ckpt.put("adam.v." + params[k]->name, params[k]->value.shape(), to_floats(adam_->second_moments()[k]));
  }
  ckpt.save(path);
}

void Trainer::resume(const std::string& path) {
  const auto ckpt = nn::Checkpoint::load(path);
  require(ckpt.meta.contains("codec") && ckpt.meta.contains("step"), ErrorKind::kFormat,
          path + ": not a training checkpoint");
  const auto saved = codec::CodecConfig::from_json(ckpt.meta["codec"]);
  require(saved == model_cfg_, ErrorKind::kConfig,
          "checkpoint model config differs\n  checkpoint: " + saved.to_json().dump() +
              "\n  requested:  " + model_cfg_.to_json().dump());
  // The batch stream is a function of these; resuming under others would not
  // reproduce the uninterrupted run.
  const nlohmann::json have = {{"seed", cfg_.seed}, {"batch", cfg_.batch}, {"segment_s", cfg_.mix.segment_s}};
  const nlohmann::json was = {{"seed", ckpt.meta.value("seed", cfg_.seed)},
                              {"batch", ckpt.meta.value("batch", cfg_.batch)},
                              {"segment_s", ckpt.meta.value("segment_s", cfg_.mix.segment_s)}};
  require(have == was, ErrorKind::kConfig,
          "checkpoint training config differs\n  checkpoint: " + was.dump() + "\n  requested:  " + have.dump());
  nn::import_parameters(model_->parameters(), ckpt);
  const auto& params = adam_->parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (auto [prefix, dst] : {std::pair{"adam.m.", &adam_->first_moments()[k]},
                               std::pair{"adam.v.", &adam_->second_moments()[k]}}) {
      const auto* rec = ckpt.find(prefix + params[k]->name);
      require(rec != nullptr && rec->shape == dst->shape(), ErrorKind::kFormat,
              path + ": missing optimizer state for " + params[k]->name);
      dst->vec() = rec->data;
    }
  }
  adam_->set_steps(ckpt.meta["step"].get<std::int64_t>());
}

double Trainer::validation_distance(int clips) {
  TrainConfig saved = cfg_;
  cfg_.batch = clips;
  cfg_.seed = derive_seed(saved.seed, 0x7a11);
  const Batch b = make_batch(0);
  cfg_ = saved;
  nn::Graph<float> g(nn::Mode::kEval, false);
  auto f = model_->forward(g, g.constant(b.input), model_cfg_.all_in_one ? &b.mask : nullptr);
  return g.value(recon_loss(g, f.decoded, g.constant(b.target), model_->transform(), cfg_.loss))[0];
}

// --- overfit smoke ------------------------------------------------------------

double reconstruction_snr_db(codec::Codec<float>& model, const std::vector<double>& clip,
                             std::size_t skip) {
  require(clip.size() > 2 * skip, ErrorKind::kShape, "clip too short for SNR evaluation");
  const auto idx = model.encode(clip);
  const auto y = model.decode(idx, {});
  double se = 0.0, ne = 0.0;
  for (std::size_t i = skip; i < clip.size() - skip; ++i) {
    se += clip[i] * clip[i];
    ne += (clip[i] - y[i]) * (clip[i] - y[i]);
  }
  return 10.0 * std::log10(se / std::max(ne, 1e-300));
}

OverfitResult overfit(codec::Codec<float>& model, const std::vector<double>& clip,
                      const OverfitConfig& cfg, const std::function<void(int, double, double)>& progress) {
  const auto t0 = Clock::now();
  Tensor<float> wave(Shape{1, static_cast<int>(clip.size()), 1, 1});
  for (std::size_t i = 0; i < clip.size(); ++i) wave[i] = static_cast<float>(clip[i]);
  if (!model.codebook().initialized()) init_codebook(model, wave, nullptr, cfg.seed);
  nn::Adam<float> adam(model.inference_parameters(), nn::AdamConfig{cfg.lr});
  const std::size_t skip = static_cast<std::size_t>(model.config().stft.window_len);

  OverfitResult r;
  for (int s = 0; s < cfg.max_steps; ++s) {
    nn::Graph<float> g(nn::Mode::kTrain);
    Var w = g.constant(wave);
    auto f = model.forward(g, w, nullptr);
    Var recon = recon_loss(g, f.decoded, w, model.transform(), cfg.loss);
    Var commit = vq::commitment_loss(g, f.latent, f.codewords);
    auto terms = total_loss<float>(g, recon, commit, std::nullopt, cfg.loss);
    const double loss = g.value(terms.total)[0];
    require(std::isfinite(loss), ErrorKind::kNumerical,
            "non-finite loss at overfit step " + std::to_string(s));
    r.losses.push_back(loss);
    adam.zero_grad();
    g.backward(terms.total);
    clip_gradients(adam, cfg.grad_clip);
    const double u = static_cast<double>(s) / cfg.max_steps;
    adam.set_lr(cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * u)));
    adam.step();
    const auto& lat = g.value(f.latent);
    if (!f.indices.empty())
      model.codebook().ema_update(lat.data(), f.indices.data(), static_cast<std::size_t>(lat.dim(1)));

    const bool last = s + 1 == cfg.max_steps || seconds_since(t0) > cfg.max_seconds;
    if ((s + 1) % cfg.eval_every == 0 || last) {
      r.final_snr_db = reconstruction_snr_db(model, clip, skip);
      r.snr_history.emplace_back(s + 1, r.final_snr_db);
      if (progress) progress(s + 1, loss, r.final_snr_db);
      if (r.final_snr_db > cfg.target_snr_db) {
        r.reached = true;
        break;
      }
    }
    if (last) break;
  }
  r.seconds = seconds_since(t0);
  return r;
}

void save_model(codec::Codec<float>& model, const std::string& path) {
  nn::Checkpoint ckpt;
  ckpt.meta["codec"] = model.config().to_json();
  nn::export_parameters(model.parameters(), ckpt);
  ckpt.save(path);
}

std::unique_ptr<codec::Codec<float>> load_model(const std::string& path) {
  const auto ckpt = nn::Checkpoint::load(path);
  require(ckpt.meta.contains("codec"), ErrorKind::kFormat, path + ": checkpoint has no model config");
  auto model = std::make_unique<codec::Codec<float>>(codec::CodecConfig::from_json(ckpt.meta["codec"]), 0);
  nn::import_parameters(model->parameters(), ckpt);
  return model;
}

std::vector<double> block_means(const std::vector<double>& x, std::size_t block) {
  std::vector<double> out;
  for (std::size_t i = 0; i + block <= x.size(); i += block) {
    double acc = 0.0;
    for (std::size_t k = i; k < i + block; ++k) acc += x[k];
    out.push_back(acc / static_cast<double>(block));
  }
  return out;
}

}  // namespace tfnet::train
