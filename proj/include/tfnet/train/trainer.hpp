#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfnet/channel/channel.hpp"
#include "tfnet/codec/codec.hpp"
#include "tfnet/nn/optim.hpp"
#include "tfnet/train/data.hpp"
#include "tfnet/train/loss.hpp"

namespace tfnet::train {

struct TrainConfig {
  nn::AdamConfig adam;
  int batch = 8;
  int steps = 1000;
  int steps_per_epoch = 250;  // checkpoint cadence
  double grad_clip = 0.0;     // global L2 norm; 0 disables
  std::uint64_t seed = 1;
  std::string checkpoint_dir;  // empty: no checkpoints
  std::string metrics_path;    // empty: no NDJSON log
  LossConfig loss;
  MixtureSpec mix;
  channel::ThreeStateModel channel;

  void validate() const;
  /// Keys: lr, batch, steps, steps_per_epoch, grad_clip, seed, checkpoint_dir,
  /// metrics, alpha, aux_weight, snr_min, snr_max, level_min, level_max,
  /// segment_s, reverb, channel_p, channel_loss.
  void apply(const KeyValues& kv);
  static std::vector<std::string> keys();
};

struct StepMetrics {
  std::int64_t step = 0;
  double total = 0.0;
  double recon = 0.0;
  double commit = 0.0;
  std::optional<double> aux;
  double entropy_bits = 0.0;  // codebook usage, mean over groups
  int dead_codes = 0;
  double grad_norm = 0.0;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

/// A batch as fed to the network.
struct Batch {
  Tensor<float> input;   // [B, L, 1, 1]
  Tensor<float> target;  // [B, L, 1, 1]
  Tensor<float> mask;    // [B, T, 1, 1]
};

/// Optimisation loop for plain codec training and all-in-one training
/// (noisy input, simulated packet loss, auxiliary clean decoder).
class Trainer {
 public:
  Trainer(const codec::CodecConfig& model_cfg, const TrainConfig& cfg, Corpus corpus);

  codec::Codec<float>& model() { return *model_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return adam_->steps(); }

  /// Batch for a given step; a pure function of (seed, step).
  Batch make_batch(std::int64_t step) const;

  /// One step: forward, loss, backward, Adam, codebook EMA. Non-finite
  /// loss raises ErrorKind::kNumerical after writing a diagnostic dump.
  StepMetrics step();
  /// Runs steps_per_epoch steps and checkpoints when a directory is set.
  std::vector<StepMetrics> train_epoch();
  /// Runs until cfg.steps.
  std::vector<StepMetrics> train();

  void save(const std::string& path) const;
  /// Restores parameters, codebook state, Adam moments and the step count.
  void resume(const std::string& path);

  /// Mean recon loss of the model in eval mode on a fixed held-out batch.
  double validation_distance(int clips = 4);

 private:
  StepMetrics run(const Batch& batch, double lr);
  void log(const StepMetrics& m) const;

  codec::CodecConfig model_cfg_;
  TrainConfig cfg_;
  Corpus corpus_;
  std::unique_ptr<codec::Codec<float>> model_;
  std::unique_ptr<nn::Adam<float>> adam_;
};

struct OverfitConfig {
  double lr = 1e-3;
  double lr_final = 1e-4;    // cosine decay target over max_steps
  double grad_clip = 1.0;
  int max_steps = 3000;
  double max_seconds = 1800.0;
  double target_snr_db = 10.0;
  int eval_every = 100;
  std::uint64_t seed = 1;
  LossConfig loss;
};

struct OverfitResult {
  std::vector<double> losses;  // total loss per step
  std::vector<std::pair<int, double>> snr_history;
  double final_snr_db = -INFINITY;
  double seconds = 0.0;
  bool reached = false;
};

/// Reconstruction SNR of the waveform codec path over [skip, L - skip).
double reconstruction_snr_db(codec::Codec<float>& model, const std::vector<double>& clip,
                             std::size_t skip);

/// Trains on a single clip (batch 1) until the eval-mode reconstruction SNR
/// exceeds the target or a limit is hit. `progress` is called after each
/// evaluation.
OverfitResult overfit(codec::Codec<float>& model, const std::vector<double>& clip,
                      const OverfitConfig& cfg,
                      const std::function<void(int, double, double)>& progress = {});

/// Model-only checkpoints (also readable from training checkpoints).
void save_model(codec::Codec<float>& model, const std::string& path);
std::unique_ptr<codec::Codec<float>> load_model(const std::string& path);

/// Means of consecutive non-overlapping blocks.
std::vector<double> block_means(const std::vector<double>& x, std::size_t block);

}  // namespace tfnet::train
