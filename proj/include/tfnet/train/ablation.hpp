#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tfnet/codec/config.hpp"
#include "tfnet/train/trainer.hpp"

namespace tfnet::train {

struct AblationArm {
  std::string name;
  codec::CodecConfig config;
  std::size_t parameters = 0;  // trainable, inference graph
};

/// TCM-only, G-GRU-only and interleaved variants of `base` (stack layouts
/// TT/TTTT, GG/GGGG, TG/TGTG) with their parameter counts.
std::vector<AblationArm> ablation_arms(const codec::CodecConfig& base);

/// (max - min) / max over the arms' parameter counts.
double parameter_spread(const std::vector<AblationArm>& arms);

struct ArmResult {
  std::string name;
  std::size_t parameters = 0;
  double final_loss = 0.0;        // mean total loss over the last 10% of steps
  double validation_distance = 0.0;
  double seconds = 0.0;
};

/// Trains every arm from the same seed and data stream. Refuses
/// (ErrorKind::kConfig) when the parameter spread exceeds `tolerance`.
std::vector<ArmResult> run_ablation(const codec::CodecConfig& base, const TrainConfig& cfg,
                                    const Corpus& corpus, double tolerance = 0.05,
                                    const std::function<void(const std::string&, const StepMetrics&)>&
                                        progress = {});

}  // namespace tfnet::train
