#include "tfnet/train/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

#include "tfnet/core/error.hpp"

namespace tfnet::train {

std::vector<AblationArm> ablation_arms(const codec::CodecConfig& base) {
  struct Layout {
    const char* name;
    const char* encode;
    const char* decode;
  };
  const Layout layouts[] = {{"tcm-only", "TT", "TTTT"}, {"ggru-only", "GG", "GGGG"}, {"interleaved", "TG", "TGTG"}};
  std::vector<AblationArm> arms;
  for (const auto& l : layouts) {
    AblationArm a{l.name, base, 0};
    a.config.encode_stack = l.encode;
    a.config.decode_stack = l.decode;
    a.config.validate();
    codec::Codec<float> model(a.config, 0);
    a.parameters = model.trainable_count();
    arms.push_back(std::move(a));
  }
  return arms;
}

double parameter_spread(const std::vector<AblationArm>& arms) {
  require(!arms.empty(), ErrorKind::kConfig, "no ablation arms");
  auto [lo, hi] = std::minmax_element(arms.begin(), arms.end(),
                                      [](const auto& a, const auto& b) { return a.parameters < b.parameters; });
  return static_cast<double>(hi->parameters - lo->parameters) / static_cast<double>(hi->parameters);
}

std::vector<ArmResult> run_ablation(const codec::CodecConfig& base, const TrainConfig& cfg,
                                    const Corpus& corpus, double tolerance,
                                    const std::function<void(const std::string&, const StepMetrics&)>& progress) {
  const auto arms = ablation_arms(base);
  const double spread = parameter_spread(arms);
  if (spread > tolerance) {
    std::ostringstream msg;
    msg << "ablation arms differ by " << spread * 100.0 << "% in parameter count (limit " << tolerance * 100.0
        << "%):";
    for (const auto& a : arms) msg << " " << a.name << "=" << a.parameters;
    fail(ErrorKind::kConfig, msg.str());
  }
  std::vector<ArmResult> out;
  for (const auto& arm : arms) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig tc = cfg;
    tc.checkpoint_dir.clear();
    Trainer trainer(arm.config, tc, corpus);
    std::vector<double> losses;
    while (trainer.step_count() < tc.steps) {
      const auto m = trainer.step();
      losses.push_back(m.total);
      if (progress) progress(arm.name, m);
    }
    ArmResult r{arm.name, arm.parameters, 0.0, 0.0, 0.0};
    const std::size_t tail = std::max<std::size_t>(1, losses.size() / 10);
    for (std::size_t i = losses.size() - std::min(tail, losses.size()); i < losses.size(); ++i)
      r.final_loss += losses[i] / static_cast<double>(tail);
    r.validation_distance = trainer.validation_distance();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(r);
  }
  return out;
}

}  // namespace tfnet::train
