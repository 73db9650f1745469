// tfnet command-line tool: encode, decode, train, ablate, simulate,
// gradcheck, eval. Reports go to stdout as key=value lines; diagnostics
// go to stderr.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tfnet/bitstream/bitstream.hpp"
#include "tfnet/channel/channel.hpp"
#include "tfnet/codec/codec.hpp"
#include "tfnet/core/error.hpp"
#include "tfnet/core/keyvalue.hpp"
#include "tfnet/core/wav.hpp"
#include "tfnet/train/ablation.hpp"
#include "tfnet/train/gradsuite.hpp"
#include "tfnet/train/loss.hpp"
#include "tfnet/train/trainer.hpp"

namespace {

using namespace tfnet;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kUsage:
    case ErrorKind::kConfig:
      return 1;
    case ErrorKind::kShape:
    case ErrorKind::kFormat:
    case ErrorKind::kState:
      return 2;
    case ErrorKind::kNumerical:
      return 3;
  }
  return 2;
}

// Settings shared by every subcommand: compiled defaults, then --config,
// then --set and dedicated flags.
struct Settings {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::int64_t> seed;

  KeyValues resolve() const {
    KeyValues kv;
    if (!config_file.empty()) kv = KeyValues::load(config_file);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      require(eq != std::string::npos && eq > 0, ErrorKind::kUsage, "--set expects key=value, got '" + o + "'");
      kv.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (seed) kv.set("seed", std::to_string(*seed));
    std::vector<std::string> known = codec::CodecConfig::keys();
    for (const auto& k : train::TrainConfig::keys()) known.push_back(k);
    for (const char* k : {"corpus", "corpus_clips", "corpus_seconds"}) known.push_back(k);
    const auto unknown = kv.unknown_keys(known);
    if (!unknown.empty()) {
      std::string list;
      for (const auto& k : unknown) list += " " + k;
      fail(ErrorKind::kUsage, "unknown configuration keys:" + list);
    }
    return kv;
  }
};

void add_settings(CLI::App* app, Settings& s) {
  app->add_option("-c,--config", s.config_file, "key=value configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", s.overrides, "override a configuration key (key=value), repeatable");
  app->add_option("--seed", s.seed, "random seed");
}

codec::CodecConfig model_config(const KeyValues& kv) {
  codec::CodecConfig cfg;
  cfg.apply(kv);
  cfg.validate();
  return cfg;
}

std::unique_ptr<codec::Codec<float>> open_model(const std::string& path, const KeyValues& kv) {
  if (!path.empty()) return train::load_model(path);
  std::cerr << "warning: no --model given; using an untrained model built from the configuration\n";
  return std::make_unique<codec::Codec<float>>(model_config(kv),
                                               static_cast<std::uint64_t>(kv.get_int("seed", 1)));
}

bitstream::StreamHeader header_for(const codec::CodecConfig& cfg, std::size_t samples) {
  bitstream::StreamHeader h;
  h.sample_rate = static_cast<std::uint32_t>(cfg.sample_rate);
  h.window_len = static_cast<std::uint32_t>(cfg.stft.window_len);
  h.hop_len = static_cast<std::uint32_t>(cfg.stft.hop_len);
  h.groups = static_cast<std::uint32_t>(cfg.vq_groups);
  h.codebook_size = static_cast<std::uint32_t>(cfg.vq_size);
  h.frames_per_packet = static_cast<std::uint32_t>(cfg.frames_per_packet);
  h.num_samples = static_cast<std::uint32_t>(samples);
  return h;
}

void check_header(const bitstream::StreamHeader& h, const codec::CodecConfig& cfg) {
  auto expect = header_for(cfg, h.num_samples);
  if (!(expect == h))
    fail(ErrorKind::kFormat, "stream header does not match the model\n  stream: " + h.describe() +
                                 "\n  model:  " + expect.describe());
}

train::Corpus load_corpus(const KeyValues& kv, int sample_rate) {
  const std::string manifest = kv.get_string("corpus", "");
  if (!manifest.empty()) return train::Corpus::from_manifest(manifest);
  const int clips = kv.get_int("corpus_clips", 8);
  const double seconds = kv.get_double("corpus_seconds", 6.0);
  std::cerr << "using a synthetic corpus of " << clips << " clean clips\n";
  return train::Corpus::synthetic(clips, 5, seconds, static_cast<std::uint64_t>(kv.get_int("seed", 1)) + 99,
                                  sample_rate);
}

void print_metrics(const std::vector<double>& out, const std::vector<double>& ref, const codec::CodecConfig& cfg) {
  const std::size_t n = std::min(out.size(), ref.size());
  double se = 0.0, ne = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    se += ref[i] * ref[i];
    ne += (ref[i] - out[i]) * (ref[i] - out[i]);
  }
  std::printf("snr_db=%.3f\n", 10.0 * std::log10(se / std::max(ne, 1e-300)));
  std::printf("spectral_distance=%.6g\n", train::spectral_distance(out, ref, cfg.stft, cfg.power));
}

// --- subcommands -------------------------------------------------------------

int cmd_encode(const Settings& s, const std::string& in, const std::string& model_path, const std::string& out) {
  const auto kv = s.resolve();
  auto model = open_model(model_path, kv);
  const auto& cfg = model->config();
  const auto audio = read_wav(in);
  require(audio.sample_rate == cfg.sample_rate, ErrorKind::kFormat,
          in + ": sample rate " + std::to_string(audio.sample_rate) + " Hz, model expects " +
              std::to_string(cfg.sample_rate) + " Hz");
  const auto indices = model->encode(audio.samples);
  const auto stream = bitstream::packetize(indices, header_for(cfg, audio.samples.size()));
  bitstream::write_stream(out, stream);
  std::printf("frames=%d\n", model->frames_for(audio.samples.size()));
  std::printf("packets=%zu\n", stream.packets.size());
  std::printf("payload_bits=%zu\n", stream.packets.size() * stream.header.payload_bits());
  std::printf("file_bytes=%zu\n", static_cast<std::size_t>(std::filesystem::file_size(out)));
  std::printf("payload_kbps=%.3f\n", bitstream::payload_kbps(stream));
  return 0;
}

int cmd_decode(const Settings& s, const std::string& in, const std::string& model_path, const std::string& out,
               const std::string& trace_path, const std::string& reference) {
  const auto kv = s.resolve();
  auto model = open_model(model_path, kv);
  const auto& cfg = model->config();
  const auto stream = bitstream::read_stream(in);
  check_header(stream.header, cfg);
  channel::PacketTrace trace;
  if (trace_path.empty())
    trace.received.assign(stream.packets.size(), 1);
  else
    trace = channel::read_trace(trace_path);
  const auto d = bitstream::apply_trace(stream, trace);
  const std::size_t frames = model->frames_for(stream.header.num_samples);
  const std::size_t groups = stream.header.groups;
  auto y = model->decode(std::span(d.indices).first(frames * groups), std::span(d.frame_received).first(frames));
  y.resize(stream.header.num_samples);
  for (double v : y) require(std::isfinite(v), ErrorKind::kNumerical, "decoder produced non-finite samples");
  write_wav(out, PcmAudio{y, cfg.sample_rate});
  std::printf("samples=%zu\n", y.size());
  std::printf("packets=%zu\n", stream.packets.size());
  std::printf("packet_loss_rate=%.6f\n", trace.loss_rate());
  std::printf("payload_kbps=%.3f\n", bitstream::payload_kbps(stream));
  if (!reference.empty()) {
    const auto ref = read_wav(reference);
    print_metrics(y, ref.samples, cfg);
  }
  return 0;
}

int cmd_train(const Settings& s, const std::string& out, const std::string& resume, std::optional<int> steps) {
  auto kv = s.resolve();
  if (steps) kv.set("steps", std::to_string(*steps));
  const auto mcfg = model_config(kv);
  train::TrainConfig tcfg;
  tcfg.apply(kv);
  train::Trainer trainer(mcfg, tcfg, load_corpus(kv, mcfg.sample_rate));
  if (!resume.empty()) {
    trainer.resume(resume);
    std::cerr << "resumed at step " << trainer.step_count() << "\n";
  }
  std::cerr << "model parameters: " << trainer.model().trainable_count() << " (inference), "
            << trainer.model().trainable_count(true) << " (training)\n";
  std::optional<train::StepMetrics> last;
  while (trainer.step_count() < tcfg.steps) {
    if (tcfg.steps - trainer.step_count() >= tcfg.steps_per_epoch)
      last = trainer.train_epoch().back();
    else
      last = trainer.step();
    if (last->step % tcfg.steps_per_epoch == 0 || last->step == tcfg.steps)
      std::cerr << "step " << last->step << " loss " << last->total << " recon " << last->recon << " commit "
                << last->commit << " entropy " << last->entropy_bits << "\n";
  }
  if (!out.empty()) trainer.save(out);
  std::printf("steps=%lld\n", static_cast<long long>(trainer.step_count()));
  if (last) {
    std::printf("loss=%.6g\n", last->total);
    std::printf("recon=%.6g\n", last->recon);
    std::printf("commit=%.6g\n", last->commit);
    if (last->aux) std::printf("aux=%.6g\n", *last->aux);
  }
  std::printf("validation_distance=%.6g\n", trainer.validation_distance());
  return 0;
}

int cmd_ablate(const Settings& s, std::optional<int> steps) {
  auto kv = s.resolve();
  if (steps) kv.set("steps", std::to_string(*steps));
  const auto base = model_config(kv);
  train::TrainConfig tcfg;
  tcfg.apply(kv);
  const auto arms = train::ablation_arms(base);
  for (const auto& a : arms) std::cerr << a.name << ": " << a.parameters << " parameters\n";
  const auto results = train::run_ablation(base, tcfg, load_corpus(kv, base.sample_rate), 0.05,
                                           [](const std::string& arm, const train::StepMetrics& m) {
                                             if (m.step % 50 == 0)
                                               std::cerr << arm << " step " << m.step << " loss " << m.total << "\n";
                                           });
  std::printf("parameter_spread=%.4f\n", train::parameter_spread(arms));
  std::size_t best = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    std::printf("arm=%s parameters=%zu final_loss=%.6g validation_distance=%.6g seconds=%.1f\n", r.name.c_str(),
                r.parameters, r.final_loss, r.validation_distance, r.seconds);
    if (r.validation_distance < results[best].validation_distance) best = i;
  }
  std::printf("best=%s\n", results[best].name.c_str());
  return 0;
}

int cmd_simulate(const Settings& s, std::size_t packets, const std::string& out) {
  const auto kv = s.resolve();
  channel::ThreeStateModel model;
  model.apply(kv);
  const auto seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  const auto trace = channel::simulate(model, packets, seed);
  if (!out.empty()) channel::write_trace(out, trace);
  std::printf("packets=%zu\n", trace.size());
  std::printf("lost=%zu\n", trace.lost());
  std::printf("empirical_loss_rate=%.6f\n", trace.loss_rate());
  try {
    std::printf("stationary_loss_rate=%.6f\n", channel::stationary_loss_rate(model));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNumerical) throw;
    std::printf("stationary_loss_rate=undefined\n");
    std::cerr << "note: " << e.what() << "\n";
  }
  std::printf("expected_loss_rate=%.6f\n", channel::expected_loss_rate(model, packets));
  return 0;
}

int cmd_gradcheck(const std::string& scope, double tolerance) {
  const auto results = train::run_gradcheck(scope);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results) {
    std::printf("case=%s/%s max_rel_error=%.3e worst_tensor=%s\n", r.scope.c_str(), r.name.c_str(),
                r.result.max_rel_error, r.result.worst.c_str());
    if (r.result.max_rel_error >= worst) {
      worst = r.result.max_rel_error;
      worst_name = r.scope + "/" + r.name;
    }
  }
  std::printf("worst_case=%s\n", worst_name.c_str());
  std::printf("worst_rel_error=%.3e\n", worst);
  if (!(worst < tolerance)) {
    std::cerr << "gradient check failed: " << worst << " >= " << tolerance << "\n";
    return 3;
  }
  return 0;
}

int cmd_eval(const Settings& s, const std::string& in, const std::string& model_path, const std::string& trace_path,
             bool simulate_loss) {
  const auto kv = s.resolve();
  auto model = open_model(model_path, kv);
  const auto& cfg = model->config();
  const auto audio = read_wav(in);
  require(audio.sample_rate == cfg.sample_rate, ErrorKind::kFormat, in + ": sample rate mismatch");
  const auto indices = model->encode(audio.samples);
  const auto stream = bitstream::packetize(indices, header_for(cfg, audio.samples.size()));
  channel::PacketTrace trace;
  if (!trace_path.empty()) {
    trace = channel::read_trace(trace_path);
  } else if (simulate_loss) {
    channel::ThreeStateModel ch;
    ch.apply(kv);
    trace = channel::simulate(ch, stream.packets.size(), static_cast<std::uint64_t>(kv.get_int("seed", 1)));
  } else {
    trace.received.assign(stream.packets.size(), 1);
  }
  const auto d = bitstream::apply_trace(stream, trace);
  const std::size_t frames = model->frames_for(audio.samples.size());
  auto y = model->decode(std::span(d.indices).first(frames * cfg.vq_groups), std::span(d.frame_received).first(frames));
  y.resize(audio.samples.size());
  std::printf("payload_kbps=%.3f\n", bitstream::payload_kbps(stream));
  std::printf("packet_loss_rate=%.6f\n", trace.loss_rate());
  std::printf("codebook_entropy_bits=%.4f\n", vq::usage_entropy_bits(indices, cfg.vq_groups, cfg.vq_size));
  print_metrics(y, audio.samples, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tfnet: low-latency neural speech codec toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tfnet 0.1.0");

  Settings settings;
  std::string in, out, model, trace, reference, resume, scope = "all";
  std::optional<int> steps;
  std::size_t packets = 10000;
  double tolerance = 1e-5;
  bool simulate_loss = false;

  auto* enc = app.add_subcommand("encode", "encode a 16 kHz mono WAV file into a .tfn stream");
  enc->add_option("-i,--input", in, "input WAV")->required()->check(CLI::ExistingFile);
  enc->add_option("-o,--output", out, "output .tfn")->required();
  enc->add_option("-m,--model", model, "model checkpoint");
  add_settings(enc, settings);

  auto* dec = app.add_subcommand("decode", "decode a .tfn stream, optionally applying a packet-loss trace");
  dec->add_option("-i,--input", in, "input .tfn")->required()->check(CLI::ExistingFile);
  dec->add_option("-o,--output", out, "output WAV")->required();
  dec->add_option("-m,--model", model, "model checkpoint");
  dec->add_option("-t,--trace", trace, "packet trace ('1' lost, '0' received)")->check(CLI::ExistingFile);
  dec->add_option("-r,--reference", reference, "reference WAV for SNR and spectral distance")
      ->check(CLI::ExistingFile);
  add_settings(dec, settings);

  auto* trn = app.add_subcommand("train", "train a codec (plain or all_in_one=true)");
  trn->add_option("-o,--output", out, "final checkpoint path");
  trn->add_option("--resume", resume, "training checkpoint to resume from")->check(CLI::ExistingFile);
  trn->add_option("--steps", steps, "total optimisation steps");
  add_settings(trn, settings);

  auto* abl = app.add_subcommand("ablate", "train TCM-only, G-GRU-only and interleaved arms and compare");
  abl->add_option("--steps", steps, "steps per arm");
  add_settings(abl, settings);

  auto* sim = app.add_subcommand("simulate", "simulate the three-state packet-loss channel");
  sim->add_option("-n,--packets", packets, "number of packets")->check(CLI::PositiveNumber);
  sim->add_option("-o,--output", out, "trace file");
  add_settings(sim, settings);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("-s,--scope", scope, "ops, spectral, layers, tcm, ggru, stack, codec, loss or all");
  grad->add_option("--tolerance", tolerance, "maximum relative error");

  auto* ev = app.add_subcommand("eval", "encode and decode a WAV in memory and report quality metrics");
  ev->add_option("-i,--input", in, "input WAV")->required()->check(CLI::ExistingFile);
  ev->add_option("-m,--model", model, "model checkpoint");
  ev->add_option("-t,--trace", trace, "packet trace")->check(CLI::ExistingFile);
  ev->add_flag("--simulate-loss", simulate_loss, "draw a trace from the configured channel model");
  add_settings(ev, settings);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*enc) return cmd_encode(settings, in, model, out);
    if (*dec) return cmd_decode(settings, in, model, out, trace, reference);
    if (*trn) return cmd_train(settings, out, resume, steps);
    if (*abl) return cmd_ablate(settings, steps);
    if (*sim) return cmd_simulate(settings, packets, out);
    if (*grad) return cmd_gradcheck(scope, tolerance);
    if (*ev) return cmd_eval(settings, in, model, trace, simulate_loss);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
