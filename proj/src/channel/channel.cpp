#include "tfnet/channel/channel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tfnet/core/error.hpp"
#include "tfnet/core/rng.hpp"

namespace tfnet::channel {

std::size_t PacketTrace::lost() const {
  std::size_t n = 0;
  for (auto r : received) n += r ? 0 : 1;
  return n;
}

double PacketTrace::loss_rate() const {
  return received.empty() ? 0.0 : static_cast<double>(lost()) / received.size();
}

std::string format_trace(const PacketTrace& trace) {
  std::string s;
  s.reserve(trace.size() + 1);
  for (auto r : trace.received) s.push_back(r ? '0' : '1');
  s.push_back('\n');
  return s;
}

PacketTrace parse_trace(const std::string& text) {
  PacketTrace t;
  std::size_t i = 0;
  for (; i < text.size() && text[i] != '\n'; ++i) {
    const char c = text[i];
    if (c == '\r') continue;
    require(c == '0' || c == '1', ErrorKind::kFormat,
            std::string("trace: unexpected character '") + c + "' at offset " + std::to_string(i));
    t.received.push_back(c == '0' ? 1 : 0);
  }
  for (++i; i < text.size(); ++i)
    require(text[i] == '\n' || text[i] == '\r', ErrorKind::kFormat,
            "trace: content after the terminating newline");
  return t;
}

PacketTrace read_trace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kFormat, "cannot open trace file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_trace(ss.str());
}

void write_trace(const std::string& path, const PacketTrace& trace) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kFormat, "cannot write trace file " + path);
  f << format_trace(trace);
}

std::map<int, std::size_t> burst_histogram(const PacketTrace& trace) {
  std::map<int, std::size_t> h;
  int run = 0;
  for (auto r : trace.received) {
    if (!r) {
      ++run;
    } else if (run > 0) {
      ++h[run];
      run = 0;
    }
  }
  if (run > 0) ++h[run];
  return h;
}

void ThreeStateModel::validate() const {
  for (int i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) {
      require(P[i][j] >= 0.0 && P[i][j] <= 1.0 && std::isfinite(P[i][j]), ErrorKind::kConfig,
              "transition probabilities must lie in [0, 1]");
      sum += P[i][j];
    }
    require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::kConfig,
            "transition matrix row " + std::to_string(i) + " sums to " + std::to_string(sum));
    require(loss[i] >= 0.0 && loss[i] <= 1.0, ErrorKind::kConfig,
            "loss probabilities must lie in [0, 1]");
  }
}

void ThreeStateModel::apply(const KeyValues& kv) {
  if (kv.has("channel_p")) {
    const auto v = kv.get_doubles("channel_p", {});
    require(v.size() == 9, ErrorKind::kConfig, "channel_p needs 9 values (row-major 3x3)");
    for (int i = 0; i < 9; ++i) P[i / 3][i % 3] = v[i];
  }
  if (kv.has("channel_loss")) {
    const auto v = kv.get_doubles("channel_loss", {});
    require(v.size() == 3, ErrorKind::kConfig, "channel_loss needs 3 values");
    for (int i = 0; i < 3; ++i) loss[i] = v[i];
  }
}

Simulation simulate_states(const ThreeStateModel& model, std::size_t packets, std::uint64_t seed,
                           State start) {
  model.validate();
  Rng rng(seed);
  Simulation sim;
  sim.trace.received.resize(packets);
  sim.states.resize(packets);
  int s = static_cast<int>(start);
  for (std::size_t i = 0; i < packets; ++i) {
    sim.states[i] = static_cast<State>(s);
    sim.trace.received[i] = rng.uniform() < model.loss[s] ? 0 : 1;
    const double u = rng.uniform();
    double acc = 0.0;
    int next = 2;
    for (int j = 0; j < 3; ++j) {
      acc += model.P[s][j];
      if (u < acc) {
        next = j;
        break;
      }
    }
    s = next;
  }
  return sim;
}

PacketTrace simulate(const ThreeStateModel& model, std::size_t packets, std::uint64_t seed) {
  return simulate_states(model, packets, seed).trace;
}

std::array<double, 3> stationary_distribution(const ThreeStateModel& model) {
  model.validate();
  // A 3-state chain has a unique, globally attracting stationary law iff P
  // is primitive, i.e. P^k > 0 entrywise for some k <= (n-1)^2 + 1 = 5.
  using M = std::array<std::array<double, 3>, 3>;
  auto mul = [](const M& a, const M& b) {
    M c{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
  };
  M pk = model.P;
  bool primitive = false;
  for (int k = 1; k <= 5 && !primitive; ++k) {
    primitive = true;
    for (const auto& row : pk)
      for (double v : row) primitive = primitive && v > 0.0;
    if (!primitive) pk = mul(pk, model.P);
  }
  require(primitive, ErrorKind::kNumerical,
          "no unique stationary distribution: the chain is reducible or periodic");

  std::array<double, 3> pi{1.0 / 3, 1.0 / 3, 1.0 / 3};
  for (int it = 0; it < 1000000; ++it) {
    std::array<double, 3> next{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) next[j] += pi[i] * model.P[i][j];
    double diff = 0.0;
    for (int j = 0; j < 3; ++j) diff = std::max(diff, std::abs(next[j] - pi[j]));
    pi = next;
    if (diff < 1e-12) return pi;
  }
  fail(ErrorKind::kNumerical, "power iteration did not converge");
}

double stationary_loss_rate(const ThreeStateModel& model) {
  const auto pi = stationary_distribution(model);
  return pi[0] * model.loss[0] + pi[1] * model.loss[1] + pi[2] * model.loss[2];
}

double expected_loss_rate(const ThreeStateModel& model, std::size_t packets, State start) {
  model.validate();
  require(packets > 0, ErrorKind::kConfig, "packet count must be positive");
  std::array<double, 3> p{};
  p[static_cast<int>(start)] = 1.0;
  double acc = 0.0;
  for (std::size_t n = 0; n < packets; ++n) {
    acc += p[0] * model.loss[0] + p[1] * model.loss[1] + p[2] * model.loss[2];
    std::array<double, 3> next{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) next[j] += p[i] * model.P[i][j];
    p = next;
  }
  return acc / static_cast<double>(packets);
}

std::vector<std::uint8_t> expand_to_frames(const PacketTrace& trace, int frames_per_packet,
                                           std::size_t frames) {
  require(frames_per_packet >= 1, ErrorKind::kConfig, "frames_per_packet must be >= 1");
  require(frames <= trace.size() * frames_per_packet, ErrorKind::kShape,
          "trace has " + std::to_string(trace.size()) + " packets, too few for " +
              std::to_string(frames) + " frames");
  std::vector<std::uint8_t> out(frames);
  for (std::size_t f = 0; f < frames; ++f) out[f] = trace.received[f / frames_per_packet];
  return out;
}

}  // namespace tfnet::channel
