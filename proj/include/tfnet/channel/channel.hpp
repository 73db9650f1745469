#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tfnet/core/keyvalue.hpp"

namespace tfnet::channel {

/// Per-packet delivery flags; received[i] != 0 means packet i arrived.
/// On disk: one character per packet, '1' lost and '0' received, then '\n'.
struct PacketTrace {
  std::vector<std::uint8_t> received;

  std::size_t size() const { return received.size(); }
  std::size_t lost() const;
  double loss_rate() const;
};

PacketTrace read_trace(const std::string& path);
void write_trace(const std::string& path, const PacketTrace& trace);
std::string format_trace(const PacketTrace& trace);
PacketTrace parse_trace(const std::string& text);

/// Maximal runs of lost packets: run length -> count.
std::map<int, std::size_t> burst_histogram(const PacketTrace& trace);

enum class State : std::uint8_t { kGood = 0, kLossy = 1, kBurst = 2 };

/// Three-state Markov loss channel. The chain steps once per packet: a
/// packet is lost with the current state's probability, then the state
/// transitions along P.
struct ThreeStateModel {
  std::array<std::array<double, 3>, 3> P{{{0.95, 0.04, 0.01}, {0.60, 0.35, 0.05}, {0.30, 0.20, 0.50}}};
  std::array<double, 3> loss{0.0, 0.5, 1.0};

  void validate() const;
  /// Reads channel_p (9 row-major values) and channel_loss (3 values).
  void apply(const KeyValues& kv);
};

struct Simulation {
  PacketTrace trace;
  std::vector<State> states;  // state in force for each packet
};

PacketTrace simulate(const ThreeStateModel& model, std::size_t packets, std::uint64_t seed);
/// As simulate, also reporting the state sequence; `start` is a test hook.
Simulation simulate_states(const ThreeStateModel& model, std::size_t packets, std::uint64_t seed,
                           State start = State::kGood);

/// Stationary distribution by power iteration (to 1e-12). Reducible or
/// periodic chains raise ErrorKind::kNumerical.
std::array<double, 3> stationary_distribution(const ThreeStateModel& model);
double stationary_loss_rate(const ThreeStateModel& model);
/// Exact mean loss probability over the first `packets` packets from `start`.
/// Defined for every chain, reducible ones included.
double expected_loss_rate(const ThreeStateModel& model, std::size_t packets, State start = State::kGood);

/// Repeats each packet flag `frames_per_packet` times and truncates to
/// `frames` entries (frames may not exceed packets * frames_per_packet).
std::vector<std::uint8_t> expand_to_frames(const PacketTrace& trace, int frames_per_packet,
                                           std::size_t frames);

}  // namespace tfnet::channel
