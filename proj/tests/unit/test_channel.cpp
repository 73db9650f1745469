#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "helpers.hpp"
#include "tfnet/channel/channel.hpp"

using namespace tfnet;
using namespace tfnet::channel;

namespace {

ThreeStateModel identity() {
  ThreeStateModel m;
  m.P = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  return m;
}

/// Stationary distribution by solving pi (P - I) = 0, sum(pi) = 1 with
/// Cramer's rule on the 3x3 system.
std::array<double, 3> solve_stationary(const ThreeStateModel& m) {
  double a[3][3], b[3] = {0, 0, 1};
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i) a[j][i] = m.P[i][j] - (i == j ? 1.0 : 0.0);
  for (int i = 0; i < 3; ++i) a[2][i] = 1.0;
  auto det = [](double x[3][3]) {
    return x[0][0] * (x[1][1] * x[2][2] - x[1][2] * x[2][1]) - x[0][1] * (x[1][0] * x[2][2] - x[1][2] * x[2][0]) +
           x[0][2] * (x[1][0] * x[2][1] - x[1][1] * x[2][0]);
  };
  const double d = det(a);
  std::array<double, 3> pi{};
  for (int k = 0; k < 3; ++k) {
    double c[3][3];
    for (int r = 0; r < 3; ++r)
      for (int i = 0; i < 3; ++i) c[r][i] = i == k ? b[r] : a[r][i];
    pi[k] = det(c) / d;
  }
  return pi;
}

/// Chi-square statistic of run lengths against Geometric(p) on {1, 2, ...},
/// pooling the tail so every bin expects at least 5.
struct Fit {
  double stat = 0;
  int dof = 0;
};

Fit geometric_fit(const std::vector<int>& runs, double p) {
  std::map<int, std::size_t> hist;
  for (int r : runs) ++hist[r];
  const double n = static_cast<double>(runs.size());
  Fit fit;
  double tail = 1.0;  // P(run >= k)
  int bins = 0;
  for (int k = 1;; ++k) {
    const double pk = tail * p;
    const double rest = tail - pk;
    if (n * rest < 5.0 || n * pk < 5.0) {
      double observed = 0;
      for (auto it = hist.lower_bound(k); it != hist.end(); ++it) observed += it->second;
      const double e = n * tail;
      fit.stat += (observed - e) * (observed - e) / e;
      ++bins;
      break;
    }
    const double o = hist.count(k) ? static_cast<double>(hist[k]) : 0.0;
    fit.stat += (o - n * pk) * (o - n * pk) / (n * pk);
    ++bins;
    tail = rest;
  }
  fit.dof = bins - 1;
  return fit;
}

/// Completed dwell runs per state; the first and last runs are censored
/// and dropped.
std::array<std::vector<int>, 3> dwell_runs(const std::vector<State>& states) {
  std::array<std::vector<int>, 3> runs;
  std::size_t start = 0;
  bool first = true;
  for (std::size_t i = 1; i <= states.size(); ++i)
    if (i == states.size() || states[i] != states[start]) {
      if (!first && i != states.size()) runs[static_cast<int>(states[start])].push_back(static_cast<int>(i - start));
      first = false;
      start = i;
    }
  return runs;
}

}  // namespace

TEST_SUITE("channel") {
  TEST_CASE("identity chain") {
    const auto m = identity();
    CHECK(simulate(m, 1000, 1).lost() == 0);
    const auto burst = simulate_states(m, 1000, 1, State::kBurst);
    CHECK(burst.trace.lost() == 1000);
    try {
      stationary_loss_rate(m);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumerical);
      CHECK(std::string(e.what()).find("no unique stationary distribution") != std::string::npos);
    }
    CHECK(expected_loss_rate(m, 1000) == 0.0);
    CHECK(expected_loss_rate(m, 1000, State::kBurst) == 1.0);
  }

  TEST_CASE("periodic chain has no stationary rate") {
    ThreeStateModel m;
    m.P = {{{0, 1, 0}, {0, 0, 1}, {1, 0, 0}}};
    CHECK(testing::error_kind([&] { stationary_distribution(m); }) == ErrorKind::kNumerical);
  }

  TEST_CASE("uniform chain loses half the packets") {
    ThreeStateModel m;
    for (auto& row : m.P) row = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    CHECK(stationary_loss_rate(m) == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("stationary distribution matches a direct linear solve") {
    ThreeStateModel m;
    const auto pi = stationary_distribution(m);
    const auto ref = solve_stationary(m);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(pi[i] - ref[i]) < 1e-10);
    CHECK(stationary_loss_rate(m) == doctest::Approx(0.5 * ref[1] + ref[2]).epsilon(1e-10));
    CHECK(expected_loss_rate(m, 100000) == doctest::Approx(stationary_loss_rate(m)).epsilon(1e-3));
  }

  TEST_CASE("empirical loss rate over 1e6 packets") {
    ThreeStateModel m;
    const auto t = simulate(m, 1000000, 42);
    CHECK(std::abs(t.loss_rate() - stationary_loss_rate(m)) < 0.01);
  }

  TEST_CASE("seeded determinism") {
    ThreeStateModel m;
    CHECK(simulate(m, 50000, 7).received == simulate(m, 50000, 7).received);
    CHECK(simulate(m, 50000, 7).received != simulate(m, 50000, 8).received);
  }

  TEST_CASE("dwell times are geometric") {
    ThreeStateModel m;
    const auto sim = simulate_states(m, 1000000, 3);
    const auto runs = dwell_runs(sim.states);
    for (int s = 0; s < 3; ++s) {
      const auto fit = geometric_fit(runs[s], 1.0 - m.P[s][s]);
      const double crit = boost::math::quantile(boost::math::chi_squared(fit.dof), 0.99);
      MESSAGE("state ", s, " runs ", runs[s].size(), " chi2 ", fit.stat, " dof ", fit.dof, " crit ", crit);
      CHECK(fit.dof >= 1);
      CHECK(fit.stat < crit);
    }
  }

  TEST_CASE("loss bursts follow the BURST dwell tail when only BURST loses") {
    ThreeStateModel m;
    m.loss = {0.0, 0.0, 1.0};
    const auto sim = simulate_states(m, 1000000, 5);
    const auto hist = burst_histogram(sim.trace);
    std::vector<int> runs;
    for (auto [len, count] : hist) runs.insert(runs.end(), count, len);
    const auto fit = geometric_fit(runs, 1.0 - m.P[2][2]);
    CHECK(fit.stat < boost::math::quantile(boost::math::chi_squared(fit.dof), 0.99));
  }

  TEST_CASE("burst histogram") {
    CHECK(burst_histogram(parse_trace("0000\n")).empty());
    CHECK(burst_histogram(parse_trace("0110\n")) == std::map<int, std::size_t>{{2, 1}});
    CHECK(burst_histogram(parse_trace("1011100111\n")) == std::map<int, std::size_t>{{1, 1}, {3, 2}});
  }

  TEST_CASE("trace text format") {
    const auto t = parse_trace("0110\n");
    CHECK(t.received == std::vector<std::uint8_t>{1, 0, 0, 1});
    CHECK(format_trace(t) == "0110\n");
    CHECK(t.loss_rate() == 0.5);
    CHECK(testing::error_kind([] { parse_trace("01x0\n"); }) == ErrorKind::kFormat);
    const auto dir = testing::temp_dir("trace");
    write_trace((dir / "t.txt").string(), t);
    CHECK(read_trace((dir / "t.txt").string()).received == t.received);
  }

  TEST_CASE("validation and overrides") {
    ThreeStateModel m;
    m.P[0] = {0.5, 0.5, 0.5};
    CHECK(testing::error_kind([&] { m.validate(); }) == ErrorKind::kConfig);
    ThreeStateModel l;
    l.loss = {0, 1.5, 1};
    CHECK(testing::error_kind([&] { l.validate(); }) == ErrorKind::kConfig);
    ThreeStateModel k;
    k.apply(KeyValues::parse("channel_p = 1,0,0, 0,1,0, 0,0,1\nchannel_loss = 0, 0.25, 1\n"));
    CHECK(k.P[1][1] == 1.0);
    CHECK(k.loss[1] == 0.25);
    CHECK(testing::error_kind([&] { k.apply(KeyValues::parse("channel_loss = 0, 1\n")); }) == ErrorKind::kConfig);
  }

  TEST_CASE("expansion to frames") {
    const auto t = parse_trace("01\n");
    CHECK(expand_to_frames(t, 4, 8) == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0, 0});
    CHECK(expand_to_frames(t, 4, 6) == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0});
    CHECK(testing::error_kind([&] { expand_to_frames(t, 4, 9); }) == ErrorKind::kShape);
  }
}
