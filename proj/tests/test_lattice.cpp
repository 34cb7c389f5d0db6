// Inference kernels checked against exhaustive path enumeration.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "doctest.h"
#include "kws/lattice.hpp"

using namespace kws;

namespace {

ScoreMatrix random_scores(Rng& rng, int t, int u) {
  ScoreMatrix m(t, u);
  for (double& v : m.values) v = -3.0 + 2.0 * rng.next_double();
  return m;
}

// Random frame-synchronous lattice over `units` output symbols.
Lattice random_lattice(Rng& rng, int num_states, int units) {
  Lattice g;
  for (int i = 0; i < num_states; ++i) g.add_state();
  for (int s = 0; s < num_states; ++s) {
    int fanout = 1 + static_cast<int>(rng.next_int(0, 2));
    for (int a = 0; a < fanout; ++a) {
      int dst = static_cast<int>(rng.next_int(0, num_states - 1));
      int unit = static_cast<int>(rng.next_int(0, units - 1));
      g.add_arc(s, dst, unit, -rng.next_double());
    }
    if (rng.next_double() < 0.5) g.set_final(s, -rng.next_double());
  }
  g.frame_synchronous = true;
  return g;
}

double oracle_total(const Lattice& g, const ScoreMatrix& scores, int frames) {
  std::vector<double> totals;
  for (const auto& [units, w] : enumerate_paths(g, frames)) {
    double acc = w;
    for (int t = 0; t < frames; ++t) acc += scores.at(t, units[t]);
    totals.push_back(acc);
  }
  return log_sum_exp(totals);
}

// enumeration that tolerates (acyclic) epsilon arcs, for checking
// eliminate_epsilon against its input
void enum_eps_dfs(const Lattice& g, int state, int left, int eps_run,
                  std::vector<int>& units, double score,
                  std::vector<std::pair<std::vector<int>, double>>& out) {
  if (left == 0 && g.is_final(state))
    out.emplace_back(units, score + g.final_weight[state]);
  for (const Arc& a : g.arcs[state]) {
    if (a.unit == kEpsilon) {
      REQUIRE(eps_run < g.num_states());  // acyclic input only
      enum_eps_dfs(g, a.dst, left, eps_run + 1, units, score + a.logw, out);
    } else if (left > 0) {
      units.push_back(a.unit);
      enum_eps_dfs(g, a.dst, left - 1, 0, units, score + a.logw, out);
      units.pop_back();
    }
  }
}

std::vector<std::pair<std::vector<int>, double>> enum_with_eps(
    const Lattice& g, int frames) {
  std::vector<std::pair<std::vector<int>, double>> out;
  std::vector<int> units;
  enum_eps_dfs(g, 0, frames, 0, units, 0.0, out);
  return out;
}

// log-sums path weights per unit string so that differently-grouped paths
// (e.g. merged epsilon closures) compare equal
std::vector<std::pair<std::vector<int>, double>> by_string(
    std::vector<std::pair<std::vector<int>, double>> paths) {
  std::sort(paths.begin(), paths.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<std::vector<int>, double>> acc;
  for (const auto& [u, w] : paths) {
    if (!acc.empty() && acc.back().first == u)
      acc.back().second = log_add(acc.back().second, w);
    else
      acc.emplace_back(u, w);
  }
  return acc;
}

void check_same_language(
    const std::vector<std::pair<std::vector<int>, double>>& lhs,
    const std::vector<std::pair<std::vector<int>, double>>& rhs) {
  auto a = by_string(lhs), b = by_string(rhs);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second == doctest::Approx(b[i].second).epsilon(1e-10));
  }
}

}  // namespace

TEST_CASE("log_add basics") {
  CHECK(log_add(kLogZero, kLogZero) == kLogZero);
  CHECK(log_add(0.0, kLogZero) == doctest::Approx(0.0));
  CHECK(log_add(std::log(2.0), std::log(3.0)) == doctest::Approx(std::log(5.0)));
  std::vector<double> xs{std::log(1.0), std::log(2.0), std::log(3.0)};
  CHECK(log_sum_exp(xs) == doctest::Approx(std::log(6.0)));
}

TEST_CASE("forward_backward equals path enumeration") {
  Rng rng(101);
  int checked = 0;
  for (int rep = 0; rep < 40; ++rep) {
    int units = 2 + static_cast<int>(rng.next_int(0, 1));
    Lattice g = random_lattice(rng, 3 + static_cast<int>(rng.next_int(0, 2)), units);
    int frames = 1 + static_cast<int>(rng.next_int(0, 3));
    ScoreMatrix scores = random_scores(rng, frames, units);
    auto paths = enumerate_paths(g, frames);
    FBResult fb = forward_backward(g, scores, frames);
    if (paths.empty()) {
      CHECK(log_is_zero(fb.log_total));
      continue;
    }
    ++checked;
    CHECK(fb.log_total == doctest::Approx(oracle_total(g, scores, frames)).epsilon(1e-10));

    // occupancy oracle: posterior mass of unit u at frame t
    for (int t = 0; t < frames; ++t)
      for (int u = 0; u < units; ++u) {
        double mass = 0.0;
        for (const auto& [pu, w] : paths) {
          if (pu[t] != u) continue;
          double acc = w;
          for (int s = 0; s < frames; ++s) acc += scores.at(s, pu[s]);
          mass += std::exp(acc - fb.log_total);
        }
        CHECK(fb.occupancy.at(t, u) == doctest::Approx(mass).epsilon(1e-9));
      }
  }
  CHECK(checked > 10);
}

TEST_CASE("viterbi equals argmax over enumeration") {
  Rng rng(202);
  for (int rep = 0; rep < 40; ++rep) {
    Lattice g = random_lattice(rng, 4, 3);
    int frames = 1 + static_cast<int>(rng.next_int(0, 3));
    ScoreMatrix scores = random_scores(rng, frames, 3);
    auto paths = enumerate_paths(g, frames);
    if (paths.empty()) {
      CHECK_THROWS_AS(viterbi(g, scores, frames), NoPathError);
      continue;
    }
    double best = kLogZero;
    for (const auto& [pu, w] : paths) {
      double acc = w;
      for (int t = 0; t < frames; ++t) acc += scores.at(t, pu[t]);
      best = std::max(best, acc);
    }
    ViterbiResult vr = viterbi(g, scores, frames);
    CHECK(vr.log_score == doctest::Approx(best).epsilon(1e-10));
    CHECK(static_cast<int>(vr.units.size()) == frames);
  }
}

TEST_CASE("epsilon elimination preserves the weighted language") {
  // a -eps-> b -x-> c with weights; language must survive composition
  Lattice g;
  for (int i = 0; i < 4; ++i) g.add_state();
  g.add_arc(0, 1, kEpsilon, std::log(0.5));
  g.add_arc(1, 2, 0, std::log(0.5));
  g.add_arc(0, 2, 1, std::log(0.25));
  g.add_arc(2, 3, kEpsilon, std::log(0.5));
  g.set_final(3, std::log(0.5));
  g.set_final(2, std::log(0.125));

  Lattice e = eliminate_epsilon(g);
  for (int s = 0; s < e.num_states(); ++s)
    for (const Arc& a : e.arcs[s]) CHECK(a.unit != kEpsilon);

  check_same_language(enum_with_eps(g, 1), enumerate_paths(e, 1));
}

TEST_CASE("epsilon elimination on random lattices with epsilon arcs") {
  Rng rng(303);
  for (int rep = 0; rep < 30; ++rep) {
    // forward-only epsilon arcs keep the epsilon structure acyclic
    Lattice g;
    int n = 5;
    for (int i = 0; i < n; ++i) g.add_state();
    for (int s = 0; s < n; ++s) {
      for (int a = 0; a < 2; ++a) {
        int dst = static_cast<int>(rng.next_int(0, n - 1));
        if (rng.next_double() < 0.3 && s < n - 1) {
          int fwd = s + 1 + static_cast<int>(rng.next_int(0, n - s - 2 >= 0 ? n - s - 2 : 0));
          g.add_arc(s, std::min(fwd, n - 1), kEpsilon, -rng.next_double());
        } else {
          g.add_arc(s, dst, static_cast<int>(rng.next_int(0, 1)), -rng.next_double());
        }
      }
      if (rng.next_double() < 0.4) g.set_final(s, -rng.next_double());
    }
    Lattice e = eliminate_epsilon(g);
    for (int frames = 0; frames <= 3; ++frames)
      check_same_language(enum_with_eps(g, frames), enumerate_paths(e, frames));
  }
}

TEST_CASE("trim drops unreachable and dead states, keeps the language") {
  Lattice g;
  for (int i = 0; i < 5; ++i) g.add_state();
  g.add_arc(0, 1, 0, -0.1);
  g.add_arc(1, 1, 1, -0.2);
  g.set_final(1, 0.0);
  g.add_arc(0, 2, 0, -0.3);  // state 2 is a dead end
  g.add_arc(3, 1, 0, -0.4);  // state 3 unreachable
  // state 4 isolated

  Lattice t = trim(g);
  CHECK(t.num_states() == 2);
  for (int frames = 1; frames <= 3; ++frames) {
    auto before = enumerate_paths(g, frames);
    auto after = enumerate_paths(t, frames);
    REQUIRE(before.size() == after.size());
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    for (size_t i = 0; i < before.size(); ++i) {
      CHECK(before[i].first == after[i].first);
      CHECK(before[i].second == doctest::Approx(after[i].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("trim keeps state 0 for the empty language") {
  Lattice g;
  g.add_state();
  g.add_state();
  g.add_arc(0, 1, 0, 0.0);  // no final state anywhere
  Lattice t = trim(g);
  CHECK(t.num_states() == 1);
  CHECK(enumerate_paths(t, 1).empty());
}

TEST_CASE("dump/parse round trip") {
  Rng rng(404);
  Lattice g = random_lattice(rng, 4, 3);
  Lattice h = parse_lattice(dump_lattice(g));
  CHECK(dump_lattice(h) == dump_lattice(g));
  CHECK(h.num_states() == g.num_states());
  CHECK(h.num_arcs() == g.num_arcs());
}

TEST_CASE("score matrix binary round trip is float32-exact") {
  Rng rng(505);
  ScoreMatrix m = random_scores(rng, 7, 3);
  const char* path = "sm_roundtrip.bin";
  write_score_matrix(path, m);
  ScoreMatrix r = read_score_matrix(path);
  std::remove(path);
  REQUIRE(r.num_frames == m.num_frames);
  REQUIRE(r.num_units == m.num_units);
  for (size_t i = 0; i < m.values.size(); ++i)
    CHECK(r.values[i] == static_cast<double>(static_cast<float>(m.values[i])));
}

TEST_CASE("score matrix csv round trip") {
  ScoreMatrix m(2, 3);
  m.at(0, 0) = 0.5;
  m.at(0, 1) = -1.25;
  m.at(0, 2) = 2.0;
  m.at(1, 0) = 1e-3;
  m.at(1, 1) = 0.0;
  m.at(1, 2) = -7.5;
  ScoreMatrix r = score_matrix_from_csv(score_matrix_to_csv(m));
  REQUIRE(r.num_frames == 2);
  REQUIRE(r.num_units == 3);
  for (size_t i = 0; i < m.values.size(); ++i)
    CHECK(r.values[i] == doctest::Approx(m.values[i]).epsilon(1e-15));
}

TEST_CASE("enumeration guard trips on exponential lattices") {
  Lattice g;
  g.add_state();
  for (int u = 0; u < 4; ++u) g.add_arc(0, 0, u, 0.0);
  g.set_final(0, 0.0);
  g.frame_synchronous = true;
  CHECK_THROWS_AS(enumerate_paths(g, 12), TooManyPathsError);
}
