// Training criteria against brute-force path enumeration and finite
// differences.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "kws/criteria.hpp"
#include "kws/phonelm.hpp"
#include "kws/topology.hpp"
#include "kws/units.hpp"

using namespace kws;

namespace {

UnitInventory make_inv(int n_phones, bool blank) {
  std::vector<std::string> phones;
  for (int i = 0; i < n_phones; ++i) phones.emplace_back(1, char('a' + i));
  return UnitInventory(phones, blank, false, false);
}

LabelSequence seq(std::vector<int> units) {
  LabelSequence s;
  s.units = std::move(units);
  return s;
}

ScoreMatrix random_scores(Rng& rng, int T, int U, bool normalized) {
  ScoreMatrix m(T, U);
  for (double& v : m.values) v = 0.7 * rng.next_normal();
  if (normalized) {
    for (int t = 0; t < T; ++t) {
      double z = log_sum_exp(std::vector<double>(m.row(t), m.row(t) + U));
      for (int u = 0; u < U; ++u) m.at(t, u) -= z;
    }
  }
  return m;
}

std::vector<double> identity_accuracy(const std::vector<int>& reference,
                                      const Topology& topo, int U) {
  std::vector<double> acc(reference.size() * U, 0.0);
  for (size_t t = 0; t < reference.size(); ++t) {
    int rid = topo.class_identity(reference[t]);
    for (int u = 0; u < U; ++u)
      if (topo.class_identity(u) == rid) acc[t * U + u] = 1.0;
  }
  return acc;
}

// Brute-force statistics over all accepting paths: log-total, occupancy, and
// accuracy-weighted expectations.  `boost` and `acc` are optional per-(t,u)
// tables added to / dotted with the path scores.
struct PathStats {
  double log_total = kLogZero;
  ScoreMatrix occ;
  double expected_acc = 0.0;                 // sum_p gamma_p * acc_p
  ScoreMatrix acc_weighted_occ;              // sum_{p through (t,u)} gamma_p acc_p
};

PathStats path_stats(const Lattice& g, const ScoreMatrix& scores, int T,
                     double kappa, const std::vector<double>* boost = nullptr,
                     const std::vector<double>* acc = nullptr) {
  const int U = scores.num_units;
  auto paths = enumerate_paths(g, T);
  std::vector<double> weights;
  std::vector<double> accs;
  for (const auto& p : paths) {
    double w = p.second;
    double a = 0.0;
    for (int t = 0; t < T; ++t) {
      int u = p.first[t];
      w += kappa * scores.at(t, u);
      if (boost) w += (*boost)[static_cast<size_t>(t) * U + u];
      if (acc) a += (*acc)[static_cast<size_t>(t) * U + u];
    }
    weights.push_back(w);
    accs.push_back(a);
  }
  PathStats st;
  st.occ = ScoreMatrix(T, U, 0.0, ScoreSemantics::kOccupancy);
  st.acc_weighted_occ = ScoreMatrix(T, U, 0.0, ScoreSemantics::kOccupancy);
  if (paths.empty()) return st;
  st.log_total = log_sum_exp(weights);
  for (size_t i = 0; i < paths.size(); ++i) {
    double gamma = std::exp(weights[i] - st.log_total);
    st.expected_acc += gamma * accs[i];
    for (int t = 0; t < T; ++t) {
      st.occ.at(t, paths[i].first[t]) += gamma;
      st.acc_weighted_occ.at(t, paths[i].first[t]) += gamma * accs[i];
    }
  }
  return st;
}

void check_close(const ScoreMatrix& got, const ScoreMatrix& want, double eps) {
  REQUIRE(got.num_frames == want.num_frames);
  REQUIRE(got.num_units == want.num_units);
  for (size_t i = 0; i < got.values.size(); ++i)
    CHECK(got.values[i] == doctest::Approx(want.values[i]).epsilon(eps).scale(1.0));
}

// Central finite differences of `loss(scores)` against `grad`.
template <typename LossFn>
double max_fd_rel_err(const ScoreMatrix& scores, const ScoreMatrix& grad,
                      LossFn loss, double h = 1e-4) {
  double worst = 0.0;
  ScoreMatrix probe = scores;
  for (size_t i = 0; i < scores.values.size(); ++i) {
    probe.values[i] = scores.values[i] + h;
    double up = loss(probe);
    probe.values[i] = scores.values[i] - h;
    double down = loss(probe);
    probe.values[i] = scores.values[i];
    double fd = (up - down) / (2.0 * h);
    double g = grad.values[i];
    double denom = std::max({std::fabs(fd), std::fabs(g), 1e-2});
    worst = std::max(worst, std::fabs(fd - g) / denom);
  }
  return worst;
}

// Entry frame of every chain state along an hmm5 class path.  The hmm5
// sequence graph is a pure left-to-right chain, so the class string fixes
// the state path and segment boundaries are the state entry times.
std::vector<int> hmm5_entry_times(const std::vector<int>& classes) {
  std::vector<int> entries;
  for (size_t t = 0; t < classes.size(); ++t)
    if (t == 0 || classes[t] != classes[t - 1]) entries.push_back(static_cast<int>(t));
  return entries;
}

std::set<std::vector<int>> language(const Lattice& g, int T) {
  std::set<std::vector<int>> out;
  for (const auto& p : enumerate_paths(g, T)) out.insert(p.first);
  return out;
}

}  // namespace

TEST_CASE("criterion names round trip") {
  for (auto k : {CriterionKind::kCe, CriterionKind::kCtc, CriterionKind::kLfMmi,
                 CriterionKind::kLfBmmi, CriterionKind::kLfSmbr})
    CHECK(criterion_from_name(criterion_name(k)) == k);
  CHECK(criterion_name(CriterionKind::kLfBmmi) == "lf-bmmi");
  CHECK_THROWS_AS(criterion_from_name("mmi"), FormatError);
}

TEST_CASE("cross entropy loss and gradient") {
  ScoreMatrix lp(2, 3);
  lp.at(0, 0) = -0.1; lp.at(0, 1) = -2.0; lp.at(0, 2) = -3.0;
  lp.at(1, 0) = -1.5; lp.at(1, 1) = -0.4; lp.at(1, 2) = -2.5;
  LossGrad lg = ce_loss(lp, {0, 2});
  CHECK(lg.loss == doctest::Approx(0.1 + 2.5).epsilon(1e-12));
  CHECK(lg.grad.at(0, 0) == -1.0);
  CHECK(lg.grad.at(1, 2) == -1.0);
  CHECK(lg.grad.at(0, 1) == 0.0);
  CHECK(lg.grad.at(1, 1) == 0.0);

  CHECK_THROWS_AS(ce_loss(lp, {0}), LengthMismatchError);
  CHECK_THROWS_AS(ce_loss(lp, {0, 3}), UnknownUnitError);
  CHECK_THROWS_AS(ce_loss(lp, {-1, 0}), UnknownUnitError);
}

TEST_CASE("ctc loss matches enumeration") {
  Rng rng(404);
  int checked = 0;
  for (int rep = 0; rep < 60; ++rep) {
    int n_phones = 1 + rng.next_int(0, 2);
    UnitInventory inv = make_inv(n_phones, true);
    Topology topo = build_topology(TopoKind::kCtc, inv);
    int len = 1 + rng.next_int(0, 2);
    std::vector<int> units;
    for (int i = 0; i < len; ++i) units.push_back(rng.next_int(0, n_phones - 1));
    int T = len + rng.next_int(0, 6 - len);
    ScoreMatrix lp = random_scores(rng, T, topo.num_classes(), true);

    Lattice g = compile_sequence_graph(seq(units), topo);
    PathStats st = path_stats(g, lp, T, 1.0);
    if (log_is_zero(st.log_total)) {
      CHECK_THROWS_AS(ctc_loss(lp, seq(units), topo), InfeasibleError);
      continue;
    }
    LossGrad lg = ctc_loss(lp, seq(units), topo);
    CHECK(lg.loss == doctest::Approx(-st.log_total).epsilon(1e-9));
    ScoreMatrix want = st.occ;
    for (double& v : want.values) v = -v;
    check_close(lg.grad, want, 1e-9);
    ++checked;
  }
  CHECK(checked > 30);
}

TEST_CASE("ctc uniform two-frame example") {
  // One phone plus blank, uniform posteriors: framings {aa, a-, -a} each
  // carry 1/4, so P(labels) = 3/4.
  UnitInventory inv = make_inv(1, true);
  Topology topo = build_topology(TopoKind::kCtc, inv);
  ScoreMatrix lp(2, 2, std::log(0.5));
  LossGrad lg = ctc_loss(lp, seq({0}), topo);
  CHECK(lg.loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  // Each framing has posterior 1/3; the label occupies frame 0 in two of
  // them.
  CHECK(lg.grad.at(0, 0) == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
  CHECK(lg.grad.at(0, 1) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(lg.grad.at(1, 0) == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
  CHECK(lg.grad.at(1, 1) == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("ctc infeasible label length") {
  UnitInventory inv = make_inv(2, true);
  Topology topo = build_topology(TopoKind::kCtc, inv);
  ScoreMatrix lp(2, 3, std::log(1.0 / 3.0));
  CHECK_THROWS_AS(ctc_loss(lp, seq({0, 1, 0}), topo), InfeasibleError);
  // Equal adjacent labels need a separating blank frame.
  CHECK_THROWS_AS(ctc_loss(lp, seq({0, 0}), topo), InfeasibleError);
  CHECK_THROWS_AS(ctc_loss(lp, seq({0}),
                           build_topology(TopoKind::kHmmPb, make_inv(2, false))),
                  KwsError);
}

TEST_CASE("numerator graph hmm5 matches boundary-shift oracle") {
  UnitInventory inv = make_inv(2, false);
  Topology topo = build_topology(TopoKind::kHmm5, inv);
  // Labels [a, b]; reference durations 2,1,1,2,1,2 over the six chain
  // states.
  std::vector<int> durations = {2, 1, 1, 2, 1, 2};
  std::vector<int> chain_classes = {0, 1, 2, 3, 4, 5};
  std::vector<int> ref;
  for (size_t i = 0; i < durations.size(); ++i)
    for (int d = 0; d < durations[i]; ++d) ref.push_back(chain_classes[i]);
  const int T = static_cast<int>(ref.size());
  std::vector<int> ref_entries = hmm5_entry_times(ref);

  Lattice full = compile_sequence_graph(seq({0, 1}), topo);
  auto full_paths = enumerate_paths(full, T);
  REQUIRE(full_paths.size() > 1);

  for (int tol = 0; tol <= 3; ++tol) {
    Lattice num = build_numerator_graph(seq({0, 1}), ref, tol, topo);
    std::set<std::vector<int>> got = language(num, T);

    std::set<std::vector<int>> want;
    for (const auto& p : full_paths) {
      std::vector<int> entries = hmm5_entry_times(p.first);
      REQUIRE(entries.size() == ref_entries.size());
      bool ok = true;
      for (size_t i = 0; i < entries.size(); ++i)
        if (std::abs(entries[i] - ref_entries[i]) > tol) ok = false;
      if (ok) want.insert(p.first);
    }
    CHECK(got == want);
    CHECK(got.count(ref) == 1);

    // Arc weights survive the time expansion: per class string (unique path
    // in an hmm5 chain), numerator weight equals the sequence-graph weight.
    std::vector<std::pair<std::vector<int>, double>> full_by;
    for (const auto& p : enumerate_paths(num, T)) {
      bool found = false;
      for (const auto& q : full_paths)
        if (q.first == p.first) {
          CHECK(p.second == doctest::Approx(q.second).epsilon(1e-12));
          found = true;
        }
      CHECK(found);
    }
  }

  // tol = 0 admits exactly the reference framing.
  Lattice tight = build_numerator_graph(seq({0, 1}), ref, 0, topo);
  CHECK(language(tight, T) == std::set<std::vector<int>>{ref});
  // A tolerance covering the whole utterance admits every framing.
  Lattice loose = build_numerator_graph(seq({0, 1}), ref, T, topo);
  std::set<std::vector<int>> all;
  for (const auto& p : full_paths) all.insert(p.first);
  CHECK(language(loose, T) == all);

  // Reference that the label graph cannot accept.
  std::vector<int> bad = ref;
  std::swap(bad[0], bad[T - 1]);
  CHECK_THROWS_AS(build_numerator_graph(seq({0, 1}), bad, 2, topo),
                  InfeasibleError);
}

TEST_CASE("numerator graph blank topology properties") {
  UnitInventory inv = make_inv(2, false);
  Topology topo = build_topology(TopoKind::kHmmPb, inv);
  // Classes: label a=0, blank a=1, label b=2, blank b=3.
  std::vector<int> ref = {0, 0, 1, 2, 2, 3};
  const int T = static_cast<int>(ref.size());
  Lattice full = compile_sequence_graph(seq({0, 1}), topo);
  std::set<std::vector<int>> all = language(full, T);
  REQUIRE(all.count(ref) == 1);

  size_t prev_size = 0;
  for (int tol = 0; tol <= T; ++tol) {
    Lattice num = build_numerator_graph(seq({0, 1}), ref, tol, topo);
    std::set<std::vector<int>> got = language(num, T);
    CHECK(got.count(ref) == 1);
    for (const auto& s : got) CHECK(all.count(s) == 1);
    CHECK(got.size() >= prev_size);
    prev_size = got.size();
  }
  Lattice loose = build_numerator_graph(seq({0, 1}), ref, T, topo);
  CHECK(language(loose, T) == all);
}

TEST_CASE("lf_mmi matches enumeration") {
  Rng rng(505);
  UnitInventory inv = make_inv(2, false);
  Topology topo = build_topology(TopoKind::kHmmPb, inv);
  NGramModel lm = train_ngram({seq({0, 1}), seq({1, 0}), seq({0})}, 2, {"a", "b"});
  Lattice den = build_denominator_graph(lm, topo);

  std::vector<int> ref = {0, 0, 0, 1, 1};
  const int T = static_cast<int>(ref.size());
  Lattice num = build_numerator_graph(seq({0}), ref, 1, topo);

  for (double kappa : {1.0, 0.7}) {
    CriterionConfig cfg;
    cfg.kind = CriterionKind::kLfMmi;
    cfg.kappa = kappa;
    ScoreMatrix lp = random_scores(rng, T, topo.num_classes(), true);
    LossGrad lg = lf_mmi(lp, num, den, cfg);

    PathStats num_st = path_stats(num, lp, T, kappa);
    PathStats den_st = path_stats(den, lp, T, kappa);
    CHECK(lg.loss ==
          doctest::Approx(-(num_st.log_total - den_st.log_total)).epsilon(1e-9));
    ScoreMatrix want(T, topo.num_classes(), 0.0, ScoreSemantics::kGradient);
    for (size_t i = 0; i < want.values.size(); ++i)
      want.values[i] = kappa * (den_st.occ.values[i] - num_st.occ.values[i]);
    check_close(lg.grad, want, 1e-9);
  }
}

TEST_CASE("lf_bmmi matches enumeration and reduces to lf_mmi at b=0") {
  Rng rng(606);
  UnitInventory inv = make_inv(2, false);
  Topology topo = build_topology(TopoKind::kHmmPb, inv);
  NGramModel lm = train_ngram({seq({0, 1}), seq({1, 0}), seq({1})}, 2, {"a", "b"});
  Lattice den = build_denominator_graph(lm, topo);
  const int U = topo.num_classes();

  std::vector<int> ref = {2, 2, 3, 0, 0};
  const int T = static_cast<int>(ref.size());
  Lattice num = build_numerator_graph(seq({1, 0}), ref, 1, topo);
  ScoreMatrix lp = random_scores(rng, T, U, true);

  CriterionConfig cfg;
  cfg.kind = CriterionKind::kLfBmmi;
  cfg.boost = 0.3;
  std::vector<double> acc = identity_accuracy(ref, topo, U);
  std::vector<double> boost(acc.size());
  for (size_t i = 0; i < acc.size(); ++i) boost[i] = cfg.boost * (1.0 - acc[i]);

  LossGrad lg = lf_bmmi(lp, num, den, ref, cfg, topo);
  PathStats num_st = path_stats(num, lp, T, cfg.kappa);
  PathStats den_st = path_stats(den, lp, T, cfg.kappa, &boost);
  CHECK(lg.loss ==
        doctest::Approx(-(num_st.log_total - den_st.log_total)).epsilon(1e-9));
  ScoreMatrix want(T, U, 0.0, ScoreSemantics::kGradient);
  for (size_t i = 0; i < want.values.size(); ++i)
    want.values[i] = cfg.kappa * (den_st.occ.values[i] - num_st.occ.values[i]);
  check_close(lg.grad, want, 1e-9);

  // b = 0 is exactly lf_mmi.
  CriterionConfig zero = cfg;
  zero.boost = 0.0;
  LossGrad b0 = lf_bmmi(lp, num, den, ref, zero, topo);
  LossGrad mmi = lf_mmi(lp, num, den, zero);
  CHECK(b0.loss == doctest::Approx(mmi.loss).epsilon(1e-12));
  check_close(b0.grad, mmi.grad, 1e-12);

  // The boosted denominator only grows with b, so the loss is monotone.
  double prev = b0.loss;
  for (double b : {0.05, 0.1, 0.2, 0.5, 1.0}) {
    CriterionConfig c = cfg;
    c.boost = b;
    double loss = lf_bmmi(lp, num, den, ref, c, topo).loss;
    CHECK(loss >= prev - 1e-12);
    prev = loss;
  }

  CHECK_THROWS_AS(lf_bmmi(lp, num, den, {0, 0}, cfg, topo),
                  LengthMismatchError);
}

TEST_CASE("lf_smbr matches enumeration") {
  Rng rng(707);
  UnitInventory inv = make_inv(2, false);
  Topology topo = build_topology(TopoKind::kHmmPb, inv);
  NGramModel lm = train_ngram({seq({0, 1}), seq({1}), seq({0})}, 2, {"a", "b"});
  Lattice den = build_denominator_graph(lm, topo);
  const int U = topo.num_classes();

  for (double kappa : {1.0, 0.5}) {
    std::vector<int> ref = {0, 1, 2, 2};
    const int T = static_cast<int>(ref.size());
    ScoreMatrix lp = random_scores(rng, T, U, true);
    CriterionConfig cfg;
    cfg.kind = CriterionKind::kLfSmbr;
    cfg.kappa = kappa;

    LossGrad lg = lf_smbr(lp, den, ref, cfg, topo);
    std::vector<double> acc = identity_accuracy(ref, topo, U);
    PathStats st = path_stats(den, lp, T, kappa, nullptr, &acc);
    CHECK(lg.loss == doctest::Approx(-st.expected_acc).epsilon(1e-9));

    // dF/dx(t,u) = kappa * (sum_{paths through (t,u)} gamma_p acc_p
    //                       - occ(t,u) * F); the loss gradient is -dF/dx.
    ScoreMatrix want(T, U, 0.0, ScoreSemantics::kGradient);
    for (int t = 0; t < T; ++t)
      for (int u = 0; u < U; ++u)
        want.at(t, u) = -kappa * (st.acc_weighted_occ.at(t, u) -
                                  st.occ.at(t, u) * st.expected_acc);
    check_close(lg.grad, want, 1e-9);
  }

  ScoreMatrix lp(3, U, std::log(1.0 / U));
  CriterionConfig cfg;
  CHECK_THROWS_AS(lf_smbr(lp, den, {0}, cfg, topo), LengthMismatchError);
}

TEST_CASE("state-level accuracy variant") {
  Rng rng(808);
  UnitInventory inv = make_inv(2, false);
  Topology topo = build_topology(TopoKind::kHmm5, inv);
  NGramModel lm = train_ngram({seq({0, 1}), seq({1, 0})}, 1, {"a", "b"});
  Lattice den = build_denominator_graph(lm, topo);
  const int U = topo.num_classes();

  std::vector<int> ref = {0, 1, 2};
  ScoreMatrix lp = random_scores(rng, 3, U, true);
  CriterionConfig cfg;
  cfg.state_level_accuracy = true;
  LossGrad lg = lf_smbr(lp, den, ref, cfg, topo);

  std::vector<double> acc(3 * static_cast<size_t>(U), 0.0);
  for (int t = 0; t < 3; ++t) acc[static_cast<size_t>(t) * U + ref[t]] = 1.0;
  PathStats st = path_stats(den, lp, 3, cfg.kappa, nullptr, &acc);
  CHECK(lg.loss == doctest::Approx(-st.expected_acc).epsilon(1e-9));
}

TEST_CASE("finite-difference gradients") {
  Rng rng(909);
  UnitInventory inv = make_inv(2, true);
  Topology ctc = build_topology(TopoKind::kCtc, inv);
  UnitInventory hmm_inv = make_inv(2, false);
  Topology pb = build_topology(TopoKind::kHmmPb, hmm_inv);
  NGramModel lm =
      train_ngram({seq({0, 1}), seq({1, 0}), seq({0})}, 2, {"a", "b"});
  Lattice den = build_denominator_graph(lm, pb);

  for (int rep = 0; rep < 4; ++rep) {
    const int T = 4;
    // CTC.
    {
      ScoreMatrix lp = random_scores(rng, T, ctc.num_classes(), true);
      LossGrad lg = ctc_loss(lp, seq({0, 1}), ctc);
      double err = max_fd_rel_err(lp, lg.grad, [&](const ScoreMatrix& m) {
        return ctc_loss(m, seq({0, 1}), ctc).loss;
      });
      CHECK(err < 1e-4);
    }
    std::vector<int> ref = {0, 1, 2, 2};
    Lattice num = build_numerator_graph(seq({0}), {0, 0, 1, 1}, 1, pb);
    // LF-MMI.
    {
      CriterionConfig cfg;
      cfg.kappa = 0.8;
      ScoreMatrix lp = random_scores(rng, T, pb.num_classes(), false);
      LossGrad lg = lf_mmi(lp, num, den, cfg);
      double err = max_fd_rel_err(lp, lg.grad, [&](const ScoreMatrix& m) {
        return lf_mmi(m, num, den, cfg).loss;
      });
      CHECK(err < 1e-4);
    }
    // LF-bMMI.
    for (double b : {0.0, 0.1}) {
      CriterionConfig cfg;
      cfg.boost = b;
      ScoreMatrix lp = random_scores(rng, T, pb.num_classes(), false);
      LossGrad lg = lf_bmmi(lp, num, den, ref, cfg, pb);
      double err = max_fd_rel_err(lp, lg.grad, [&](const ScoreMatrix& m) {
        return lf_bmmi(m, num, den, ref, cfg, pb).loss;
      });
      CHECK(err < 1e-4);
    }
    // LF-sMBR.
    {
      CriterionConfig cfg;
      ScoreMatrix lp = random_scores(rng, T, pb.num_classes(), false);
      LossGrad lg = lf_smbr(lp, den, ref, cfg, pb);
      double err = max_fd_rel_err(lp, lg.grad, [&](const ScoreMatrix& m) {
        return lf_smbr(m, den, ref, cfg, pb).loss;
      });
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("state accuracy counts identity matches") {
  UnitInventory inv = make_inv(2, false);
  Topology topo = build_topology(TopoKind::kHmm5, inv);
  // Classes 0..2 belong to phone a, 3..5 to phone b.
  CHECK(state_accuracy({0, 1, 5}, {2, 1, 3}, topo) == 3);
  CHECK(state_accuracy({0, 1, 5}, {2, 1, 3}, topo, true) == 1);
  CHECK(state_accuracy({0, 4}, {3, 4}, topo) == 1);
  CHECK_THROWS_AS(state_accuracy({0}, {0, 1}, topo), LengthMismatchError);

  // Blank classes match only themselves at phone granularity.
  Topology pb = build_topology(TopoKind::kHmmPb, inv);
  CHECK(state_accuracy({1}, {0}, pb) == 0);   // blank(a) vs label(a)
  CHECK(state_accuracy({1}, {1}, pb) == 1);
  CHECK(state_accuracy({1}, {3}, pb) == 0);   // blank(a) vs blank(b)
}

TEST_CASE("non-uniform gradient weights") {
  UnitInventory inv = make_inv(2, false);
  Topology topo = build_topology(TopoKind::kHmmPb, inv);
  NUConfig nu;
  nu.alpha = 2.0;
  nu.beta = 3.0;
  nu.keyword_units = {0};

  // Classes: 0/1 are label/blank of the keyword phone, 2/3 the filler one.
  std::vector<int> ref = {0, 0, 2, 2, 1};
  std::vector<int> hyp = {0, 2, 0, 2, 3};
  std::vector<double> w = nu_weight(ref, hyp, nu, topo);
  CHECK(w == std::vector<double>{2.0, 2.0, 3.0, 1.0, 2.0});

  nu.alpha = 5.0;  // min(alpha, beta) when both sides sit in the keyword
  w = nu_weight(ref, hyp, nu, topo);
  CHECK(w[0] == 3.0);

  CHECK_THROWS_AS(nu_weight(ref, {0}, nu, topo), LengthMismatchError);

  // alpha = beta = 1 leaves the gradient untouched.
  Rng rng(111);
  NUConfig unit;
  unit.keyword_units = {0};
  std::vector<int> r2, h2;
  for (int t = 0; t < 12; ++t) {
    r2.push_back(rng.next_int(0, topo.num_classes() - 1));
    h2.push_back(rng.next_int(0, topo.num_classes() - 1));
  }
  std::vector<double> ones = nu_weight(r2, h2, unit, topo);
  for (double v : ones) CHECK(v == 1.0);

  ScoreMatrix grad(5, 2);
  for (size_t i = 0; i < grad.values.size(); ++i)
    grad.values[i] = static_cast<double>(i) + 1.0;
  ScoreMatrix scaled = grad;
  apply_nu_weights(scaled, {2.0, 1.0, 0.5, 1.0, 3.0});
  CHECK(scaled.at(0, 0) == 2.0);
  CHECK(scaled.at(0, 1) == 4.0);
  CHECK(scaled.at(2, 0) == 2.5);
  CHECK(scaled.at(4, 1) == 30.0);
  CHECK_THROWS_AS(apply_nu_weights(grad, {1.0}), LengthMismatchError);
}
