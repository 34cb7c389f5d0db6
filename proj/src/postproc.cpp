#include "kws/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "json.hpp"

namespace kws {

namespace {

constexpr double kPostFloor = 1e-12;

double floored_log(double v) { return std::log(std::max(v, kPostFloor)); }

}  // namespace

ScoreMatrix smooth_posteriors(const ScoreMatrix& scores,
                              const SmoothConfig& cfg) {
  if (cfg.w_s < 1 || cfg.w_m < 1)
    throw KwsError("smoothing windows must be >= 1");
  const int T = scores.num_frames, N = scores.num_units;
  ScoreMatrix mean(T, N, 0.0, ScoreSemantics::kLinearPosterior);
  for (int t = 0; t < T; ++t) {
    const int lo = std::max(0, t - (cfg.w_s - 1) / 2);
    const int hi = std::min(T - 1, t + cfg.w_s / 2);
    for (int u = 0; u < N; ++u) {
      double acc = 0.0;
      for (int j = lo; j <= hi; ++j) acc += scores.at(j, u);
      mean.at(t, u) = acc / (hi - lo + 1);
    }
  }
  ScoreMatrix out(T, N, 0.0, ScoreSemantics::kLinearPosterior);
  for (int t = 0; t < T; ++t) {
    const int lo = std::max(0, t - cfg.w_m + 1);
    for (int u = 0; u < N; ++u) {
      double best = mean.at(lo, u);
      for (int j = lo + 1; j <= t; ++j) best = std::max(best, mean.at(j, u));
      out.at(t, u) = best;
    }
  }
  return out;
}

ScoreMatrix unit_posteriors(const ScoreMatrix& class_posteriors,
                            const Topology& topology) {
  if (class_posteriors.num_units != topology.num_classes())
    throw DimensionMismatchError("class posterior width != classes");
  const int T = class_posteriors.num_frames;
  ScoreMatrix out(T, topology.num_units(), 0.0,
                  ScoreSemantics::kLinearPosterior);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < topology.num_classes(); ++c) {
      if (topology.class_is_blank(c)) continue;
      out.at(t, topology.class_unit(c)) += class_posteriors.at(t, c);
    }
  return out;
}

ScoreMatrix unit_pseudo_likelihood(const ScoreMatrix& class_log_posteriors,
                                   const PriorVector& priors,
                                   const Topology& topology) {
  if (static_cast<int>(priors.p.size()) != topology.num_classes())
    throw DimensionMismatchError("prior size != classes");
  const int T = class_log_posteriors.num_frames;
  const int U = topology.num_units();
  std::vector<double> unit_prior(U, 0.0);
  for (int c = 0; c < topology.num_classes(); ++c)
    if (!topology.class_is_blank(c)) unit_prior[topology.class_unit(c)] += priors.p[c];
  ScoreMatrix out(T, U, 0.0, ScoreSemantics::kLogPseudoLikelihood);
  for (int t = 0; t < T; ++t) {
    std::vector<double> mass(U, 0.0);
    for (int c = 0; c < topology.num_classes(); ++c) {
      if (topology.class_is_blank(c)) continue;
      mass[topology.class_unit(c)] += std::exp(class_log_posteriors.at(t, c));
    }
    for (int u = 0; u < U; ++u)
      out.at(t, u) = floored_log(mass[u]) - floored_log(unit_prior[u]);
  }
  return out;
}

std::vector<double> keyword_confidence(const ScoreMatrix& smoothed,
                                       const std::vector<int>& keyword_units) {
  if (keyword_units.empty()) throw KwsError("empty keyword");
  std::vector<double> conf(smoothed.num_frames, 0.0);
  for (int t = 0; t < smoothed.num_frames; ++t) {
    double acc = 0.0;
    for (int u : keyword_units) acc += floored_log(smoothed.at(t, u));
    conf[t] = std::exp(acc / static_cast<double>(keyword_units.size()));
  }
  return conf;
}

ThresholdTable estimate_thresholds(
    const std::vector<ScoreMatrix>& class_posteriors,
    const std::vector<std::vector<int>>& alignments,
    const std::vector<LabelSequence>& keywords, const UnitInventory& inventory,
    const Topology& topology) {
  if (class_posteriors.size() != alignments.size())
    throw DimensionMismatchError("posteriors/alignments count mismatch");
  std::vector<double> sum(topology.num_units(), 0.0);
  std::vector<long long> count(topology.num_units(), 0);
  for (size_t i = 0; i < class_posteriors.size(); ++i) {
    ScoreMatrix up = unit_posteriors(class_posteriors[i], topology);
    const std::vector<int>& align = alignments[i];
    if (static_cast<int>(align.size()) != up.num_frames)
      throw LengthMismatchError("alignment length != frames");
    for (int t = 0; t < up.num_frames; ++t) {
      const int c = align[t];
      if (c < 0 || c >= topology.num_classes())
        throw UnknownUnitError("alignment class " + std::to_string(c));
      if (topology.class_is_blank(c)) continue;
      const int u = topology.class_unit(c);
      if (!inventory.is_phone(u)) continue;
      sum[u] += up.at(t, u);
      ++count[u];
    }
  }
  std::vector<double> mean(topology.num_units(), 0.0);
  for (int u = 0; u < inventory.num_phones(); ++u) {
    if (count[u] == 0)
      throw UncoveredPhoneError("phone " + inventory.unit_name(u) +
                                " never aligned in dev set");
    mean[u] = sum[u] / static_cast<double>(count[u]);
  }
  ThresholdTable table;
  table.per_keyword.reserve(keywords.size());
  for (const LabelSequence& kw : keywords) {
    double acc = 0.0;
    int n = 0;
    for (int u : kw.units) {
      if (!inventory.is_phone(u)) continue;
      acc += floored_log(mean[u]);
      ++n;
    }
    if (n == 0) throw KwsError("keyword without phones");
    table.per_keyword.push_back(std::exp(acc / n));
  }
  return table;
}

Lattice build_kwfiller_graph(const std::vector<LabelSequence>& keywords,
                             const UnitInventory& inventory,
                             double filler_logw) {
  if (keywords.empty()) throw KwsError("no keywords");
  Lattice g;
  g.add_state();  // hub
  g.set_final(0, 0.0);
  for (size_t k = 0; k < keywords.size(); ++k) {
    const std::vector<int>& units = keywords[k].units;
    if (units.empty()) throw KwsError("empty keyword");
    int prev = 0;
    for (int u : units) {
      const int st = g.add_state();
      g.add_arc(prev, st, u, 0.0, static_cast<int>(k));
      g.add_arc(st, st, u, 0.0, static_cast<int>(k));
      prev = st;
    }
    g.add_arc(prev, 0, kEpsilon, 0.0);
  }
  std::vector<int> loop_units;
  for (int u = 0; u < inventory.num_phones(); ++u) loop_units.push_back(u);
  if (inventory.has_wb()) loop_units.push_back(inventory.wb_id());
  if (inventory.has_filler()) loop_units.push_back(inventory.filler_id());
  for (int u : loop_units) {
    const int st = g.add_state();
    g.add_arc(0, st, u, filler_logw);
    g.add_arc(st, st, u, 0.0);
    g.add_arc(st, 0, kEpsilon, 0.0);
  }
  g = eliminate_epsilon(g);
  g = trim(g);
  g.frame_synchronous = true;
  return g;
}

std::vector<Detection> kwfiller_decode(const Lattice& graph,
                                       const ScoreMatrix& scores) {
  ViterbiResult vit = viterbi(graph, scores, scores.num_frames);
  std::vector<Detection> dets;
  int t = 0;
  while (t < scores.num_frames) {
    const int k = vit.arc_aux[t];
    if (k < 0) {
      ++t;
      continue;
    }
    int end = t;
    double acc = scores.at(t, vit.units[t]);
    while (end + 1 < scores.num_frames && vit.arc_aux[end + 1] == k) {
      ++end;
      acc += scores.at(end, vit.units[end]);
    }
    Detection d;
    d.keyword = k;
    d.start_frame = t;
    d.end_frame = end;
    d.score = acc / (end - t + 1);
    dets.push_back(d);
    t = end + 1;
  }
  return dets;
}

PeakLattice build_ctc_peak_lattice(const ScoreMatrix& log_posteriors,
                                   const Topology& topology, double h_node,
                                   double spike) {
  if (log_posteriors.num_units != topology.num_classes())
    throw DimensionMismatchError("posterior width != classes");
  PeakLattice pl;
  for (int t = 0; t < log_posteriors.num_frames; ++t) {
    double best = 0.0;
    for (int c = 0; c < topology.num_classes(); ++c) {
      if (topology.class_is_blank(c)) continue;
      best = std::max(best, std::exp(log_posteriors.at(t, c)));
    }
    if (best < spike) continue;
    PeakColumn col;
    col.frame = t;
    for (int c = 0; c < topology.num_classes(); ++c) {
      if (topology.class_is_blank(c)) continue;
      const double p = std::exp(log_posteriors.at(t, c));
      if (p >= h_node) col.candidates.emplace_back(topology.class_unit(c), p);
    }
    pl.columns.push_back(std::move(col));
  }
  return pl;
}

ConfusionMatrix unit_cost_confusions(int num_units) {
  ConfusionMatrix cm;
  cm.num_units = num_units;
  const double e1 = std::exp(-1.0);
  cm.sub.assign(static_cast<size_t>(num_units) * num_units, e1);
  for (int u = 0; u < num_units; ++u) cm.sub_p(u, u) = 1.0;
  cm.ins.assign(num_units, e1);
  cm.del.assign(num_units, e1);
  return cm;
}

namespace {

bool wb_compatible(int a, int b, int wb_unit) {
  return (a == wb_unit) == (b == wb_unit);
}

struct EditCounts {
  std::vector<long long> sub;        // ref * U + dec, diagonal = match
  std::vector<long long> del, ins;   // per ref unit / per decoded unit
  std::vector<long long> dec_total;  // decoded tokens per unit
};

// Unit-cost global alignment; ties prefer match/sub, then del, then ins.
void count_edits(const std::vector<int>& hyp, const std::vector<int>& ref,
                 int num_units, int wb_unit, EditCounts& ec) {
  const int n = static_cast<int>(hyp.size());
  const int m = static_cast<int>(ref.size());
  const int big = n + m + 1;
  std::vector<int> cost(static_cast<size_t>(n + 1) * (m + 1), 0);
  auto at = [&](int i, int j) -> int& { return cost[i * (m + 1) + j]; };
  for (int i = 1; i <= n; ++i) at(i, 0) = i;
  for (int j = 1; j <= m; ++j) at(0, j) = j;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      const bool ok = wb_compatible(hyp[i - 1], ref[j - 1], wb_unit);
      const int diag =
          ok ? at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1) : big;
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  int i = n, j = m;
  while (i > 0 || j > 0) {
    const bool ok =
        i > 0 && j > 0 && wb_compatible(hyp[i - 1], ref[j - 1], wb_unit);
    const int diag =
        ok ? at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? 0 : 1) : big;
    if (ok && at(i, j) == diag) {
      ++ec.sub[ref[j - 1] * num_units + hyp[i - 1]];
      ++ec.dec_total[hyp[i - 1]];
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++ec.del[ref[j - 1]];
      --j;
    } else {
      ++ec.ins[hyp[i - 1]];
      ++ec.dec_total[hyp[i - 1]];
      --i;
    }
  }
}

}  // namespace

ConfusionMatrix estimate_confusions(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>&
        hyp_ref_pairs,
    int num_units, int wb_unit, double floor) {
  if (hyp_ref_pairs.empty()) throw EmptyDevError("no dev decodes");
  EditCounts ec;
  ec.sub.assign(static_cast<size_t>(num_units) * num_units, 0);
  ec.del.assign(num_units, 0);
  ec.ins.assign(num_units, 0);
  ec.dec_total.assign(num_units, 0);
  for (const auto& [hyp, ref] : hyp_ref_pairs)
    count_edits(hyp, ref, num_units, wb_unit, ec);
  ConfusionMatrix cm;
  cm.num_units = num_units;
  cm.floor = floor;
  cm.sub.assign(static_cast<size_t>(num_units) * num_units, floor);
  cm.ins.assign(num_units, floor);
  cm.del.assign(num_units, floor);
  for (int r = 0; r < num_units; ++r) {
    long long row_total = ec.del[r];
    for (int d = 0; d < num_units; ++d) row_total += ec.sub[r * num_units + d];
    if (row_total > 0) {
      for (int d = 0; d < num_units; ++d)
        cm.sub_p(r, d) = std::max(
            floor, static_cast<double>(ec.sub[r * num_units + d]) / row_total);
      cm.del[r] =
          std::max(floor, static_cast<double>(ec.del[r]) / row_total);
    }
    double norm = cm.del[r];
    for (int d = 0; d < num_units; ++d) norm += cm.sub_p(r, d);
    for (int d = 0; d < num_units; ++d) cm.sub_p(r, d) /= norm;
    cm.del[r] /= norm;
  }
  for (int d = 0; d < num_units; ++d)
    if (ec.dec_total[d] > 0)
      cm.ins[d] = std::max(
          floor, static_cast<double>(ec.ins[d]) / ec.dec_total[d]);
  return cm;
}

std::string confusions_to_json(const ConfusionMatrix& cm,
                               const UnitInventory& inventory) {
  if (cm.num_units > inventory.total_units())
    throw DimensionMismatchError("more confusion units than inventory units");
  nlohmann::json j;
  j["num_units"] = cm.num_units;
  j["floor"] = cm.floor;
  for (int u = 0; u < cm.num_units; ++u) {
    const std::string name = inventory.unit_name(u);
    j["insertion"][name] = cm.ins[u];
    j["deletion"][name] = cm.del[u];
    for (int d = 0; d < cm.num_units; ++d)
      j["substitution"][name][inventory.unit_name(d)] = cm.sub_p(u, d);
  }
  return j.dump(2) + "\n";
}

ConfusionMatrix confusions_from_json(const std::string& text,
                                     const UnitInventory& inventory) {
  nlohmann::json j = nlohmann::json::parse(text);
  ConfusionMatrix cm;
  cm.num_units = j.at("num_units").get<int>();
  if (cm.num_units > inventory.total_units())
    throw DimensionMismatchError("more confusion units than inventory units");
  cm.floor = j.at("floor").get<double>();
  cm.sub.assign(static_cast<size_t>(cm.num_units) * cm.num_units, cm.floor);
  cm.ins.assign(cm.num_units, cm.floor);
  cm.del.assign(cm.num_units, cm.floor);
  for (int u = 0; u < cm.num_units; ++u) {
    const std::string name = inventory.unit_name(u);
    cm.ins[u] = j.at("insertion").at(name).get<double>();
    cm.del[u] = j.at("deletion").at(name).get<double>();
    for (int d = 0; d < cm.num_units; ++d)
      cm.sub_p(u, d) =
          j.at("substitution").at(name).at(inventory.unit_name(d)).get<double>();
  }
  return cm;
}

double med_align(const std::vector<int>& hyp, const std::vector<int>& ref,
                 const ConfusionMatrix& cm, int wb_unit) {
  const int n = static_cast<int>(hyp.size());
  const int m = static_cast<int>(ref.size());
  std::vector<double> score(static_cast<size_t>(n + 1) * (m + 1), kLogZero);
  auto at = [&](int i, int j) -> double& { return score[i * (m + 1) + j]; };
  at(0, 0) = 0.0;
  for (int i = 1; i <= n; ++i)
    at(i, 0) = at(i - 1, 0) + std::log(cm.ins[hyp[i - 1]]);
  for (int j = 1; j <= m; ++j)
    at(0, j) = at(0, j - 1) + std::log(cm.del[ref[j - 1]]);
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      double best = at(i, j - 1) + std::log(cm.del[ref[j - 1]]);
      best = std::max(best, at(i - 1, j) + std::log(cm.ins[hyp[i - 1]]));
      if (wb_compatible(hyp[i - 1], ref[j - 1], wb_unit))
        best = std::max(
            best, at(i - 1, j - 1) + std::log(cm.sub_p(ref[j - 1], hyp[i - 1])));
      at(i, j) = best;
    }
  return at(n, m);
}

std::vector<MedCandidate> med_candidates(const PeakLattice& lattice,
                                         const std::vector<int>& keyword,
                                         const ConfusionMatrix& cm,
                                         int wb_unit) {
  if (keyword.empty()) throw KwsError("empty keyword");
  const int N = static_cast<int>(lattice.columns.size());
  const int P = static_cast<int>(keyword.size());
  std::vector<double> score(static_cast<size_t>(N + 1) * (P + 1), kLogZero);
  std::vector<int> start(static_cast<size_t>(N + 1) * (P + 1), -1);
  auto sat = [&](int i, int j) -> double& { return score[i * (P + 1) + j]; };
  auto bat = [&](int i, int j) -> int& { return start[i * (P + 1) + j]; };
  auto relax = [&](int i, int j, double v, int st) {
    if (v > sat(i, j)) {
      sat(i, j) = v;
      bat(i, j) = st;
    }
  };
  for (int i = 0; i <= N; ++i) {
    sat(i, 0) = 0.0;
    bat(i, 0) = i;
  }
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= P; ++j) {
      const double s = sat(i, j);
      if (log_is_zero(s)) continue;
      const int st = bat(i, j);
      if (j < P) relax(i, j + 1, s + std::log(cm.del[keyword[j]]), st);
      if (i < N) {
        const PeakColumn& col = lattice.columns[i];
        double ins_best = kLogZero, sub_best = kLogZero;
        for (const auto& [unit, p] : col.candidates) {
          ins_best = std::max(ins_best, std::log(cm.ins[unit]));
          if (j < P && wb_compatible(keyword[j], unit, wb_unit))
            sub_best =
                std::max(sub_best, std::log(cm.sub_p(keyword[j], unit)));
        }
        if (!log_is_zero(ins_best)) relax(i + 1, j, s + ins_best, st);
        if (j < P && !log_is_zero(sub_best))
          relax(i + 1, j + 1, s + sub_best, st);
      }
    }
  std::vector<MedCandidate> out;
  for (int i = 0; i <= N; ++i) {
    if (log_is_zero(sat(i, P))) continue;
    if (bat(i, P) >= i) continue;  // no column consumed
    out.push_back(MedCandidate{bat(i, P), i, sat(i, P)});
  }
  return out;
}

std::vector<Detection> med_search(const PeakLattice& lattice,
                                  const std::vector<int>& keyword,
                                  int keyword_id, const ConfusionMatrix& cm,
                                  double log_threshold, int wb_unit) {
  std::vector<MedCandidate> cands = med_candidates(lattice, keyword, cm, wb_unit);
  std::vector<MedCandidate> kept;
  for (const MedCandidate& c : cands)
    if (c.log_score >= log_threshold) kept.push_back(c);
  std::sort(kept.begin(), kept.end(),
            [](const MedCandidate& a, const MedCandidate& b) {
              if (a.log_score != b.log_score) return a.log_score > b.log_score;
              if (a.start_col != b.start_col) return a.start_col < b.start_col;
              return a.end_col < b.end_col;
            });
  std::vector<Detection> out;
  std::vector<std::pair<int, int>> spans;
  for (const MedCandidate& c : kept) {
    bool clash = false;
    for (const auto& [s, e] : spans)
      if (c.start_col < e && s < c.end_col) {
        clash = true;
        break;
      }
    if (clash) continue;
    spans.emplace_back(c.start_col, c.end_col);
    Detection d;
    d.keyword = keyword_id;
    d.start_frame = lattice.columns[c.start_col].frame;
    d.end_frame = lattice.columns[c.end_col - 1].frame;
    d.score = c.log_score;
    out.push_back(d);
  }
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    return a.start_frame < b.start_frame;
  });
  return out;
}

std::string detections_to_csv(
    const std::vector<std::pair<std::string, Detection>>& rows,
    const std::vector<std::string>& keyword_names) {
  std::string out = "utt_id,keyword,start_frame,end_frame,score\n";
  char buf[64];
  for (const auto& [utt, d] : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", d.score);
    out += utt + ',' + keyword_names.at(d.keyword) + ',' +
           std::to_string(d.start_frame) + ',' + std::to_string(d.end_frame) +
           ',' + buf + '\n';
  }
  return out;
}

}  // namespace kws
