#include "kws/criteria.hpp"

#include <algorithm>
#include <cmath>

namespace kws {

std::string criterion_name(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::kCe: return "ce";
    case CriterionKind::kCtc: return "ctc";
    case CriterionKind::kLfMmi: return "lf-mmi";
    case CriterionKind::kLfBmmi: return "lf-bmmi";
    case CriterionKind::kLfSmbr: return "lf-smbr";
  }
  throw KwsError("bad criterion kind");
}

CriterionKind criterion_from_name(const std::string& name) {
  if (name == "ce") return CriterionKind::kCe;
  if (name == "ctc") return CriterionKind::kCtc;
  if (name == "lf-mmi") return CriterionKind::kLfMmi;
  if (name == "lf-bmmi") return CriterionKind::kLfBmmi;
  if (name == "lf-smbr") return CriterionKind::kLfSmbr;
  throw FormatError("unknown criterion: " + name);
}

LossGrad ce_loss(const ScoreMatrix& log_posteriors,
                 const std::vector<int>& alignment) {
  const int T = log_posteriors.num_frames;
  if (static_cast<int>(alignment.size()) != T)
    throw LengthMismatchError("alignment vs frames");
  LossGrad out;
  out.grad = ScoreMatrix(T, log_posteriors.num_units, 0.0,
                         ScoreSemantics::kGradient);
  for (int t = 0; t < T; ++t) {
    int ref = alignment[t];
    if (ref < 0 || ref >= log_posteriors.num_units)
      throw UnknownUnitError("alignment class " + std::to_string(ref));
    out.loss -= log_posteriors.at(t, ref);
    out.grad.at(t, ref) = -1.0;
  }
  return out;
}

LossGrad ctc_loss(const ScoreMatrix& log_posteriors,
                  const LabelSequence& labels, const Topology& topology) {
  if (topology.kind() != TopoKind::kCtc)
    throw KwsError("ctc_loss requires a CTC topology");
  Lattice graph = compile_sequence_graph(labels, topology);
  FBResult fb =
      forward_backward(graph, log_posteriors, log_posteriors.num_frames);
  if (log_is_zero(fb.log_total))
    throw InfeasibleError("label sequence too long for frame count");
  LossGrad out;
  out.loss = -fb.log_total;
  out.grad = fb.occupancy;
  out.grad.semantics = ScoreSemantics::kGradient;
  for (double& v : out.grad.values) v = -v;
  return out;
}

namespace {

// Emitted class of each state (uniform over in-arcs by construction); -1 for
// states with no in-arcs (the initial).
std::vector<int> state_classes(const Lattice& g) {
  std::vector<int> cls(g.num_states(), -1);
  for (int s = 0; s < g.num_states(); ++s)
    for (const auto& a : g.arcs[s]) {
      if (cls[a.dst] >= 0 && cls[a.dst] != a.unit)
        throw KwsError("state with mixed emission classes");
      cls[a.dst] = a.unit;
    }
  return cls;
}

// Topological order of the graph ignoring self-loops.
std::vector<int> topo_order(const Lattice& g) {
  const int S = g.num_states();
  std::vector<int> indeg(S, 0);
  for (int s = 0; s < S; ++s)
    for (const auto& a : g.arcs[s])
      if (a.dst != s) ++indeg[a.dst];
  std::vector<int> order;
  std::vector<int> queue;
  for (int s = 0; s < S; ++s)
    if (indeg[s] == 0) queue.push_back(s);
  while (!queue.empty()) {
    int s = queue.back();
    queue.pop_back();
    order.push_back(s);
    for (const auto& a : g.arcs[s])
      if (a.dst != s && --indeg[a.dst] == 0) queue.push_back(a.dst);
  }
  if (static_cast<int>(order.size()) != S)
    throw KwsError("sequence graph is not chain-structured");
  return order;
}

}  // namespace

Lattice build_numerator_graph(const LabelSequence& labels,
                              const std::vector<int>& reference_alignment,
                              int tolerance, const Topology& topology) {
  const int T = static_cast<int>(reference_alignment.size());
  Lattice g = compile_sequence_graph(labels, topology);
  const int S = g.num_states();
  std::vector<int> cls = state_classes(g);

  // Feasibility DP: which states can have consumed the alignment prefix.
  std::vector<std::vector<char>> reach(T + 1, std::vector<char>(S, 0));
  reach[0][0] = 1;
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      if (!reach[t][s]) continue;
      for (const auto& a : g.arcs[s])
        if (a.unit == reference_alignment[t]) reach[t + 1][a.dst] = 1;
    }
  int end_state = -1;
  for (int s = 0; s < S; ++s)
    if (reach[T][s] && g.is_final(s)) {
      end_state = s;
      break;
    }
  if (end_state < 0)
    throw InfeasibleError("reference alignment not accepted by label graph");

  // Deterministic backtrace; boundaries land as late as possible (prefer a
  // non-self predecessor, i.e. the segment was just entered).
  std::vector<int> path(T + 1);
  path[T] = end_state;
  for (int t = T; t > 0; --t) {
    int cur = path[t];
    int pick = -1;
    for (int s = 0; s < S && pick < 0; ++s) {
      if (s == cur || !reach[t - 1][s]) continue;
      for (const auto& a : g.arcs[s])
        if (a.dst == cur && a.unit == reference_alignment[t - 1]) {
          pick = s;
          break;
        }
    }
    if (pick < 0 && reach[t - 1][cur]) {
      for (const auto& a : g.arcs[cur])
        if (a.dst == cur && a.unit == reference_alignment[t - 1]) {
          pick = cur;
          break;
        }
    }
    if (pick < 0) throw KwsError("alignment backtrace failed");
    path[t - 1] = pick;
  }

  // Occupancy spans: state s is occupied at frame t when path[t+1] == s.
  std::vector<int> begin(S, -1), end(S, -1);
  for (int t = 0; t < T; ++t) {
    int s = path[t + 1];
    if (begin[s] < 0) begin[s] = t;
    end[s] = t + 1;
  }

  // Insertion times for unvisited states: the boundary the reference passes
  // through at their position.  Successor entries first, predecessor exits
  // as fallback.
  std::vector<int> order = topo_order(g);
  std::vector<int> insert_at(S, -1);
  auto entry_time = [&](int s) {
    return begin[s] >= 0 ? begin[s] : insert_at[s];
  };
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int s = *it;
    if (begin[s] >= 0) continue;
    int best = -1;
    for (const auto& a : g.arcs[s]) {
      if (a.dst == s) continue;
      int e = entry_time(a.dst);
      if (e >= 0 && (best < 0 || e < best)) best = e;
    }
    insert_at[s] = best;
  }
  std::vector<std::vector<int>> preds(S);
  for (int s = 0; s < S; ++s)
    for (const auto& a : g.arcs[s])
      if (a.dst != s) preds[a.dst].push_back(s);
  for (int s_idx : order) {
    int s = s_idx;
    if (begin[s] >= 0 || insert_at[s] >= 0) continue;
    int best = -1;
    for (int p : preds[s]) {
      int e = begin[p] >= 0 ? end[p] : insert_at[p];
      if (e >= 0 && e > best) best = e;
    }
    insert_at[s] = best;
  }

  auto in_window = [&](int s, int t) {
    if (begin[s] >= 0)
      return t >= begin[s] - tolerance && t <= end[s] - 1 + tolerance;
    if (insert_at[s] >= 0)
      return t >= insert_at[s] - tolerance && t <= insert_at[s] + tolerance - 1;
    return false;
  };

  // Time-expanded product.
  Lattice out;
  out.frame_synchronous = true;
  std::vector<std::vector<int>> id(T + 1, std::vector<int>(S, -1));
  id[0][0] = out.add_state();
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      if (id[t][s] < 0) continue;
      for (const auto& a : g.arcs[s]) {
        if (!in_window(a.dst, t)) continue;
        if (id[t + 1][a.dst] < 0) id[t + 1][a.dst] = out.add_state();
        out.add_arc(id[t][s], id[t + 1][a.dst], a.unit, a.logw, a.aux);
      }
    }
  for (int s = 0; s < S; ++s)
    if (id[T][s] >= 0 && g.is_final(s))
      out.final_weight[id[T][s]] = g.final_weight[s];
  return trim(out);
}

namespace {

void check_no_path(const FBResult& fb, const char* which) {
  if (log_is_zero(fb.log_total))
    throw NoPathError(std::string(which) + " graph has no accepting path");
}

ScoreMatrix scale_scores(const ScoreMatrix& scores, double kappa) {
  ScoreMatrix out = scores;
  for (double& v : out.values) v *= kappa;
  return out;
}

std::vector<double> accuracy_table(const std::vector<int>& reference,
                                   const Topology& topo, bool state_level,
                                   int num_classes) {
  const int T = static_cast<int>(reference.size());
  std::vector<double> acc(static_cast<size_t>(T) * num_classes, 0.0);
  for (int t = 0; t < T; ++t) {
    int ref = reference[t];
    int rid = state_level ? ref : topo.class_identity(ref);
    for (int u = 0; u < num_classes; ++u) {
      int uid = state_level ? u : topo.class_identity(u);
      if (uid == rid) acc[static_cast<size_t>(t) * num_classes + u] = 1.0;
    }
  }
  return acc;
}

}  // namespace

LossGrad lf_mmi(const ScoreMatrix& log_posteriors, const Lattice& numerator,
                const Lattice& denominator, const CriterionConfig& cfg) {
  const int T = log_posteriors.num_frames;
  ScoreMatrix scaled = scale_scores(log_posteriors, cfg.kappa);
  FBResult num = forward_backward(numerator, scaled, T);
  check_no_path(num, "numerator");
  FBResult den = forward_backward(denominator, scaled, T);
  check_no_path(den, "denominator");

  LossGrad out;
  out.loss = -(num.log_total - den.log_total);
  out.grad = ScoreMatrix(T, log_posteriors.num_units, 0.0,
                         ScoreSemantics::kGradient);
  for (size_t i = 0; i < out.grad.values.size(); ++i)
    out.grad.values[i] =
        cfg.kappa * (den.occupancy.values[i] - num.occupancy.values[i]);
  return out;
}

LossGrad lf_bmmi(const ScoreMatrix& log_posteriors, const Lattice& numerator,
                 const Lattice& denominator,
                 const std::vector<int>& reference_alignment,
                 const CriterionConfig& cfg, const Topology& topology) {
  const int T = log_posteriors.num_frames;
  if (static_cast<int>(reference_alignment.size()) != T)
    throw LengthMismatchError("reference alignment vs frames");
  const int U = log_posteriors.num_units;
  ScoreMatrix scaled = scale_scores(log_posteriors, cfg.kappa);
  FBResult num = forward_backward(numerator, scaled, T);
  check_no_path(num, "numerator");

  std::vector<double> acc = accuracy_table(
      reference_alignment, topology, cfg.state_level_accuracy, U);
  ScoreMatrix boosted = scaled;
  for (size_t i = 0; i < boosted.values.size(); ++i)
    boosted.values[i] += cfg.boost * (1.0 - acc[i]);
  FBResult den = forward_backward(denominator, boosted, T);
  check_no_path(den, "denominator");

  LossGrad out;
  out.loss = -(num.log_total - den.log_total);
  out.grad = ScoreMatrix(T, U, 0.0, ScoreSemantics::kGradient);
  for (size_t i = 0; i < out.grad.values.size(); ++i)
    out.grad.values[i] =
        cfg.kappa * (den.occupancy.values[i] - num.occupancy.values[i]);
  return out;
}

LossGrad lf_smbr(const ScoreMatrix& log_posteriors, const Lattice& denominator,
                 const std::vector<int>& reference_alignment,
                 const CriterionConfig& cfg, const Topology& topology) {
  const int T = log_posteriors.num_frames;
  if (static_cast<int>(reference_alignment.size()) != T)
    throw LengthMismatchError("reference alignment vs frames");
  const int U = log_posteriors.num_units;
  const int S = denominator.num_states();
  ScoreMatrix scores = scale_scores(log_posteriors, cfg.kappa);
  std::vector<double> acc = accuracy_table(
      reference_alignment, topology, cfg.state_level_accuracy, U);
  auto acc_at = [&](int t, int u) {
    return acc[static_cast<size_t>(t) * U + u];
  };

  // Double-statistic forward-backward: log-domain path mass plus
  // linear-domain expected prefix/suffix accuracy conditioned on the state.
  std::vector<std::vector<double>> alpha(T + 1, std::vector<double>(S, kLogZero));
  std::vector<std::vector<double>> alpha_acc(T + 1, std::vector<double>(S, 0.0));
  alpha[0][0] = 0.0;
  for (int t = 0; t < T; ++t) {
    auto& anext = alpha[t + 1];
    for (int s = 0; s < S; ++s) {
      double as = alpha[t][s];
      if (log_is_zero(as)) continue;
      for (const auto& a : denominator.arcs[s]) {
        double w = as + a.logw + scores.at(t, a.unit);
        anext[a.dst] = log_add(anext[a.dst], w);
      }
    }
    for (int s = 0; s < S; ++s) {
      double as = alpha[t][s];
      if (log_is_zero(as)) continue;
      for (const auto& a : denominator.arcs[s]) {
        double w = as + a.logw + scores.at(t, a.unit);
        if (log_is_zero(anext[a.dst])) continue;
        alpha_acc[t + 1][a.dst] += std::exp(w - anext[a.dst]) *
                                   (alpha_acc[t][s] + acc_at(t, a.unit));
      }
    }
  }

  double log_total = kLogZero;
  for (int s = 0; s < S; ++s)
    if (denominator.is_final(s))
      log_total =
          log_add(log_total, alpha[T][s] + denominator.final_weight[s]);
  if (log_is_zero(log_total)) throw NoPathError("smbr denominator");

  double objective = 0.0;
  for (int s = 0; s < S; ++s)
    if (denominator.is_final(s) && !log_is_zero(alpha[T][s]))
      objective += std::exp(alpha[T][s] + denominator.final_weight[s] -
                            log_total) *
                   alpha_acc[T][s];

  std::vector<std::vector<double>> beta(T + 1, std::vector<double>(S, kLogZero));
  std::vector<std::vector<double>> beta_acc(T + 1, std::vector<double>(S, 0.0));
  for (int s = 0; s < S; ++s)
    if (denominator.is_final(s)) beta[T][s] = denominator.final_weight[s];
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double total = kLogZero;
      for (const auto& a : denominator.arcs[s]) {
        double bd = beta[t + 1][a.dst];
        if (log_is_zero(bd)) continue;
        total = log_add(total, a.logw + scores.at(t, a.unit) + bd);
      }
      beta[t][s] = total;
      if (log_is_zero(total)) continue;
      double e = 0.0;
      for (const auto& a : denominator.arcs[s]) {
        double bd = beta[t + 1][a.dst];
        if (log_is_zero(bd)) continue;
        e += std::exp(a.logw + scores.at(t, a.unit) + bd - total) *
             (acc_at(t, a.unit) + beta_acc[t + 1][a.dst]);
      }
      beta_acc[t][s] = e;
    }
  }

  LossGrad out;
  out.loss = -objective;
  out.grad = ScoreMatrix(T, U, 0.0, ScoreSemantics::kGradient);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double as = alpha[t][s];
      if (log_is_zero(as)) continue;
      for (const auto& a : denominator.arcs[s]) {
        double bd = beta[t + 1][a.dst];
        if (log_is_zero(bd)) continue;
        double gamma =
            std::exp(as + a.logw + scores.at(t, a.unit) + bd - log_total);
        double dev = alpha_acc[t][s] + acc_at(t, a.unit) +
                     beta_acc[t + 1][a.dst] - objective;
        // gradient of loss = -F
        out.grad.at(t, a.unit) += -cfg.kappa * gamma * dev;
      }
    }
  }
  return out;
}

int state_accuracy(const std::vector<int>& path,
                   const std::vector<int>& reference, const Topology& topology,
                   bool state_level) {
  if (path.size() != reference.size())
    throw LengthMismatchError("path vs reference");
  int n = 0;
  for (size_t t = 0; t < path.size(); ++t) {
    int a = state_level ? path[t] : topology.class_identity(path[t]);
    int b = state_level ? reference[t] : topology.class_identity(reference[t]);
    if (a == b) ++n;
  }
  return n;
}

std::vector<double> nu_weight(const std::vector<int>& reference,
                              const std::vector<int>& hypothesis,
                              const NUConfig& nu, const Topology& topology) {
  if (reference.size() != hypothesis.size())
    throw LengthMismatchError("reference vs hypothesis");
  std::vector<double> w(reference.size(), 1.0);
  for (size_t t = 0; t < reference.size(); ++t) {
    bool ref_kw = nu.keyword_units.count(topology.class_unit(reference[t])) > 0;
    bool hyp_kw =
        nu.keyword_units.count(topology.class_unit(hypothesis[t])) > 0;
    if (ref_kw && hyp_kw)
      w[t] = std::min(nu.alpha, nu.beta);
    else if (ref_kw)
      w[t] = nu.alpha;
    else if (hyp_kw)
      w[t] = nu.beta;
  }
  return w;
}

void apply_nu_weights(ScoreMatrix& grad, const std::vector<double>& weights) {
  if (static_cast<int>(weights.size()) != grad.num_frames)
    throw LengthMismatchError("weights vs grad frames");
  for (int t = 0; t < grad.num_frames; ++t)
    for (int u = 0; u < grad.num_units; ++u) grad.at(t, u) *= weights[t];
}

}  // namespace kws
