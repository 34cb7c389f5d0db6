#include "kws/topology.hpp"

#include <algorithm>
#include <cmath>

namespace kws {

namespace {
const double kLogHalf = std::log(0.5);
const double kLogQuarter = std::log(0.25);
}  // namespace

std::string topo_kind_name(TopoKind kind) {
  switch (kind) {
    case TopoKind::kHmm5: return "hmm5";
    case TopoKind::kCtc: return "ctc";
    case TopoKind::kHmmPb: return "hmm-pb";
    case TopoKind::kHmmBp: return "hmm-bp";
    case TopoKind::kHmmBpb: return "hmm-bpb";
  }
  throw KwsError("bad topology kind");
}

TopoKind topo_kind_from_name(const std::string& name) {
  if (name == "hmm5") return TopoKind::kHmm5;
  if (name == "ctc") return TopoKind::kCtc;
  if (name == "hmm-pb") return TopoKind::kHmmPb;
  if (name == "hmm-bp") return TopoKind::kHmmBp;
  if (name == "hmm-bpb") return TopoKind::kHmmBpb;
  throw FormatError("unknown topology kind: " + name);
}

const UnitTemplate& Topology::unit_template(int unit) const {
  if (unit < 0 || unit >= num_units())
    throw UnknownUnitError("no template for unit " + std::to_string(unit));
  return templates_[unit];
}

std::vector<int> Topology::unit_classes(int unit) const {
  std::vector<int> out;
  for (int c = 0; c < num_classes_; ++c)
    if (class_unit_[c] == unit) out.push_back(c);
  return out;
}

Topology build_topology(TopoKind kind, const UnitInventory& inventory) {
  Topology topo;
  topo.kind_ = kind;
  const int n_units = inventory.total_units();
  if (kind == TopoKind::kCtc && !inventory.has_blank())
    throw MissingSpecialUnitError("blank (CTC topology)");
  if (kind != TopoKind::kCtc && inventory.has_blank())
    throw KwsError("blank unit is CTC-only; HMM kinds model blanks as classes");

  switch (kind) {
    case TopoKind::kHmm5: {
      topo.num_classes_ = 3 * n_units;
      topo.class_unit_.resize(topo.num_classes_);
      topo.class_identity_.resize(topo.num_classes_);
      topo.class_is_blank_.assign(topo.num_classes_, 0);
      for (int u = 0; u < n_units; ++u) {
        for (int k = 0; k < 3; ++k) {
          topo.class_unit_[3 * u + k] = u;
          topo.class_identity_[3 * u + k] = u;
        }
        UnitTemplate t;
        t.states.push_back({-1, {{1, 0.0}}});
        t.states.push_back({3 * u, {{1, kLogHalf}, {2, kLogHalf}}});
        t.states.push_back({3 * u + 1, {{2, kLogHalf}, {3, kLogHalf}}});
        t.states.push_back({3 * u + 2, {{3, kLogHalf}, {-1, kLogHalf}}});
        topo.templates_.push_back(std::move(t));
      }
      break;
    }
    case TopoKind::kCtc: {
      topo.num_classes_ = n_units;
      topo.class_unit_.resize(n_units);
      topo.class_identity_.resize(n_units);
      topo.class_is_blank_.assign(n_units, 0);
      topo.blank_unit_ = inventory.blank_id();
      topo.class_is_blank_[topo.blank_unit_] = 1;
      for (int u = 0; u < n_units; ++u) {
        topo.class_unit_[u] = u;
        topo.class_identity_[u] = u;
        UnitTemplate t;
        t.states.push_back({-1, {{1, 0.0}}});
        t.states.push_back({u, {{1, 0.0}, {-1, 0.0}}});
        topo.templates_.push_back(std::move(t));
      }
      break;
    }
    case TopoKind::kHmmPb:
    case TopoKind::kHmmBp:
    case TopoKind::kHmmBpb: {
      topo.num_classes_ = 2 * n_units;
      topo.class_unit_.resize(topo.num_classes_);
      topo.class_identity_.resize(topo.num_classes_);
      topo.class_is_blank_.assign(topo.num_classes_, 0);
      for (int u = 0; u < n_units; ++u) {
        topo.class_unit_[2 * u] = u;
        topo.class_unit_[2 * u + 1] = u;
        topo.class_identity_[2 * u] = u;
        topo.class_identity_[2 * u + 1] = n_units + u;
        topo.class_is_blank_[2 * u + 1] = 1;
        UnitTemplate t;
        if (kind == TopoKind::kHmmPb) {
          // label first, optional unit-dependent blank after
          t.states.push_back({-1, {{1, 0.0}}});
          t.states.push_back(
              {2 * u, {{1, kLogHalf}, {2, kLogQuarter}, {-1, kLogQuarter}}});
          t.states.push_back({2 * u + 1, {{2, kLogHalf}, {-1, kLogHalf}}});
        } else {
          // optional blank first, delaying the label output
          t.states.push_back({-1, {{1, kLogHalf}, {2, kLogHalf}}});
          t.states.push_back({2 * u + 1, {{1, kLogHalf}, {2, kLogHalf}}});
          t.states.push_back({2 * u, {{2, kLogHalf}, {-1, kLogHalf}}});
        }
        topo.templates_.push_back(std::move(t));
      }
      break;
    }
  }
  return topo;
}

namespace {

// Junction-chained template instantiation for the plain HMM kinds.
Lattice compile_hmm_chain(const std::vector<int>& labels,
                          const Topology& topo) {
  Lattice raw;
  int junction = raw.add_state();  // initial
  for (int label : labels) {
    const UnitTemplate& t = topo.unit_template(label);
    std::vector<int> map(t.states.size(), -1);
    map[0] = junction;
    for (size_t j = 1; j < t.states.size(); ++j) map[j] = raw.add_state();
    int next_junction = raw.add_state();
    for (size_t j = 0; j < t.states.size(); ++j) {
      for (const auto& a : t.states[j].arcs) {
        if (a.dst < 0)
          raw.add_arc(map[j], next_junction, kEpsilon, a.logw);
        else
          raw.add_arc(map[j], map[a.dst], t.states[a.dst].out_class, a.logw);
      }
    }
    junction = next_junction;
  }
  raw.set_final(junction, 0.0);
  return eliminate_epsilon(raw);
}

// Blank-augmented construction shared by CTC and HMM_BPB.  Blank slot i sits
// before label i (slot n trails the sequence); identical adjacent labels get
// no direct arc, making the separating blank mandatory.
Lattice compile_blank_chain(const std::vector<int>& labels,
                            const Topology& topo) {
  const bool ctc = topo.kind() == TopoKind::kCtc;
  const int n = static_cast<int>(labels.size());
  auto label_cls = [&](int i) { return ctc ? labels[i] : 2 * labels[i]; };
  std::vector<int> blank_of(n + 1);
  for (int slot = 0; slot <= n; ++slot)
    blank_of[slot] =
        ctc ? topo.blank_unit() : 2 * labels[std::min(slot, n - 1)] + 1;

  const double init_w = ctc ? 0.0 : kLogHalf;
  const double self_w = ctc ? 0.0 : kLogHalf;
  const double blank_next_w = ctc ? 0.0 : kLogHalf;
  const double gap_w = ctc ? 0.0 : kLogQuarter;      // label -> next blank
  const double gap_eq_w = ctc ? 0.0 : kLogHalf;      // mandatory-blank case
  const double skip_w = ctc ? 0.0 : kLogQuarter;     // label -> next label
  const double tail_w = ctc ? 0.0 : kLogQuarter;     // last label -> tail blank
  const double final_label_w = ctc ? 0.0 : kLogQuarter;
  const double final_blank_w = ctc ? 0.0 : kLogHalf;

  Lattice lat;
  lat.frame_synchronous = true;
  lat.add_state();  // initial
  std::vector<int> lab(n), blk(n + 1);
  for (int i = 0; i < n; ++i) lab[i] = lat.add_state();
  for (int i = 0; i <= n; ++i) blk[i] = lat.add_state();

  lat.add_arc(0, blk[0], blank_of[0], init_w);
  lat.add_arc(0, lab[0], label_cls(0), init_w);
  for (int i = 0; i <= n; ++i) {
    lat.add_arc(blk[i], blk[i], blank_of[i], self_w);
    if (i < n) lat.add_arc(blk[i], lab[i], label_cls(i), blank_next_w);
  }
  for (int i = 0; i < n; ++i) {
    lat.add_arc(lab[i], lab[i], label_cls(i), self_w);
    if (i + 1 < n) {
      bool eq = labels[i + 1] == labels[i];
      lat.add_arc(lab[i], blk[i + 1], blank_of[i + 1], eq ? gap_eq_w : gap_w);
      if (!eq) lat.add_arc(lab[i], lab[i + 1], label_cls(i + 1), skip_w);
    } else {
      lat.add_arc(lab[i], blk[n], blank_of[n], tail_w);
      lat.set_final(lab[i], final_label_w);
    }
  }
  lat.set_final(blk[n], final_blank_w);
  return lat;
}

}  // namespace

Lattice compile_sequence_graph(const LabelSequence& labels,
                               const Topology& topology) {
  if (labels.units.empty()) throw KwsError("empty label sequence");
  for (int u : labels.units)
    if (u < 0 || u >= topology.num_units())
      throw UnknownUnitError("label " + std::to_string(u));

  switch (topology.kind()) {
    case TopoKind::kHmm5:
    case TopoKind::kHmmPb:
    case TopoKind::kHmmBp:
      return compile_hmm_chain(labels.units, topology);
    case TopoKind::kCtc:
      for (int u : labels.units)
        if (u == topology.blank_unit())
          throw KwsError("blank in CTC label sequence");
      return compile_blank_chain(labels.units, topology);
    case TopoKind::kHmmBpb:
      return compile_blank_chain(labels.units, topology);
  }
  throw KwsError("bad topology kind");
}

}  // namespace kws
