// kws/topology.hpp
//
// Per-unit hidden-state topologies and compilation of label sequences into
// scoring lattices.

#ifndef KWS_TOPOLOGY_HPP
#define KWS_TOPOLOGY_HPP

#include <string>
#include <vector>

#include "kws/lattice.hpp"
#include "kws/units.hpp"

namespace kws {

enum class TopoKind { kHmm5, kCtc, kHmmPb, kHmmBp, kHmmBpb };

std::string topo_kind_name(TopoKind kind);
TopoKind topo_kind_from_name(const std::string& name);

struct TemplateArc {
  int dst;      // template-local state index, -1 = exit
  double logw;
};

struct TemplateState {
  int out_class;  // class emitted on arrival; -1 for the non-emitting entry
  std::vector<TemplateArc> arcs;
};

// State 0 is the non-emitting entry.  Arcs into a state emit that state's
// class; exit arcs are non-emitting.
struct UnitTemplate {
  std::vector<TemplateState> states;
};

// Output classes per kind over U modeled units:
//   HMM5      3 classes per unit (left/middle/right emitting states)
//   CTC       one class per unit plus the shared blank (class = unit id)
//   PB/BP/BPB label class 2u and a unit-dependent blank class 2u+1
class Topology {
 public:
  TopoKind kind() const { return kind_; }
  int num_units() const { return static_cast<int>(templates_.size()); }
  int num_classes() const { return num_classes_; }
  const UnitTemplate& unit_template(int unit) const;

  // Unit owning each class: used to pool class posteriors per unit.
  int class_unit(int cls) const { return class_unit_[cls]; }
  // Accuracy identity: label classes share their unit's identity, blank
  // classes match only themselves.
  int class_identity(int cls) const { return class_identity_[cls]; }
  bool class_is_blank(int cls) const { return class_is_blank_[cls]; }
  // CTC's shared blank unit id, -1 for HMM kinds.
  int blank_unit() const { return blank_unit_; }
  std::vector<int> unit_classes(int unit) const;

  friend Topology build_topology(TopoKind kind, const UnitInventory& inventory);

 private:
  TopoKind kind_ = TopoKind::kHmm5;
  int num_classes_ = 0;
  std::vector<UnitTemplate> templates_;  // indexed by unit id
  std::vector<int> class_unit_;
  std::vector<int> class_identity_;
  std::vector<char> class_is_blank_;
  int blank_unit_ = -1;  // CTC only
};

// Builds the per-unit templates over every inventory unit.  CTC requires the
// inventory to contain the blank unit.
Topology build_topology(TopoKind kind, const UnitInventory& inventory);

// Compiles a label sequence into a frame-synchronous lattice accepting
// exactly the valid framings of the sequence: state-path expansions for the
// HMM kinds, blank-augmented collapse preimages for CTC, and the CTC
// language over per-unit blanks for HMM_BPB (mandatory separating blank
// between identical labels, optional leading/trailing blanks).
Lattice compile_sequence_graph(const LabelSequence& labels,
                               const Topology& topology);

}  // namespace kws

#endif  // KWS_TOPOLOGY_HPP
