// Per-unit topologies: class layouts and the framing languages of compiled
// sequence graphs, checked against independent pattern oracles.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "doctest.h"
#include "kws/topology.hpp"

using namespace kws;

namespace {

// does the class segment realize one emission of `u` under `kind`?
bool seg_match(TopoKind kind, int u, const std::vector<int>& seg) {
  if (seg.empty()) return false;
  size_t p = 0;
  auto run = [&](int cls, bool required) {
    size_t before = p;
    while (p < seg.size() && seg[p] == cls) ++p;
    return !required || p > before;
  };
  switch (kind) {
    case TopoKind::kHmm5:
      return run(3 * u, true) && run(3 * u + 1, true) && run(3 * u + 2, true) &&
             p == seg.size();
    case TopoKind::kHmmPb:
      return run(2 * u, true) && run(2 * u + 1, false) && p == seg.size();
    case TopoKind::kHmmBp:
      return run(2 * u + 1, false) && run(2 * u, true) && p == seg.size();
    default:
      return false;
  }
}

// validity by exhaustive segmentation into one segment per label
bool hmm_valid(TopoKind kind, const std::vector<int>& cls,
               const std::vector<int>& labels, size_t pos = 0, size_t li = 0) {
  if (li == labels.size()) return pos == cls.size();
  for (size_t end = pos + 1; end <= cls.size(); ++end) {
    std::vector<int> seg(cls.begin() + pos, cls.begin() + end);
    if (seg_match(kind, labels[li], seg) &&
        hmm_valid(kind, cls, labels, end, li + 1))
      return true;
  }
  return false;
}

bool ctc_valid(const std::vector<int>& cls, const std::vector<int>& labels,
               int blank) {
  std::vector<int> collapsed;
  for (size_t i = 0; i < cls.size(); ++i) {
    if (i > 0 && cls[i] == cls[i - 1]) continue;
    if (cls[i] != blank) collapsed.push_back(cls[i]);
  }
  return collapsed == labels;
}

// optional blank-of-label runs around label runs; mandatory separator
// between equal adjacent labels
bool bpb_valid(const std::vector<int>& cls, const std::vector<int>& labels) {
  size_t p = 0;
  const int n = static_cast<int>(labels.size());
  for (int i = 0; i < n; ++i) {
    const int blank = 2 * labels[i] + 1, label = 2 * labels[i];
    size_t before = p;
    while (p < cls.size() && cls[p] == blank) ++p;
    if (i > 0 && labels[i] == labels[i - 1] && p == before) return false;
    if (p == cls.size() || cls[p] != label) return false;
    while (p < cls.size() && cls[p] == label) ++p;
  }
  const int tail = 2 * labels[n - 1] + 1;
  while (p < cls.size() && cls[p] == tail) ++p;
  return p == cls.size();
}

std::set<std::vector<int>> graph_language(const Lattice& g, int frames) {
  std::set<std::vector<int>> out;
  for (const auto& [units, w] : enumerate_paths(g, frames)) out.insert(units);
  return out;
}

std::set<std::vector<int>> oracle_language(TopoKind kind,
                                           const std::vector<int>& labels,
                                           int num_classes, int frames,
                                           int ctc_blank) {
  std::set<std::vector<int>> out;
  std::vector<int> cls(frames, 0);
  while (true) {
    bool ok = kind == TopoKind::kCtc ? ctc_valid(cls, labels, ctc_blank)
              : kind == TopoKind::kHmmBpb ? bpb_valid(cls, labels)
                                          : hmm_valid(kind, cls, labels);
    if (ok) out.insert(cls);
    int i = frames - 1;
    while (i >= 0 && cls[i] == num_classes - 1) cls[i--] = 0;
    if (i < 0) break;
    ++cls[i];
  }
  return out;
}

std::vector<std::vector<int>> label_sequences(int units, int max_len) {
  std::vector<std::vector<int>> out;
  std::vector<std::vector<int>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& seq : frontier)
      for (int u = 0; u < units; ++u) {
        std::vector<int> s = seq;
        s.push_back(u);
        next.push_back(s);
        out.push_back(std::move(s));
      }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("class layouts per topology kind") {
  UnitInventory inv({"a", "b"}, false, false, false);
  UnitInventory inv_blk({"a", "b"}, true, false, false);

  Topology h5 = build_topology(TopoKind::kHmm5, inv);
  CHECK(h5.num_classes() == 6);
  CHECK(h5.class_unit(4) == 1);
  CHECK(h5.class_identity(4) == 1);
  CHECK(!h5.class_is_blank(4));
  CHECK(h5.blank_unit() == -1);
  CHECK(h5.unit_classes(1) == std::vector<int>{3, 4, 5});

  Topology ctc = build_topology(TopoKind::kCtc, inv_blk);
  CHECK(ctc.num_classes() == 3);
  CHECK(ctc.blank_unit() == 2);
  CHECK(ctc.class_is_blank(2));
  CHECK(ctc.class_unit(1) == 1);

  Topology pb = build_topology(TopoKind::kHmmPb, inv);
  CHECK(pb.num_classes() == 4);
  CHECK(pb.class_unit(3) == 1);
  CHECK(pb.class_is_blank(3));
  CHECK(!pb.class_is_blank(2));
  // blank classes match only themselves in accuracy terms
  CHECK(pb.class_identity(2) == 1);
  CHECK(pb.class_identity(3) == 2 + 1);
}

TEST_CASE("topology validation") {
  UnitInventory inv({"a"}, false, false, false);
  UnitInventory inv_blk({"a"}, true, false, false);
  CHECK_THROWS_AS(build_topology(TopoKind::kCtc, inv), MissingSpecialUnitError);
  CHECK_THROWS_AS(build_topology(TopoKind::kHmm5, inv_blk), KwsError);
  CHECK_THROWS_AS(build_topology(TopoKind::kHmmPb, inv_blk), KwsError);
}

TEST_CASE("compiled graphs accept exactly the framing language") {
  UnitInventory inv({"a", "b"}, false, false, false);
  UnitInventory inv_blk({"a", "b"}, true, false, false);
  for (TopoKind kind : {TopoKind::kHmm5, TopoKind::kCtc, TopoKind::kHmmPb,
                        TopoKind::kHmmBp, TopoKind::kHmmBpb}) {
    Topology topo =
        build_topology(kind, kind == TopoKind::kCtc ? inv_blk : inv);
    for (const auto& labels : label_sequences(2, 3)) {
      LabelSequence seq;
      seq.units = labels;
      Lattice g = compile_sequence_graph(seq, topo);
      for (int frames = 1; frames <= 5; ++frames) {
        auto got = graph_language(g, frames);
        auto want = oracle_language(kind, labels, topo.num_classes(), frames,
                                    topo.blank_unit());
        CHECK(got == want);
      }
    }
  }
}

TEST_CASE("CTC arcs are weightless") {
  UnitInventory inv({"a", "b"}, true, false, false);
  Topology topo = build_topology(TopoKind::kCtc, inv);
  LabelSequence seq;
  seq.units = {0, 1, 0};
  Lattice g = compile_sequence_graph(seq, topo);
  for (const auto& [units, w] : enumerate_paths(g, 5))
    CHECK(w == 0.0);
}

TEST_CASE("CTC collapse example: three framings of 'a' in two frames") {
  // class strings aa, a-, -a; with y(a)=0.5 each frame the total is 0.75
  UnitInventory inv({"a"}, true, false, false);
  Topology topo = build_topology(TopoKind::kCtc, inv);
  LabelSequence seq;
  seq.units = {0};
  Lattice g = compile_sequence_graph(seq, topo);
  auto lang = graph_language(g, 2);
  CHECK(lang.size() == 3);
  CHECK(lang.count({0, 0}) == 1);
  CHECK(lang.count({0, 1}) == 1);
  CHECK(lang.count({1, 0}) == 1);
}

TEST_CASE("HMM kinds keep total path probability at most one") {
  UnitInventory inv({"a", "b"}, false, false, false);
  for (TopoKind kind :
       {TopoKind::kHmm5, TopoKind::kHmmPb, TopoKind::kHmmBp, TopoKind::kHmmBpb}) {
    Topology topo = build_topology(kind, inv);
    LabelSequence seq;
    seq.units = {0, 1};
    Lattice g = compile_sequence_graph(seq, topo);
    double mass = 0.0;
    for (int frames = 1; frames <= 12; ++frames) {
      for (const auto& [units, w] : enumerate_paths(g, frames))
        mass += std::exp(w);
      CHECK(mass <= 1.0 + 1e-12);
    }
    CHECK(mass > 0.5);  // most of the mass shows up by T=12
  }
}

TEST_CASE("BPB accepts the CTC language under blank renaming") {
  UnitInventory inv({"a", "b"}, false, false, false);
  UnitInventory inv_blk({"a", "b"}, true, false, false);
  Topology bpb = build_topology(TopoKind::kHmmBpb, inv);
  Topology ctc = build_topology(TopoKind::kCtc, inv_blk);
  const int kBlank = -2;
  for (const auto& labels : label_sequences(2, 3)) {
    LabelSequence seq;
    seq.units = labels;
    Lattice gb = compile_sequence_graph(seq, bpb);
    Lattice gc = compile_sequence_graph(seq, ctc);
    for (int frames = 1; frames <= 5; ++frames) {
      std::set<std::vector<int>> lb, lc;
      for (const auto& [units, w] : enumerate_paths(gb, frames)) {
        std::vector<int> renamed;
        for (int c : units) renamed.push_back(c % 2 ? kBlank : c / 2);
        lb.insert(renamed);
      }
      for (const auto& [units, w] : enumerate_paths(gc, frames)) {
        std::vector<int> renamed;
        for (int c : units)
          renamed.push_back(c == ctc.blank_unit() ? kBlank : c);
        lc.insert(renamed);
      }
      CHECK(lb == lc);
    }
  }
}

TEST_CASE("compile rejects bad label sequences") {
  UnitInventory inv({"a"}, true, false, false);
  Topology topo = build_topology(TopoKind::kCtc, inv);
  LabelSequence empty;
  CHECK_THROWS_AS(compile_sequence_graph(empty, topo), KwsError);
  LabelSequence with_blank;
  with_blank.units = {0, inv.blank_id()};
  CHECK_THROWS_AS(compile_sequence_graph(with_blank, topo), KwsError);
}

TEST_CASE("topology names round trip") {
  for (TopoKind kind : {TopoKind::kHmm5, TopoKind::kCtc, TopoKind::kHmmPb,
                        TopoKind::kHmmBp, TopoKind::kHmmBpb})
    CHECK(topo_kind_from_name(topo_kind_name(kind)) == kind);
  CHECK_THROWS_AS(topo_kind_from_name("nope"), FormatError);
}
