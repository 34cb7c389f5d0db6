// kws/lattice.hpp
//
// Scoring lattices and the log-domain inference kernels: forward-backward,
// Viterbi, and an exhaustive path enumerator used as a test oracle.

#ifndef KWS_LATTICE_HPP
#define KWS_LATTICE_HPP

#include <string>
#include <utility>
#include <vector>

#include "kws/common.hpp"

namespace kws {

// Per-frame per-unit values.  The semantics tag says how to read them; log
// and linear domains both occur (occupancies are linear).
enum class ScoreSemantics {
  kLogPosterior,
  kLogPseudoLikelihood,
  kLinearPosterior,
  kFeatures,
  kOccupancy,
  kGradient
};

struct ScoreMatrix {
  int num_frames = 0;
  int num_units = 0;
  std::vector<double> values;  // row-major, num_frames x num_units
  ScoreSemantics semantics = ScoreSemantics::kLogPosterior;

  ScoreMatrix() = default;
  ScoreMatrix(int t, int u, double fill = 0.0,
              ScoreSemantics sem = ScoreSemantics::kLogPosterior)
      : num_frames(t),
        num_units(u),
        values(static_cast<size_t>(t) * u, fill),
        semantics(sem) {}

  double& at(int t, int u) { return values[static_cast<size_t>(t) * num_units + u]; }
  double at(int t, int u) const {
    return values[static_cast<size_t>(t) * num_units + u];
  }
  const double* row(int t) const { return &values[static_cast<size_t>(t) * num_units]; }
  double* row(int t) { return &values[static_cast<size_t>(t) * num_units]; }
};

constexpr int kEpsilon = -1;  // non-emitting arc marker
constexpr int kNoAux = -1;

struct Arc {
  int dst = 0;
  int unit = kEpsilon;   // emitted output class, or kEpsilon
  double logw = 0.0;
  int aux = kNoAux;      // owner tag used by decoding graphs
};

// Directed scoring graph.  State 0 is always the initial state.  A state is
// final iff its final weight is > -inf.  Frame-synchronous lattices contain
// no epsilon arcs: every arc consumes exactly one frame.
struct Lattice {
  std::vector<std::vector<Arc>> arcs;   // out-arcs per state
  std::vector<double> final_weight;     // kLogZero marks non-final
  bool frame_synchronous = false;

  int num_states() const { return static_cast<int>(arcs.size()); }
  int add_state() {
    arcs.emplace_back();
    final_weight.push_back(kLogZero);
    return num_states() - 1;
  }
  void add_arc(int src, int dst, int unit, double logw, int aux = kNoAux) {
    arcs[src].push_back(Arc{dst, unit, logw, aux});
  }
  void set_final(int state, double logw) { final_weight[state] = logw; }
  bool is_final(int state) const { return !log_is_zero(final_weight[state]); }
  int num_arcs() const;
  int max_unit() const;  // largest emitted unit id, -1 if none
};

struct FBResult {
  double log_total = kLogZero;
  ScoreMatrix occupancy;  // gamma, linear domain
};

// Sums over all length-T accepting paths of exp(sum of arc weights + frame
// scores).  Occupancy gamma[t][u] is the posterior mass of unit u at frame t.
// No accepting path: log_total = -inf and gamma = 0 (soft signal; callers
// that need a hard failure raise NoPath themselves).
FBResult forward_backward(const Lattice& lattice, const ScoreMatrix& scores,
                          int num_frames);

// Best length-T accepting path; returns emitted units per frame.  Ties break
// toward the lowest (state, arc index) pair, so output is deterministic.
struct ViterbiResult {
  std::vector<int> units;       // length T
  std::vector<int> arc_aux;     // aux tag of the arc taken at each frame
  double log_score = kLogZero;
};
ViterbiResult viterbi(const Lattice& lattice, const ScoreMatrix& scores,
                      int num_frames);

// Exhaustive enumeration of accepting length-T paths (unit string, total arc
// log-weight including the final weight).  Guarded: throws TooManyPaths past
// one million paths.
std::vector<std::pair<std::vector<int>, double>> enumerate_paths(
    const Lattice& lattice, int num_frames);

// Replaces epsilon arcs by composing them with the emitting arcs and final
// weights they lead to.  Input epsilon structure must be acyclic.
Lattice eliminate_epsilon(const Lattice& lattice);

// Drops states not reachable from the initial state or not co-reachable to a
// final state.  State 0 is kept even when the language is empty.
Lattice trim(const Lattice& lattice);

// Debug dump: arc lines `src dst unit logw`; each final state is listed as
// `src -inf <final logw>`.
std::string dump_lattice(const Lattice& lattice);
Lattice parse_lattice(const std::string& text);

// ScoreMatrix binary form: magic "SDKF", little-endian u32 frame and unit
// counts, then T*U little-endian float32 values row-major.
void write_score_matrix(const std::string& path, const ScoreMatrix& m);
ScoreMatrix read_score_matrix(const std::string& path);

// CSV alternative with header `t,u0,u1,...`.
std::string score_matrix_to_csv(const ScoreMatrix& m);
ScoreMatrix score_matrix_from_csv(const std::string& text);

}  // namespace kws

#endif  // KWS_LATTICE_HPP
