// kws/postproc.hpp
//
// Test-time algorithms: posterior smoothing and confidence, threshold
// estimation, keyword-filler graph decoding, and MED search over CTC peak
// lattices.

#ifndef KWS_POSTPROC_HPP
#define KWS_POSTPROC_HPP

#include <string>
#include <vector>

#include "kws/acoustic.hpp"
#include "kws/lattice.hpp"
#include "kws/topology.hpp"
#include "kws/units.hpp"

namespace kws {

struct SmoothConfig {
  int w_s = 9;   // mean window (frames)
  int w_m = 30;  // trailing max window (frames)
};

// Pass 1: centered arithmetic mean of width w_s, truncated at the edges.
// Pass 2: trailing max over [t - w_m + 1, t].  Linear domain in and out.
ScoreMatrix smooth_posteriors(const ScoreMatrix& scores,
                              const SmoothConfig& cfg);

// Sums a class-level linear posterior matrix into units; blank classes are
// dropped (their mass is confusion span, not unit evidence).
ScoreMatrix unit_posteriors(const ScoreMatrix& class_posteriors,
                            const Topology& topology);

// Unit-level log pseudo-likelihoods: log(sum of the unit's non-blank class
// posteriors) - log(sum of those classes' priors).
ScoreMatrix unit_pseudo_likelihood(const ScoreMatrix& class_log_posteriors,
                                   const PriorVector& priors,
                                   const Topology& topology);

// Per-frame geometric mean of the keyword's unit posteriors, floored at
// 1e-12 before the log.
std::vector<double> keyword_confidence(const ScoreMatrix& smoothed,
                                       const std::vector<int>& keyword_units);

struct ThresholdTable {
  std::vector<double> per_keyword;  // T(k), linear in (0, 1]
  double t0 = 0.0;                  // global log-domain offset
};

// Per-phone arithmetic mean of the aligned unit posterior, then per-keyword
// geometric mean over the keyword's phones.  Every inventory phone must be
// aligned at least once.
ThresholdTable estimate_thresholds(
    const std::vector<ScoreMatrix>& class_posteriors,
    const std::vector<std::vector<int>>& alignments,
    const std::vector<LabelSequence>& keywords, const UnitInventory& inventory,
    const Topology& topology);

struct Detection {
  int keyword = -1;
  int start_frame = 0;
  int end_frame = 0;  // inclusive
  double score = 0.0;
};

// Hub-and-spokes decode graph over unit ids: one linear path per keyword
// (arcs tagged with the keyword index via aux) and a filler loop over the
// phones plus any wb/filler units, each loop arc carrying filler_logw.
Lattice build_kwfiller_graph(const std::vector<LabelSequence>& keywords,
                             const UnitInventory& inventory,
                             double filler_logw);

// Viterbi over unit-level log pseudo-likelihoods; each maximal keyword
// segment of the best path becomes a Detection scored by its mean frame
// log-score.
std::vector<Detection> kwfiller_decode(const Lattice& graph,
                                       const ScoreMatrix& scores);

struct PeakColumn {
  int frame = 0;
  std::vector<std::pair<int, double>> candidates;  // unit id, posterior
};

struct PeakLattice {
  std::vector<PeakColumn> columns;
};

// One column per frame whose non-blank max posterior reaches `spike`;
// candidates are the non-blank units at or above h_node.  wb columns are
// kept, blank is dropped.
PeakLattice build_ctc_peak_lattice(const ScoreMatrix& log_posteriors,
                                   const Topology& topology,
                                   double h_node = 0.01, double spike = 0.5);

struct ConfusionMatrix {
  int num_units = 0;
  double floor = 1e-4;
  std::vector<double> sub;  // num_units x num_units, [ref * U + dec]
  std::vector<double> ins;  // per decoded unit
  std::vector<double> del;  // per reference unit

  double sub_p(int ref, int dec) const { return sub[ref * num_units + dec]; }
  double& sub_p(int ref, int dec) { return sub[ref * num_units + dec]; }
};

// match probability 1, every edit e^-1: -log score = classic edit distance.
ConfusionMatrix unit_cost_confusions(int num_units);

// Relative edit-operation frequencies from unit-cost alignments of decoded
// vs reference unit sequences.  Substitution rows plus deletion renormalize
// to 1 after flooring; insertion is the per-unit fraction of decoded tokens
// that were inserted.
ConfusionMatrix estimate_confusions(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>&
        hyp_ref_pairs,
    int num_units, int wb_unit = -1, double floor = 1e-4);

std::string confusions_to_json(const ConfusionMatrix& cm,
                               const UnitInventory& inventory);
ConfusionMatrix confusions_from_json(const std::string& text,
                                     const UnitInventory& inventory);

// Global alignment log score of hyp against ref under the confusion matrix;
// substitutions between wb and non-wb are structurally forbidden.
double med_align(const std::vector<int>& hyp, const std::vector<int>& ref,
                 const ConfusionMatrix& cm, int wb_unit = -1);

struct MedCandidate {
  int start_col = 0, end_col = 0;  // [start, end) over lattice columns
  double log_score = 0.0;
};

// Local-in-lattice, global-in-keyword DP maximizing the product of edit
// probabilities; one candidate per end column (argmax start).
std::vector<MedCandidate> med_candidates(const PeakLattice& lattice,
                                         const std::vector<int>& keyword,
                                         const ConfusionMatrix& cm,
                                         int wb_unit = -1);

// Candidates at or above log_threshold, greedily pruned to non-overlapping
// spans by descending score.
std::vector<Detection> med_search(const PeakLattice& lattice,
                                  const std::vector<int>& keyword,
                                  int keyword_id, const ConfusionMatrix& cm,
                                  double log_threshold, int wb_unit = -1);

std::string detections_to_csv(
    const std::vector<std::pair<std::string, Detection>>& rows,
    const std::vector<std::string>& keyword_names);

}  // namespace kws

#endif  // KWS_POSTPROC_HPP
