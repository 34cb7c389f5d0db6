// kws/criteria.hpp
//
// Training objectives and their gradients with respect to frame
// log-posteriors.

#ifndef KWS_CRITERIA_HPP
#define KWS_CRITERIA_HPP

#include <set>
#include <string>
#include <vector>

#include "kws/lattice.hpp"
#include "kws/topology.hpp"

namespace kws {

enum class CriterionKind { kCe, kCtc, kLfMmi, kLfBmmi, kLfSmbr };

std::string criterion_name(CriterionKind kind);
CriterionKind criterion_from_name(const std::string& name);

struct CriterionConfig {
  CriterionKind kind = CriterionKind::kLfMmi;
  double kappa = 1.0;      // acoustic scale on frame scores
  double boost = 0.1;      // bMMI error boost
  double cew = 0.7;        // cross-entropy regularization weight
  int tolerance = 2;       // numerator boundary shift, frames
  int subsample = 3;       // frame-rate divisor
  bool state_level_accuracy = false;  // default: phone-identity accuracy
};

struct NUConfig {
  double alpha = 1.0;            // false-rejection boost
  double beta = 1.0;             // false-alarm boost
  std::set<int> keyword_units;   // K
};

struct LossGrad {
  double loss = 0.0;
  ScoreMatrix grad;  // d loss / d log-posterior
};

// loss = -sum_t log y_t(ref_t); gradient -1 at the reference entries.
LossGrad ce_loss(const ScoreMatrix& log_posteriors,
                 const std::vector<int>& alignment);

// Marginal over all valid blank-augmented framings of the label sequence.
LossGrad ctc_loss(const ScoreMatrix& log_posteriors,
                  const LabelSequence& labels, const Topology& topology);

// Framings of the label sequence whose class-segment boundaries deviate at
// most `tolerance` frames from the reference alignment.
Lattice build_numerator_graph(const LabelSequence& labels,
                              const std::vector<int>& reference_alignment,
                              int tolerance, const Topology& topology);

LossGrad lf_mmi(const ScoreMatrix& log_posteriors, const Lattice& numerator,
                const Lattice& denominator, const CriterionConfig& cfg);

// Boosted variant: competitor frame scores gain boost*(1 - acc(t,u)), so
// error frames are up-weighted inside the denominator and an error-free
// denominator reproduces lf_mmi exactly.
LossGrad lf_bmmi(const ScoreMatrix& log_posteriors, const Lattice& numerator,
                 const Lattice& denominator,
                 const std::vector<int>& reference_alignment,
                 const CriterionConfig& cfg, const Topology& topology);

// loss = -(expected frame accuracy of the scaled path posterior).
LossGrad lf_smbr(const ScoreMatrix& log_posteriors, const Lattice& denominator,
                 const std::vector<int>& reference_alignment,
                 const CriterionConfig& cfg, const Topology& topology);

// Frames whose class identity matches the reference (phone granularity, or
// raw classes when state_level is set).
int state_accuracy(const std::vector<int>& path,
                   const std::vector<int>& reference, const Topology& topology,
                   bool state_level = false);

// Per-frame gradient weights of non-uniform training.
std::vector<double> nu_weight(const std::vector<int>& reference,
                              const std::vector<int>& hypothesis,
                              const NUConfig& nu, const Topology& topology);

void apply_nu_weights(ScoreMatrix& grad, const std::vector<double>& weights);

}  // namespace kws

#endif  // KWS_CRITERIA_HPP
