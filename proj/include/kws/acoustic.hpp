// kws/acoustic.hpp
//
// Context-splicing feedforward frame classifier, prior estimation,
// pseudo-likelihood conversion, and the training loop.

#ifndef KWS_ACOUSTIC_HPP
#define KWS_ACOUSTIC_HPP

#include <optional>
#include <string>
#include <vector>

#include "kws/criteria.hpp"
#include "kws/lattice.hpp"
#include "kws/phonelm.hpp"
#include "kws/topology.hpp"

namespace kws {

// Features are stored in the same T x D container as scores.
using FeatureMatrix = ScoreMatrix;

struct NetConfig {
  int feat_dim = 10;
  int context = 2;     // splice radius, edge frames replicated
  int hidden1 = 32;
  int hidden2 = 32;
  int num_classes = 1;
  int subsample = 3;   // emit every k-th spliced frame
};

// splice -> affine -> ReLU -> affine -> ReLU -> affine -> log-softmax.
// Parameters are 32-bit floats in one flat block; all accumulation is done
// in doubles.
class FrameClassifier {
 public:
  FrameClassifier() = default;
  FrameClassifier(const NetConfig& cfg, Rng& rng);

  const NetConfig& config() const { return cfg_; }
  int input_dim() const { return cfg_.feat_dim * (2 * cfg_.context + 1); }
  int num_params() const { return static_cast<int>(params_.size()); }
  std::vector<float>& params() { return params_; }
  const std::vector<float>& params() const { return params_; }

  // T x U normalized log-posteriors at the subsampled frame rate.
  ScoreMatrix forward(const FeatureMatrix& features) const;

  // Accumulates d loss / d params into grad (same length as params) given
  // d loss / d log-posteriors.  Returns nothing; caller owns the scaling.
  void backprop(const FeatureMatrix& features, const ScoreMatrix& grad_logpost,
                std::vector<double>& grad) const;

  void apply_update(const std::vector<double>& grad, double scale);

 private:
  void splice(const FeatureMatrix& f, int t, std::vector<double>& x) const;

  NetConfig cfg_;
  std::vector<float> params_;
  // offsets into params_: [W1 b1 W2 b2 W3 b3]
  int o_w1_ = 0, o_b1_ = 0, o_w2_ = 0, o_b2_ = 0, o_w3_ = 0, o_b3_ = 0;
};

struct PriorVector {
  std::vector<double> p;  // linear, sums to 1
};

// Frame frequencies of the alignment classes, floored at 1e-6 and
// renormalized.
PriorVector estimate_priors(const std::vector<std::vector<int>>& alignments,
                            int num_classes);

// log y - log P(u) per entry.
ScoreMatrix pseudo_likelihood(const ScoreMatrix& log_posteriors,
                              const PriorVector& priors);

struct Utterance {
  std::string id;
  FeatureMatrix features;        // original frame rate
  LabelSequence labels;          // class-compilable label sequence
  std::vector<int> alignment;    // class per subsampled frame
  std::vector<int> hypothesis;   // NU hypothesis labels, optional
};

struct TrainOptions {
  CriterionConfig criterion;
  std::optional<NUConfig> nu;
  double learning_rate = 0.1;
  int batch_size = 8;
  int threads = 1;
};

struct EpochResult {
  double mean_frame_loss = 0.0;
  int skipped = 0;  // utterances dropped for infeasible graphs
};

// One deterministic SGD pass in sorted-utterance-id order.  `denominator`
// is required for the LF criteria.
EpochResult train_epoch(FrameClassifier& model, std::vector<Utterance>& corpus,
                        const Topology& topology, const Lattice* denominator,
                        const TrainOptions& opts);

// Uniform segmentation of each utterance's labels over its subsampled
// frames; infeasible utterances get an empty alignment and are counted.
int flat_start_align(FrameClassifier& model, std::vector<Utterance>& corpus,
                     const Topology& topology);

// Viterbi realignment with the current model.  Returns utterances skipped.
int viterbi_align(const FrameClassifier& model, std::vector<Utterance>& corpus,
                  const Topology& topology, int threads = 1);

// Model file: magic KWSM, u32 JSON header length, JSON header, then the
// float32 little-endian parameter blob.
struct ModelFile {
  FrameClassifier net;
  PriorVector priors;
  TopoKind topology = TopoKind::kHmm5;
  std::vector<std::string> unit_names;  // inventory order, specials tagged
  bool has_blank = false, has_wb = false, has_filler = false;
};

void save_model(const std::string& path, const ModelFile& m);
ModelFile load_model(const std::string& path);

UnitInventory inventory_from_model(const ModelFile& m);

}  // namespace kws

#endif  // KWS_ACOUSTIC_HPP
