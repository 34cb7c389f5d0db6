// kws/pipeline.hpp
//
// Experiment orchestration: config schema, system preparation, training,
// evaluation, and the filler-weight sweep.  The CLI is a thin wrapper over
// these entry points; the acceptance suite drives them in-process.

#ifndef KWS_PIPELINE_HPP
#define KWS_PIPELINE_HPP

#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "kws/acoustic.hpp"
#include "kws/eval.hpp"
#include "kws/phonelm.hpp"
#include "kws/postproc.hpp"

namespace kws {

struct PipelineConfig {
  std::string data_dir = "data";
  std::string work_dir = "work";
  SynthConfig synth;
  LabelMapMode label_mode = LabelMapMode::kSubword;
  TopoKind topology = TopoKind::kHmmPb;
  // net
  int context = 2;
  int hidden1 = 48;
  int hidden2 = 48;
  int subsample = 3;
  // train
  CriterionConfig criterion;
  bool nu = false;
  double nu_alpha = 2.0;
  double nu_beta = 2.0;
  int lm_order = 2;
  int ce_epochs = 2;
  int seq_epochs = 3;
  double lr_ce = 0.2;
  double lr_seq = 0.05;
  int batch_size = 8;
  // post
  SmoothConfig smooth{5, 10};
  double filler_logw = -1.0;
  double h_node = 0.01;
  double spike = 0.5;
  double t0 = 0.0;
  std::vector<double> sweep_filler{0.0, -0.5, -1.0, -2.0, -4.0};
  // run
  int threads = 1;
  uint64_t seed = 17;
};

// Strict parse: unknown keys are config errors (FormatError).
PipelineConfig config_from_json_text(const std::string& text);
PipelineConfig load_config(const std::string& path);

// Label space shared by all stages.
struct SystemData {
  UnitInventory inventory;
  Topology topology;
  std::vector<std::string> keyword_names;      // phrase strings
  std::vector<LabelSequence> keyword_labels;   // decode-side label sequences
  std::unordered_set<std::string> keyword_set; // keyword words
  std::unordered_set<int> keyword_units;
};

SystemData prepare_system(const Corpus& corpus, const PipelineConfig& cfg);

std::vector<Utterance> build_utterances(const std::vector<CorpusUtt>& utts,
                                        const Corpus& corpus,
                                        const SystemData& sd,
                                        const PipelineConfig& cfg);

struct TrainedSystem {
  SystemData sd;
  ModelFile model;
  NGramModel lm;
  ThresholdTable thresholds;
  ConfusionMatrix confusions;  // CTC systems only
  bool has_confusions = false;
  int skipped_utts = 0;
};

// flat start -> CE epochs -> one Viterbi realign -> criterion epochs,
// then priors, thresholds and (CTC) confusions from the dev split.
TrainedSystem train_system(const Corpus& corpus, const PipelineConfig& cfg);

void save_system(const TrainedSystem& sys, const std::string& dir);
TrainedSystem load_system(const std::string& dir, const PipelineConfig& cfg,
                          const Corpus& corpus);

// Viterbi class alignments, one line per utterance: id<TAB>c0 c1 ...
// Unalignable utterances emit the bare id.
std::string alignments_tsv(const FrameClassifier& net, const Topology& topology,
                           std::vector<Utterance> utts, int threads = 1);

struct EvalOutputs {
  MetricsReport metrics;
  TimingReport timing;
  // per-mode detection CSVs, aligned with metrics.modes
  std::vector<std::string> detections_csv;
};

// Runs every decode mode applicable to the system's topology on the test
// split.  Metrics (and detection CSVs) are deterministic; timing is not.
EvalOutputs run_eval(const Corpus& corpus, const PipelineConfig& cfg,
                     const TrainedSystem& sys);

// kwfiller decode across the filler-weight grid: csv filler_logw,detections,eer.
std::string run_sweep(const Corpus& corpus, const PipelineConfig& cfg,
                      const TrainedSystem& sys);

}  // namespace kws

#endif  // KWS_PIPELINE_HPP
