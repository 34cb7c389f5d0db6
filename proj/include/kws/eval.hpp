// kws/eval.hpp
//
// Synthetic corpus generation and detection metrics (EER / FAF / RTF / ROC).

#ifndef KWS_EVAL_HPP
#define KWS_EVAL_HPP

#include <string>
#include <vector>

#include "kws/acoustic.hpp"
#include "kws/units.hpp"

namespace kws {

struct SynthConfig {
  int num_phones = 6;
  int feat_dim = 10;
  double mean_scale = 2.0;   // per-phone Gaussian mean magnitude
  double noise_sigma = 0.4;
  int min_duration = 4;      // frames per phone
  int max_duration = 8;
  int lexicon_size = 30;
  int min_word_phones = 2;
  int max_word_phones = 4;
  int num_keywords = 5;
  int min_keyword_phones = 3;   // selection rule bounds
  int max_keyword_phones = 12;
  int train_utts = 2000;
  int dev_utts = 300;
  int test_utts = 500;
  int min_words = 3;  // words per utterance
  int max_words = 7;
  double positive_fraction = 0.5;
  uint64_t seed = 17;
};

struct CorpusUtt {
  std::string id;
  FeatureMatrix features;          // original frame rate
  std::vector<std::string> words;  // transcript
};

struct Corpus {
  std::vector<std::string> phones;
  Lexicon lexicon;
  std::vector<std::string> keywords;
  std::vector<CorpusUtt> train, dev, test;
};

// Deterministic synthesis: each phone gets a fixed Gaussian mean vector,
// each utterance a random word sequence; positives carry one keyword.
Corpus gen_corpus(const SynthConfig& cfg);

// dir/{lexicon.tsv, keywords.txt, meta.json, {train,dev,test}.tsv,
// feats/<utt>.feats}; all files byte-deterministic.
void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // false alarms / negatives
  double frr = 0.0;  // misses / positives
};

struct EerResult {
  double eer = 0.0;
  std::vector<RocPoint> roc;  // ascending thresholds
};

// Detection rule: score >= threshold.  Sweeps every distinct score plus a
// reject-all sentinel and interpolates the FAR/FRR crossing linearly.
EerResult compute_eer(const std::vector<double>& positive_scores,
                      const std::vector<double>& negative_scores);

double compute_faf(int detections, double hours);
double measure_rtf(double decode_seconds, double audio_seconds);

constexpr double kFrameShiftSeconds = 0.01;

struct MetricsReport {
  struct Mode {
    std::string name;
    double eer = 0.0;
    double faf = 0.0;
    std::vector<RocPoint> roc;
  };
  std::vector<Mode> modes;

  std::string metrics_csv() const;  // mode,eer,faf
  std::string roc_csv() const;      // mode,threshold,far,frr
};

struct TimingReport {
  struct Mode {
    std::string name;
    double rtf = 0.0;
  };
  std::vector<Mode> modes;

  std::string timing_csv() const;  // mode,rtf
};

}  // namespace kws

#endif  // KWS_EVAL_HPP
