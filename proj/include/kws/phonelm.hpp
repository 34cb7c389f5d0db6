// kws/phonelm.hpp
//
// Witten-Bell smoothed backoff n-gram over sub-word units, ARPA text
// round-trip, and the lattice-free denominator graph (LM composed with the
// unit topology).

#ifndef KWS_PHONELM_HPP
#define KWS_PHONELM_HPP

#include <map>
#include <string>
#include <vector>

#include "kws/topology.hpp"
#include "kws/units.hpp"

namespace kws {

// Backoff table model.  Probabilities and backoff weights are stored as the
// base-10 logs that appear in the ARPA text form, so export after import is
// byte-identical.
class NGramModel {
 public:
  NGramModel() = default;

  int order() const { return order_; }
  int vocab_size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& vocab_names() const { return names_; }

  // Internal token ids used in histories: unit ids, then sos/eos.
  int sos() const { return vocab_size(); }
  int eos() const { return vocab_size() + 1; }

  // Natural-log conditional probability of token w (unit id or eos) given a
  // history of tokens.  Histories longer than order-1 are truncated.
  double cond_log(int w, const std::vector<int>& history) const;

  // Appends w and keeps the trailing order-1 tokens.
  std::vector<int> extend(const std::vector<int>& history, int w) const;

  std::string to_arpa() const;
  static NGramModel from_arpa(const std::string& text);

  // Raw event counts (testing hooks).
  int raw_count(const std::vector<int>& gram) const;
  double ml_unigram(int unit) const;

  friend NGramModel train_ngram(const std::vector<LabelSequence>& transcripts,
                                int order, std::vector<std::string> vocab_names);

 private:
  struct Entry {
    double log10_prob = 0.0;
    double log10_bow = 0.0;
    bool has_bow = false;
  };

  double cond_log10(int w, const std::vector<int>& history) const;

  int order_ = 1;
  std::vector<std::string> names_;               // unit names, id order
  std::vector<std::map<std::vector<int>, Entry>> grams_;  // [k-1]: k-gram table
  std::map<std::vector<int>, int> counts_;       // raw event counts, all orders
};

// Interpolated Witten-Bell estimation.  vocab_names fixes the unit id range;
// every transcript unit must fall inside it.
NGramModel train_ngram(const std::vector<LabelSequence>& transcripts, int order,
                       std::vector<std::string> vocab_names);

// Sum of conditional log-probs plus the end-of-sentence term (natural log).
double score_sequence(const NGramModel& model, const LabelSequence& seq);

// Explicit history-state composition of the LM with the per-unit topology.
// Accepting length-T paths enumerate every unit sequence playable in T
// frames, each weighted by its LM log-prob plus topology transitions.
Lattice build_denominator_graph(const NGramModel& model,
                                const Topology& topology);

}  // namespace kws

#endif  // KWS_PHONELM_HPP
