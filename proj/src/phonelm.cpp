#include "kws/phonelm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace kws {

namespace {
constexpr double kSosLog10 = -99.0;  // placeholder prob for <s>
}

std::vector<int> NGramModel::extend(const std::vector<int>& history,
                                    int w) const {
  std::vector<int> h = history;
  h.push_back(w);
  int keep = order_ - 1;
  if (static_cast<int>(h.size()) > keep)
    h.erase(h.begin(), h.end() - keep);
  return h;
}

double NGramModel::cond_log10(int w, const std::vector<int>& history) const {
  std::vector<int> h = history;
  int keep = order_ - 1;
  if (static_cast<int>(h.size()) > keep)
    h.erase(h.begin(), h.end() - keep);

  double bow_acc = 0.0;
  while (true) {
    std::vector<int> gram = h;
    gram.push_back(w);
    const auto& table = grams_[h.size()];
    auto it = table.find(gram);
    if (it != table.end()) return bow_acc + it->second.log10_prob;
    if (h.empty())
      throw UnknownUnitError("token " + std::to_string(w) + " not in model");
    // charge the history's backoff weight, then shorten it
    const auto& ctx_table = grams_[h.size() - 1];
    auto ctx = ctx_table.find(h);
    if (ctx != ctx_table.end() && ctx->second.has_bow)
      bow_acc += ctx->second.log10_bow;
    h.erase(h.begin());
  }
}

double NGramModel::cond_log(int w, const std::vector<int>& history) const {
  return cond_log10(w, history) * M_LN10;
}

int NGramModel::raw_count(const std::vector<int>& gram) const {
  auto it = counts_.find(gram);
  return it == counts_.end() ? 0 : it->second;
}

double NGramModel::ml_unigram(int unit) const {
  double total = 0.0;
  for (int u = 0; u < vocab_size(); ++u) total += raw_count({u});
  if (total == 0.0) throw EmptyCorpusError("no unigram events");
  return raw_count({unit}) / total;
}

NGramModel train_ngram(const std::vector<LabelSequence>& transcripts, int order,
                       std::vector<std::string> vocab_names) {
  if (order < 1 || order > 3) throw KwsError("ngram order must be 1..3");
  if (transcripts.empty()) throw EmptyCorpusError("no transcripts");

  NGramModel m;
  m.order_ = order;
  m.names_ = std::move(vocab_names);
  m.grams_.resize(order);
  const int V = m.vocab_size();
  const int sos = m.sos();
  const int eos = m.eos();

  auto& counts = m.counts_;
  for (const auto& seq : transcripts) {
    if (seq.units.empty()) throw EmptyCorpusError("empty transcript");
    std::vector<int> toks;
    toks.push_back(sos);
    for (int u : seq.units) {
      if (u < 0 || u >= V)
        throw UnknownUnitError("transcript unit " + std::to_string(u));
      toks.push_back(u);
    }
    toks.push_back(eos);
    for (size_t i = 1; i < toks.size(); ++i) {
      size_t lo = i >= static_cast<size_t>(order) ? i - (order - 1) : 0;
      for (size_t start = lo; start <= i; ++start) {
        std::vector<int> gram(toks.begin() + start, toks.begin() + i + 1);
        ++counts[gram];
      }
    }
  }

  // context totals and distinct-successor counts per observed history
  std::map<std::vector<int>, int> ctx_total, ctx_types;
  for (const auto& [gram, c] : counts) {
    std::vector<int> h(gram.begin(), gram.end() - 1);
    ctx_total[h] += c;
    ctx_types[h] += 1;
  }

  const double p_base = 1.0 / (V + 1);  // uniform over units and eos

  // interpolated Witten-Bell, computed order by order
  std::map<std::vector<int>, double> prob;  // linear-domain P(gram)
  auto wb = [&](const std::vector<int>& gram) -> double {
    std::vector<int> h(gram.begin(), gram.end() - 1);
    double lower = h.empty()
                       ? p_base
                       : prob.at(std::vector<int>(gram.begin() + 1, gram.end()));
    double c = 0.0;
    auto it = counts.find(gram);
    if (it != counts.end()) c = it->second;
    double ct = 0.0, tt = 0.0;
    auto itc = ctx_total.find(h);
    if (itc != ctx_total.end()) {
      ct = itc->second;
      tt = ctx_types.at(h);
    }
    if (ct == 0.0) return lower;
    return (c + tt * lower) / (ct + tt);
  };

  for (int k = 1; k <= order; ++k) {
    // every seen k-gram, plus all unigrams whether seen or not
    std::set<std::vector<int>> keys;
    for (const auto& [gram, c] : counts)
      if (static_cast<int>(gram.size()) == k) keys.insert(gram);
    if (k == 1) {
      for (int u = 0; u < V; ++u) keys.insert({u});
      keys.insert({eos});
    }
    for (const auto& gram : keys) {
      if (gram.back() == sos) continue;  // never predicted
      prob[gram] = wb(gram);
    }
    for (const auto& gram : keys) {
      if (gram.back() == sos) continue;
      NGramModel::Entry e;
      e.log10_prob = std::log10(prob.at(gram));
      m.grams_[k - 1][gram] = e;
    }
  }

  // <s> carries no probability but holds the backoff weight of its context
  NGramModel::Entry sos_entry;
  sos_entry.log10_prob = kSosLog10;
  m.grams_[0][{sos}] = sos_entry;

  // backoff weights for every history listed as a gram of order < n
  for (int k = 1; k < order; ++k) {
    for (auto& [gram, entry] : m.grams_[k - 1]) {
      auto it = ctx_total.find(gram);
      if (it == ctx_total.end()) continue;
      double ct = it->second;
      double tt = ctx_types.at(gram);
      entry.has_bow = true;
      entry.log10_bow = std::log10(tt / (ct + tt));
    }
  }
  return m;
}

double score_sequence(const NGramModel& model, const LabelSequence& seq) {
  std::vector<int> h{model.sos()};
  double total = 0.0;
  for (int u : seq.units) {
    if (u < 0 || u >= model.vocab_size())
      throw UnknownUnitError("unit " + std::to_string(u));
    total += model.cond_log(u, h);
    h = model.extend(h, u);
  }
  total += model.cond_log(model.eos(), h);
  return total;
}

namespace {

std::string format_log10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string NGramModel::to_arpa() const {
  std::ostringstream os;
  os << "\\data\\\n";
  for (int k = 1; k <= order_; ++k)
    os << "ngram " << k << "=" << grams_[k - 1].size() << "\n";
  os << "\n";
  auto token_name = [&](int t) -> std::string {
    if (t == sos()) return "<s>";
    if (t == eos()) return "</s>";
    return names_[t];
  };
  for (int k = 1; k <= order_; ++k) {
    os << "\\" << k << "-grams:\n";
    for (const auto& [gram, e] : grams_[k - 1]) {
      os << format_log10(e.log10_prob) << "\t";
      for (size_t i = 0; i < gram.size(); ++i) {
        if (i) os << " ";
        os << token_name(gram[i]);
      }
      if (e.has_bow) os << "\t" << format_log10(e.log10_bow);
      os << "\n";
    }
    os << "\n";
  }
  os << "\\end\\\n";
  return os.str();
}

NGramModel NGramModel::from_arpa(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  NGramModel m;
  std::vector<size_t> declared;
  // header
  while (std::getline(is, line)) {
    if (line == "\\data\\") break;
  }
  if (line != "\\data\\") throw FormatError("arpa: missing \\data\\");
  while (std::getline(is, line)) {
    if (line.empty()) break;
    int k = 0;
    size_t n = 0;
    if (std::sscanf(line.c_str(), "ngram %d=%zu", &k, &n) != 2)
      throw FormatError("arpa header line: " + line);
    declared.push_back(n);
  }
  m.order_ = static_cast<int>(declared.size());
  if (m.order_ < 1) throw FormatError("arpa: no ngram declarations");
  m.grams_.resize(m.order_);

  // two passes over sections: first collect unigram names in file order to
  // rebuild ids, then fill the tables
  struct RawLine {
    int k;
    double p;
    std::vector<std::string> toks;
    bool has_bow;
    double bow;
  };
  std::vector<RawLine> raw;
  int cur_k = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line == "\\end\\") break;
    if (line.size() > 1 && line[0] == '\\') {
      int k = 0;
      if (std::sscanf(line.c_str(), "\\%d-grams:", &k) != 1)
        throw FormatError("arpa section: " + line);
      cur_k = k;
      continue;
    }
    if (cur_k < 1 || cur_k > m.order_) throw FormatError("arpa stray line: " + line);
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(ls, f, '\t')) fields.push_back(f);
    if (fields.size() < 2 || fields.size() > 3)
      throw FormatError("arpa line: " + line);
    RawLine r;
    r.k = cur_k;
    r.p = std::stod(fields[0]);
    r.toks = split_ws(fields[1]);
    if (static_cast<int>(r.toks.size()) != cur_k)
      throw FormatError("arpa gram arity: " + line);
    r.has_bow = fields.size() == 3;
    r.bow = r.has_bow ? std::stod(fields[2]) : 0.0;
    raw.push_back(std::move(r));
  }

  for (const auto& r : raw)
    if (r.k == 1 && r.toks[0] != "<s>" && r.toks[0] != "</s>")
      m.names_.push_back(r.toks[0]);
  std::map<std::string, int> ids;
  for (int i = 0; i < m.vocab_size(); ++i) ids[m.names_[i]] = i;
  ids["<s>"] = m.sos();
  ids["</s>"] = m.eos();

  for (const auto& r : raw) {
    std::vector<int> gram;
    for (const auto& t : r.toks) {
      auto it = ids.find(t);
      if (it == ids.end()) throw FormatError("arpa unknown token: " + t);
      gram.push_back(it->second);
    }
    Entry e;
    e.log10_prob = r.p;
    e.has_bow = r.has_bow;
    e.log10_bow = r.bow;
    m.grams_[r.k - 1][gram] = e;
  }
  for (int k = 1; k <= m.order_; ++k)
    if (m.grams_[k - 1].size() != declared[k - 1])
      throw FormatError("arpa count mismatch in " + std::to_string(k) +
                        "-grams");
  return m;
}

namespace {

// Keys identifying composed denominator states.
struct NodeKey {
  int tag;  // 0 junction/history, 1 label, 2 blank-gap, 3 blank-tail
  std::vector<int> hist;
  int unit;
  bool operator<(const NodeKey& o) const {
    if (tag != o.tag) return tag < o.tag;
    if (hist != o.hist) return hist < o.hist;
    return unit < o.unit;
  }
};

class DenBuilder {
 public:
  DenBuilder(const NGramModel& model, const Topology& topo)
      : model_(model), topo_(topo) {}

  Lattice build() {
    switch (topo_.kind()) {
      case TopoKind::kHmm5:
      case TopoKind::kHmmPb:
      case TopoKind::kHmmBp:
        return build_hmm();
      case TopoKind::kCtc:
        return build_ctc();
      case TopoKind::kHmmBpb:
        return build_bpb();
    }
    throw KwsError("bad topology kind");
  }

 private:
  int node(const NodeKey& key) {
    auto it = nodes_.find(key);
    if (it != nodes_.end()) return it->second;
    int id = lat_.add_state();
    nodes_[key] = id;
    work_.push_back(key);
    return id;
  }

  std::vector<int> start_hist() const { return {model_.sos()}; }

  Lattice build_hmm() {
    node(NodeKey{0, start_hist(), -1});  // becomes state 0, the initial
    while (!work_.empty()) {
      NodeKey key = work_.back();
      work_.pop_back();
      int src = nodes_.at(key);
      lat_.final_weight[src] = model_.cond_log(model_.eos(), key.hist);
      for (int u = 0; u < model_.vocab_size(); ++u) {
        double lm = model_.cond_log(u, key.hist);
        NodeKey next{0, model_.extend(key.hist, u), -1};
        int dst_junction = node(next);
        instantiate(src, dst_junction, u, lm);
      }
    }
    return eliminate_epsilon(lat_);
  }

  // Places template(u) between two junctions, LM weight on the entry arcs.
  void instantiate(int src, int dst, int u, double lm) {
    const UnitTemplate& t = topo_.unit_template(u);
    std::vector<int> map(t.states.size(), -1);
    map[0] = src;
    for (size_t j = 1; j < t.states.size(); ++j) map[j] = lat_.add_state();
    for (size_t j = 0; j < t.states.size(); ++j) {
      double extra = j == 0 ? lm : 0.0;
      for (const auto& a : t.states[j].arcs) {
        if (a.dst < 0)
          lat_.add_arc(map[j], dst, kEpsilon, a.logw);
        else
          lat_.add_arc(map[j], map[a.dst], t.states[a.dst].out_class,
                       a.logw + extra);
      }
    }
  }

  Lattice build_ctc() {
    const int blank = topo_.blank_unit();
    node(NodeKey{0, start_hist(), -1});
    while (!work_.empty()) {
      NodeKey key = work_.back();
      work_.pop_back();
      int src = nodes_.at(key);
      if (key.tag == 0 || key.tag == 1) {
        double eos_w = model_.cond_log(model_.eos(), key.hist);
        lat_.final_weight[src] = eos_w;
        for (int v = 0; v < model_.vocab_size(); ++v) {
          if (key.tag == 1 && v == key.unit) continue;  // repeat needs blank
          double lm = model_.cond_log(v, key.hist);
          int dst = node({1, model_.extend(key.hist, v), v});
          lat_.add_arc(src, dst, v, lm);
        }
        int b = node({2, key.hist, -1});
        lat_.add_arc(src, b, blank, 0.0);
      } else {  // blank gap: any successor label, or finish
        lat_.add_arc(src, src, blank, 0.0);
        lat_.final_weight[src] = model_.cond_log(model_.eos(), key.hist);
        for (int v = 0; v < model_.vocab_size(); ++v) {
          double lm = model_.cond_log(v, key.hist);
          int dst = node({1, model_.extend(key.hist, v), v});
          lat_.add_arc(src, dst, v, lm);
        }
      }
      if (key.tag == 1) lat_.add_arc(src, src, key.unit, 0.0);
    }
    lat_.frame_synchronous = true;
    return trim(lat_);
  }

  Lattice build_bpb() {
    const double lh = std::log(0.5), lq = std::log(0.25);
    node(NodeKey{0, start_hist(), -1});
    while (!work_.empty()) {
      NodeKey key = work_.back();
      work_.pop_back();
      int src = nodes_.at(key);
      switch (key.tag) {
        case 0: {  // initial junction
          lat_.final_weight[src] = model_.cond_log(model_.eos(), key.hist);
          for (int v = 0; v < model_.vocab_size(); ++v) {
            double lm = model_.cond_log(v, key.hist);
            int b = node({2, key.hist, v});
            int l = node({1, model_.extend(key.hist, v), v});
            lat_.add_arc(src, b, 2 * v + 1, lm + lh);
            lat_.add_arc(src, l, 2 * v, lm + lh);
          }
          break;
        }
        case 1: {  // label state of key.unit, history includes it
          int u = key.unit;
          lat_.add_arc(src, src, 2 * u, lh);
          double eos_w = model_.cond_log(model_.eos(), key.hist);
          for (int v = 0; v < model_.vocab_size(); ++v) {
            double lm = model_.cond_log(v, key.hist);
            int b = node({2, key.hist, v});
            if (v == u) {
              lat_.add_arc(src, b, 2 * v + 1, lm + lh);
            } else {
              int l = node({1, model_.extend(key.hist, v), v});
              lat_.add_arc(src, b, 2 * v + 1, lm + lq);
              lat_.add_arc(src, l, 2 * v, lm + lq);
            }
          }
          int bt = node({3, {}, u});
          lat_.add_arc(src, bt, 2 * u + 1, eos_w + lq);
          lat_.final_weight[src] = eos_w + lq;
          break;
        }
        case 2: {  // pre-label blank of key.unit; LM already charged
          int v = key.unit;
          lat_.add_arc(src, src, 2 * v + 1, lh);
          int l = node({1, model_.extend(key.hist, v), v});
          lat_.add_arc(src, l, 2 * v, lh);
          break;
        }
        case 3: {  // trailing blank of key.unit
          int u = key.unit;
          lat_.add_arc(src, src, 2 * u + 1, lh);
          lat_.final_weight[src] = lh;
          break;
        }
      }
    }
    lat_.frame_synchronous = true;
    return trim(lat_);
  }

  const NGramModel& model_;
  const Topology& topo_;
  Lattice lat_;
  std::map<NodeKey, int> nodes_;
  std::vector<NodeKey> work_;
};

}  // namespace

Lattice build_denominator_graph(const NGramModel& model,
                                const Topology& topology) {
  if (model.vocab_size() > topology.num_units())
    throw DimensionMismatchError("LM vocabulary exceeds topology units");
  return DenBuilder(model, topology).build();
}

}  // namespace kws
