#include "kws/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "json.hpp"

namespace kws {

namespace {

std::string phone_name(int i) {
  if (i < 26) return std::string(1, static_cast<char>('a' + i));
  return "p" + std::to_string(i);
}

std::string utt_name(const std::string& split, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%05d", split.c_str(), i);
  return buf;
}

}  // namespace

Corpus gen_corpus(const SynthConfig& cfg) {
  if (cfg.num_phones < 1 || cfg.feat_dim < 1 || cfg.min_duration < 1 ||
      cfg.max_duration < cfg.min_duration || cfg.min_word_phones < 1 ||
      cfg.max_word_phones < cfg.min_word_phones ||
      cfg.lexicon_size < cfg.num_phones || cfg.min_words < 1 ||
      cfg.max_words < cfg.min_words || cfg.num_keywords < 1 ||
      cfg.positive_fraction < 0.0 || cfg.positive_fraction > 1.0)
    throw KwsError("bad synthesis config");
  Rng rng(cfg.seed);
  Corpus corpus;
  for (int p = 0; p < cfg.num_phones; ++p) corpus.phones.push_back(phone_name(p));

  std::vector<std::vector<double>> means(cfg.num_phones);
  for (int p = 0; p < cfg.num_phones; ++p) {
    means[p].resize(cfg.feat_dim);
    for (int d = 0; d < cfg.feat_dim; ++d)
      means[p][d] = cfg.mean_scale * rng.next_normal();
  }

  std::vector<std::string> words;
  std::set<std::vector<int>> seen;
  for (int w = 0; w < cfg.lexicon_size; ++w) {
    std::vector<int> pron;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const int len = rng.next_int(cfg.min_word_phones, cfg.max_word_phones);
      pron.clear();
      for (int i = 0; i < len; ++i)
        pron.push_back(rng.next_int(0, cfg.num_phones - 1));
      if (w < cfg.num_phones) pron[0] = w;  // every phone covered
      if (seen.insert(pron).second) break;
      pron.clear();
    }
    if (pron.empty()) throw KwsError("cannot build a distinct lexicon");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%03d", w);
    corpus.lexicon.add(buf, pron);
    words.emplace_back(buf);
  }

  std::vector<std::string> eligible;
  for (const std::string& w : words) {
    const int len = static_cast<int>(corpus.lexicon.pronunciation(w).size());
    if (len >= cfg.min_keyword_phones && len <= cfg.max_keyword_phones)
      eligible.push_back(w);
  }
  if (static_cast<int>(eligible.size()) < cfg.num_keywords)
    throw KwsError("not enough keyword-length words");
  for (int i = 0; i < cfg.num_keywords; ++i) {
    const int j = rng.next_int(i, static_cast<int>(eligible.size()) - 1);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(cfg.num_keywords);
  std::sort(eligible.begin(), eligible.end());
  corpus.keywords = eligible;

  std::vector<std::string> fillers;
  for (const std::string& w : words)
    if (std::find(corpus.keywords.begin(), corpus.keywords.end(), w) ==
        corpus.keywords.end())
      fillers.push_back(w);
  if (fillers.empty()) throw KwsError("no non-keyword words");

  auto make_split = [&](const std::string& name, int count,
                        std::vector<CorpusUtt>& out) {
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      CorpusUtt utt;
      utt.id = utt_name(name, i);
      const bool positive = rng.next_double() < cfg.positive_fraction;
      const int n_words = rng.next_int(cfg.min_words, cfg.max_words);
      for (int w = 0; w < n_words; ++w)
        utt.words.push_back(
            fillers[rng.next_int(0, static_cast<int>(fillers.size()) - 1)]);
      if (positive) {
        const int pos = rng.next_int(0, n_words - 1);
        const int k = rng.next_int(0, cfg.num_keywords - 1);
        utt.words[pos] = corpus.keywords[k];
      }
      std::vector<double> frames;
      int total = 0;
      for (const std::string& w : utt.words)
        for (int ph : corpus.lexicon.pronunciation(w)) {
          const int dur = rng.next_int(cfg.min_duration, cfg.max_duration);
          for (int f = 0; f < dur; ++f) {
            for (int d = 0; d < cfg.feat_dim; ++d)
              frames.push_back(means[ph][d] +
                               cfg.noise_sigma * rng.next_normal());
            ++total;
          }
        }
      utt.features =
          FeatureMatrix(total, cfg.feat_dim, 0.0, ScoreSemantics::kFeatures);
      utt.features.values = std::move(frames);
      out.push_back(std::move(utt));
    }
  };
  make_split("train", cfg.train_utts, corpus.train);
  make_split("dev", cfg.dev_utts, corpus.dev);
  make_split("test", cfg.test_utts, corpus.test);
  return corpus;
}

namespace {

std::string transcripts_tsv(const std::vector<CorpusUtt>& utts) {
  std::string out;
  for (const CorpusUtt& u : utts) {
    out += u.id;
    out += '\t';
    for (size_t i = 0; i < u.words.size(); ++i) {
      if (i) out += ' ';
      out += u.words[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "feats");
  std::string lex;
  for (const auto& [word, pron] : corpus.lexicon.entries()) {
    lex += word;
    lex += '\t';
    for (size_t i = 0; i < pron.size(); ++i) {
      if (i) lex += ' ';
      lex += corpus.phones.at(pron[i]);
    }
    lex += '\n';
  }
  write_text_file(dir + "/lexicon.tsv", lex);
  std::string kws;
  for (const std::string& k : corpus.keywords) kws += k + '\n';
  write_text_file(dir + "/keywords.txt", kws);
  nlohmann::json meta;
  meta["phones"] = corpus.phones;
  meta["feat_dim"] =
      corpus.train.empty() ? 0 : corpus.train.front().features.num_units;
  meta["frame_shift_ms"] = 10;
  write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
  auto dump_split = [&](const std::string& name,
                        const std::vector<CorpusUtt>& utts) {
    write_text_file(dir + "/" + name + ".tsv", transcripts_tsv(utts));
    for (const CorpusUtt& u : utts)
      write_score_matrix(dir + "/feats/" + u.id + ".feats", u.features);
  };
  dump_split("train", corpus.train);
  dump_split("dev", corpus.dev);
  dump_split("test", corpus.test);
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  nlohmann::json meta = nlohmann::json::parse(read_text_file(dir + "/meta.json"));
  corpus.phones = meta.at("phones").get<std::vector<std::string>>();
  UnitInventory inv(corpus.phones, false, false, false);
  corpus.lexicon = load_lexicon(dir + "/lexicon.tsv", inv);
  for (const auto& phrase : load_keyword_list(dir + "/keywords.txt")) {
    std::string joined;
    for (size_t i = 0; i < phrase.size(); ++i) {
      if (i) joined += ' ';
      joined += phrase[i];
    }
    corpus.keywords.push_back(joined);
  }
  auto load_split = [&](const std::string& name, std::vector<CorpusUtt>& out) {
    for (const TranscriptEntry& e : load_transcripts(dir + "/" + name + ".tsv")) {
      CorpusUtt u;
      u.id = e.utt_id;
      u.words = e.words;
      u.features = read_score_matrix(dir + "/feats/" + u.id + ".feats");
      u.features.semantics = ScoreSemantics::kFeatures;
      out.push_back(std::move(u));
    }
  };
  load_split("train", corpus.train);
  load_split("dev", corpus.dev);
  load_split("test", corpus.test);
  return corpus;
}

EerResult compute_eer(const std::vector<double>& positive_scores,
                      const std::vector<double>& negative_scores) {
  if (positive_scores.empty() || negative_scores.empty())
    throw EmptyScoresError("need both positive and negative scores");
  std::vector<double> pos = positive_scores, neg = negative_scores;
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> thresholds;
  thresholds.reserve(pos.size() + neg.size() + 1);
  thresholds.insert(thresholds.end(), pos.begin(), pos.end());
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);  // reject-all sentinel

  EerResult res;
  res.roc.reserve(thresholds.size());
  for (double th : thresholds) {
    RocPoint pt;
    pt.threshold = th;
    const auto nlo = std::lower_bound(neg.begin(), neg.end(), th);
    pt.far = static_cast<double>(neg.end() - nlo) / neg.size();
    const auto plo = std::lower_bound(pos.begin(), pos.end(), th);
    pt.frr = static_cast<double>(plo - pos.begin()) / pos.size();
    res.roc.push_back(pt);
  }
  res.eer = 0.5;
  for (size_t i = 0; i < res.roc.size(); ++i) {
    const double d = res.roc[i].far - res.roc[i].frr;
    if (d == 0.0) {
      res.eer = res.roc[i].far;
      break;
    }
    if (i + 1 < res.roc.size()) {
      const double dn = res.roc[i + 1].far - res.roc[i + 1].frr;
      if (d > 0.0 && dn < 0.0) {
        const double t = d / (d - dn);
        res.eer = res.roc[i].far + t * (res.roc[i + 1].far - res.roc[i].far);
        break;
      }
    }
  }
  return res;
}

double compute_faf(int detections, double hours) {
  if (hours <= 0.0) throw KwsError("hours must be positive");
  return detections / hours;
}

double measure_rtf(double decode_seconds, double audio_seconds) {
  if (audio_seconds <= 0.0) throw KwsError("audio duration must be positive");
  return decode_seconds / audio_seconds;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string MetricsReport::metrics_csv() const {
  std::string out = "mode,eer,faf\n";
  for (const Mode& m : modes)
    out += m.name + ',' + fmt(m.eer) + ',' + fmt(m.faf) + '\n';
  return out;
}

std::string MetricsReport::roc_csv() const {
  std::string out = "mode,threshold,far,frr\n";
  for (const Mode& m : modes)
    for (const RocPoint& pt : m.roc)
      out += m.name + ',' + fmt(pt.threshold) + ',' + fmt(pt.far) + ',' +
             fmt(pt.frr) + '\n';
  return out;
}

std::string TimingReport::timing_csv() const {
  std::string out = "mode,rtf\n";
  for (const Mode& m : modes) out += m.name + ',' + fmt(m.rtf) + '\n';
  return out;
}

}  // namespace kws
