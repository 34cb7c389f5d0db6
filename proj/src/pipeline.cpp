// Experiment orchestration over the library primitives.

#include "kws/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

namespace kws {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw FormatError("config section is not an object: " + where);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw FormatError("unknown config key: " + where + it.key());
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError("config key " + where + key + ": " + e.what());
  }
}

void parse_synth(const json& j, SynthConfig& s) {
  check_keys(j, {"num_phones", "feat_dim", "mean_scale", "noise_sigma",
                 "min_duration", "max_duration", "lexicon_size",
                 "min_word_phones", "max_word_phones", "num_keywords",
                 "min_keyword_phones", "max_keyword_phones", "train_utts",
                 "dev_utts", "test_utts", "min_words", "max_words",
                 "positive_fraction", "seed"},
             "synth.");
  maybe_get(j, "num_phones", s.num_phones, "synth.");
  maybe_get(j, "feat_dim", s.feat_dim, "synth.");
  maybe_get(j, "mean_scale", s.mean_scale, "synth.");
  maybe_get(j, "noise_sigma", s.noise_sigma, "synth.");
  maybe_get(j, "min_duration", s.min_duration, "synth.");
  maybe_get(j, "max_duration", s.max_duration, "synth.");
  maybe_get(j, "lexicon_size", s.lexicon_size, "synth.");
  maybe_get(j, "min_word_phones", s.min_word_phones, "synth.");
  maybe_get(j, "max_word_phones", s.max_word_phones, "synth.");
  maybe_get(j, "num_keywords", s.num_keywords, "synth.");
  maybe_get(j, "min_keyword_phones", s.min_keyword_phones, "synth.");
  maybe_get(j, "max_keyword_phones", s.max_keyword_phones, "synth.");
  maybe_get(j, "train_utts", s.train_utts, "synth.");
  maybe_get(j, "dev_utts", s.dev_utts, "synth.");
  maybe_get(j, "test_utts", s.test_utts, "synth.");
  maybe_get(j, "min_words", s.min_words, "synth.");
  maybe_get(j, "max_words", s.max_words, "synth.");
  maybe_get(j, "positive_fraction", s.positive_fraction, "synth.");
  maybe_get(j, "seed", s.seed, "synth.");
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

PipelineConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config JSON: ") + e.what());
  }
  PipelineConfig cfg;
  check_keys(j, {"data_dir", "work_dir", "synth", "label_mode", "topology",
                 "net", "train", "post", "sweep", "threads", "seed"},
             "");
  maybe_get(j, "data_dir", cfg.data_dir, "");
  maybe_get(j, "work_dir", cfg.work_dir, "");
  if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
  if (j.contains("label_mode")) {
    std::string m;
    maybe_get(j, "label_mode", m, "");
    if (m == "subword")
      cfg.label_mode = LabelMapMode::kSubword;
    else if (m == "word")
      cfg.label_mode = LabelMapMode::kWord;
    else
      throw FormatError("label_mode must be subword or word: " + m);
  }
  if (j.contains("topology")) {
    std::string t;
    maybe_get(j, "topology", t, "");
    cfg.topology = topo_kind_from_name(t);
  }
  if (j.contains("net")) {
    const json& n = j.at("net");
    check_keys(n, {"context", "hidden1", "hidden2", "subsample"}, "net.");
    maybe_get(n, "context", cfg.context, "net.");
    maybe_get(n, "hidden1", cfg.hidden1, "net.");
    maybe_get(n, "hidden2", cfg.hidden2, "net.");
    maybe_get(n, "subsample", cfg.subsample, "net.");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, {"criterion", "kappa", "boost", "cew", "tolerance",
                   "state_level_accuracy", "nu", "nu_alpha", "nu_beta",
                   "lm_order", "ce_epochs", "seq_epochs", "lr_ce", "lr_seq",
                   "batch_size"},
               "train.");
    if (t.contains("criterion")) {
      std::string c;
      maybe_get(t, "criterion", c, "train.");
      cfg.criterion.kind = criterion_from_name(c);
    }
    maybe_get(t, "kappa", cfg.criterion.kappa, "train.");
    maybe_get(t, "boost", cfg.criterion.boost, "train.");
    maybe_get(t, "cew", cfg.criterion.cew, "train.");
    maybe_get(t, "tolerance", cfg.criterion.tolerance, "train.");
    maybe_get(t, "state_level_accuracy", cfg.criterion.state_level_accuracy,
              "train.");
    maybe_get(t, "nu", cfg.nu, "train.");
    maybe_get(t, "nu_alpha", cfg.nu_alpha, "train.");
    maybe_get(t, "nu_beta", cfg.nu_beta, "train.");
    maybe_get(t, "lm_order", cfg.lm_order, "train.");
    maybe_get(t, "ce_epochs", cfg.ce_epochs, "train.");
    maybe_get(t, "seq_epochs", cfg.seq_epochs, "train.");
    maybe_get(t, "lr_ce", cfg.lr_ce, "train.");
    maybe_get(t, "lr_seq", cfg.lr_seq, "train.");
    maybe_get(t, "batch_size", cfg.batch_size, "train.");
  }
  if (j.contains("post")) {
    const json& p = j.at("post");
    check_keys(p, {"w_s", "w_m", "filler_logw", "h_node", "spike", "t0"},
               "post.");
    maybe_get(p, "w_s", cfg.smooth.w_s, "post.");
    maybe_get(p, "w_m", cfg.smooth.w_m, "post.");
    maybe_get(p, "filler_logw", cfg.filler_logw, "post.");
    maybe_get(p, "h_node", cfg.h_node, "post.");
    maybe_get(p, "spike", cfg.spike, "post.");
    maybe_get(p, "t0", cfg.t0, "post.");
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, {"filler_logw"}, "sweep.");
    maybe_get(s, "filler_logw", cfg.sweep_filler, "sweep.");
  }
  maybe_get(j, "threads", cfg.threads, "");
  maybe_get(j, "seed", cfg.seed, "");
  if (cfg.threads < 1) throw FormatError("threads must be >= 1");
  cfg.criterion.subsample = cfg.subsample;
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  return config_from_json_text(read_text_file(path));
}

SystemData prepare_system(const Corpus& corpus, const PipelineConfig& cfg) {
  SystemData sd;
  const bool with_blank = cfg.topology == TopoKind::kCtc;
  std::vector<std::vector<std::string>> phrases;
  phrases.reserve(corpus.keywords.size());
  for (const std::string& k : corpus.keywords) phrases.push_back(split_ws(k));

  if (cfg.label_mode == LabelMapMode::kSubword) {
    sd.inventory = UnitInventory(corpus.phones, with_blank, true, false);
  } else {
    // word mode: one modeled unit per distinct keyword word, first-seen order
    std::vector<std::string> units;
    std::unordered_set<std::string> seen;
    for (const auto& ph : phrases)
      for (const std::string& w : ph)
        if (seen.insert(w).second) units.push_back(w);
    sd.inventory = UnitInventory(units, with_blank, false, true);
  }
  sd.topology = build_topology(cfg.topology, sd.inventory);

  for (const auto& ph : phrases)
    for (const std::string& w : ph) sd.keyword_set.insert(w);
  sd.keyword_names = corpus.keywords;
  for (const auto& ph : phrases) {
    LabelSequence ls = apply_label_map(ph, cfg.label_mode, sd.keyword_set,
                                       corpus.lexicon, sd.inventory);
    for (int u : ls.units)
      if (!sd.inventory.has_wb() || u != sd.inventory.wb_id())
        sd.keyword_units.insert(u);
    sd.keyword_labels.push_back(std::move(ls));
  }
  return sd;
}

std::vector<Utterance> build_utterances(const std::vector<CorpusUtt>& utts,
                                        const Corpus& corpus,
                                        const SystemData& sd,
                                        const PipelineConfig& cfg) {
  std::vector<Utterance> out;
  out.reserve(utts.size());
  for (const CorpusUtt& cu : utts) {
    Utterance u;
    u.id = cu.id;
    u.features = cu.features;
    u.labels = apply_label_map(cu.words, cfg.label_mode, sd.keyword_set,
                               corpus.lexicon, sd.inventory);
    out.push_back(std::move(u));
  }
  return out;
}

TrainedSystem train_system(const Corpus& corpus, const PipelineConfig& cfg) {
  if (corpus.train.empty()) throw EmptyCorpusError("train split");
  if (corpus.dev.empty()) throw EmptyDevError("dev split");
  TrainedSystem sys;
  sys.sd = prepare_system(corpus, cfg);
  const SystemData& sd = sys.sd;
  std::vector<Utterance> train = build_utterances(corpus.train, corpus, sd, cfg);

  NetConfig nc;
  nc.feat_dim = train[0].features.num_units;
  nc.context = cfg.context;
  nc.hidden1 = cfg.hidden1;
  nc.hidden2 = cfg.hidden2;
  nc.num_classes = sd.topology.num_classes();
  nc.subsample = cfg.subsample;
  Rng rng(cfg.seed);
  FrameClassifier net(nc, rng);

  // LM over the label units; blank is last in the inventory, so the label
  // ids form a dense vocabulary on their own.
  const int vocab = sd.inventory.total_units() - (sd.inventory.has_blank() ? 1 : 0);
  std::vector<std::string> vocab_names;
  vocab_names.reserve(vocab);
  for (int u = 0; u < vocab; ++u) vocab_names.push_back(sd.inventory.unit_name(u));
  std::vector<LabelSequence> lm_text;
  lm_text.reserve(train.size());
  for (const Utterance& u : train) lm_text.push_back(u.labels);
  sys.lm = train_ngram(lm_text, cfg.lm_order, vocab_names);

  const CriterionKind kind = cfg.criterion.kind;
  const bool lf = kind == CriterionKind::kLfMmi || kind == CriterionKind::kLfBmmi ||
                  kind == CriterionKind::kLfSmbr;
  Lattice den;
  if (lf) den = build_denominator_graph(sys.lm, sd.topology);

  sys.skipped_utts += flat_start_align(net, train, sd.topology);

  TrainOptions ce_opts;
  ce_opts.criterion.kind = CriterionKind::kCe;
  ce_opts.learning_rate = cfg.lr_ce;
  ce_opts.batch_size = cfg.batch_size;
  ce_opts.threads = cfg.threads;
  for (int e = 0; e < cfg.ce_epochs; ++e)
    train_epoch(net, train, sd.topology, nullptr, ce_opts);

  viterbi_align(net, train, sd.topology, cfg.threads);

  TrainOptions seq_opts;
  seq_opts.criterion = cfg.criterion;
  seq_opts.learning_rate = cfg.lr_seq;
  seq_opts.batch_size = cfg.batch_size;
  seq_opts.threads = cfg.threads;
  if (cfg.nu && lf) {
    // one hypothesis pass: best competitor path through the denominator
    parallel_for(static_cast<int>(train.size()), cfg.threads, [&](int i) {
      try {
        ScoreMatrix logpost = net.forward(train[i].features);
        ViterbiResult vr = viterbi(den, logpost, logpost.num_frames);
        train[i].hypothesis = vr.units;
      } catch (const NoPathError&) {
        train[i].hypothesis.clear();
      }
    });
    NUConfig nu;
    nu.alpha = cfg.nu_alpha;
    nu.beta = cfg.nu_beta;
    nu.keyword_units.insert(sd.keyword_units.begin(), sd.keyword_units.end());
    seq_opts.nu = nu;
  }
  for (int e = 0; e < cfg.seq_epochs; ++e) {
    EpochResult r = train_epoch(net, train, sd.topology, lf ? &den : nullptr,
                                seq_opts);
    if (e == cfg.seq_epochs - 1) sys.skipped_utts += r.skipped;
  }

  std::vector<std::vector<int>> aligns;
  for (const Utterance& u : train)
    if (!u.alignment.empty()) aligns.push_back(u.alignment);
  PriorVector priors = estimate_priors(aligns, sd.topology.num_classes());

  sys.model.net = net;
  sys.model.priors = priors;
  sys.model.topology = cfg.topology;
  for (int u = 0; u < sd.inventory.total_units(); ++u)
    sys.model.unit_names.push_back(sd.inventory.unit_name(u));
  sys.model.has_blank = sd.inventory.has_blank();
  sys.model.has_wb = sd.inventory.has_wb();
  sys.model.has_filler = sd.inventory.has_filler();

  // dev-side estimates: thresholds for all systems, confusions for CTC
  std::vector<Utterance> dev = build_utterances(corpus.dev, corpus, sd, cfg);
  viterbi_align(net, dev, sd.topology, cfg.threads);
  std::vector<ScoreMatrix> dev_post(dev.size());
  parallel_for(static_cast<int>(dev.size()), cfg.threads, [&](int i) {
    ScoreMatrix m = net.forward(dev[i].features);
    for (double& v : m.values) v = std::exp(v);
    m.semantics = ScoreSemantics::kLinearPosterior;
    dev_post[i] = std::move(m);
  });
  std::vector<ScoreMatrix> kept_post;
  std::vector<std::vector<int>> kept_align;
  for (size_t i = 0; i < dev.size(); ++i) {
    if (static_cast<int>(dev[i].alignment.size()) == dev_post[i].num_frames &&
        !dev[i].alignment.empty()) {
      kept_post.push_back(dev_post[i]);
      kept_align.push_back(dev[i].alignment);
    }
  }
  if (kept_post.empty()) throw EmptyDevError("no alignable dev utterances");
  sys.thresholds = estimate_thresholds(kept_post, kept_align, sd.keyword_labels,
                                       sd.inventory, sd.topology);
  sys.thresholds.t0 = cfg.t0;

  if (cfg.topology == TopoKind::kCtc) {
    const int wb = sd.inventory.has_wb() ? sd.inventory.wb_id() : -1;
    std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs(dev.size());
    parallel_for(static_cast<int>(dev.size()), cfg.threads, [&](int i) {
      ScoreMatrix logpost = net.forward(dev[i].features);
      PeakLattice pl =
          build_ctc_peak_lattice(logpost, sd.topology, cfg.h_node, cfg.spike);
      std::vector<int> hyp;
      for (const PeakColumn& col : pl.columns) {
        int best = -1;
        double best_p = -1.0;
        for (const auto& [u, p] : col.candidates)
          if (p > best_p) best_p = p, best = u;
        if (best >= 0) hyp.push_back(best);
      }
      pairs[i] = {std::move(hyp), dev[i].labels.units};
    });
    sys.confusions = estimate_confusions(pairs, vocab, wb);
    sys.has_confusions = true;
  }
  return sys;
}

void save_system(const TrainedSystem& sys, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_model(dir + "/model.kwsm", sys.model);
  write_text_file(dir + "/lm.arpa", sys.lm.to_arpa());
  json th;
  th["keywords"] = sys.sd.keyword_names;
  th["per_keyword"] = sys.thresholds.per_keyword;
  th["t0"] = sys.thresholds.t0;
  write_text_file(dir + "/thresholds.json", th.dump(2) + "\n");
  if (sys.has_confusions)
    write_text_file(dir + "/confusions.json",
                    confusions_to_json(sys.confusions, sys.sd.inventory));
}

TrainedSystem load_system(const std::string& dir, const PipelineConfig& cfg,
                          const Corpus& corpus) {
  TrainedSystem sys;
  sys.sd = prepare_system(corpus, cfg);
  sys.model = load_model(dir + "/model.kwsm");
  if (sys.model.topology != cfg.topology)
    throw FormatError("model topology does not match config");
  if (static_cast<int>(sys.model.unit_names.size()) !=
      sys.sd.inventory.total_units())
    throw FormatError("model unit inventory does not match corpus");
  for (int u = 0; u < sys.sd.inventory.total_units(); ++u)
    if (sys.model.unit_names[u] != sys.sd.inventory.unit_name(u))
      throw FormatError("model unit inventory does not match corpus");
  sys.lm = NGramModel::from_arpa(read_text_file(dir + "/lm.arpa"));
  json th;
  try {
    th = json::parse(read_text_file(dir + "/thresholds.json"));
    if (th.at("keywords").get<std::vector<std::string>>() != sys.sd.keyword_names)
      throw FormatError("threshold keywords do not match corpus");
    sys.thresholds.per_keyword =
        th.at("per_keyword").get<std::vector<double>>();
    sys.thresholds.t0 = th.at("t0").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("thresholds.json: ") + e.what());
  }
  if (sys.thresholds.per_keyword.size() != sys.sd.keyword_names.size())
    throw FormatError("threshold count does not match keyword count");
  const std::string conf_path = dir + "/confusions.json";
  if (std::filesystem::exists(conf_path)) {
    sys.confusions =
        confusions_from_json(read_text_file(conf_path), sys.sd.inventory);
    sys.has_confusions = true;
  }
  return sys;
}

std::string alignments_tsv(const FrameClassifier& net, const Topology& topology,
                           std::vector<Utterance> utts, int threads) {
  for (Utterance& u : utts) u.alignment.clear();
  viterbi_align(net, utts, topology, threads);
  std::string out;
  for (const Utterance& u : utts) {
    out += u.id;
    char sep = '\t';
    for (int c : u.alignment) {
      out += sep;
      out += std::to_string(c);
      sep = ' ';
    }
    out += '\n';
  }
  return out;
}

namespace {

bool contains_phrase(const std::vector<std::string>& words,
                     const std::vector<std::string>& phrase) {
  if (phrase.empty() || words.size() < phrase.size()) return false;
  for (size_t i = 0; i + phrase.size() <= words.size(); ++i) {
    bool ok = true;
    for (size_t j = 0; j < phrase.size(); ++j)
      if (words[i + j] != phrase[j]) {
        ok = false;
        break;
      }
    if (ok) return true;
  }
  return false;
}

constexpr double kMissScore = -1e30;  // reject-everything sentinel

}  // namespace

EvalOutputs run_eval(const Corpus& corpus, const PipelineConfig& cfg,
                     const TrainedSystem& sys) {
  if (corpus.test.empty()) throw EmptyCorpusError("test split");
  const SystemData& sd = sys.sd;
  const int K = static_cast<int>(sd.keyword_names.size());
  const int n = static_cast<int>(corpus.test.size());

  // shared forward passes; decode timing never includes them
  std::vector<ScoreMatrix> logpost(n);
  parallel_for(n, cfg.threads, [&](int i) {
    logpost[i] = sys.model.net.forward(corpus.test[i].features);
  });
  double audio_seconds = 0.0;
  for (const CorpusUtt& u : corpus.test)
    audio_seconds += u.features.num_frames * kFrameShiftSeconds;
  const double hours = audio_seconds / 3600.0;

  std::vector<std::vector<std::string>> phrases(K);
  for (int k = 0; k < K; ++k) phrases[k] = split_ws(sd.keyword_names[k]);
  std::vector<std::vector<char>> is_pos(n, std::vector<char>(K, 0));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k)
      is_pos[i][k] = contains_phrase(corpus.test[i].words, phrases[k]);

  EvalOutputs out;
  auto push_mode = [&](const std::string& name,
                       const std::vector<std::vector<double>>& scores,
                       const std::vector<std::pair<std::string, Detection>>& dets,
                       int false_alarms, double seconds) {
    std::vector<double> pos, neg;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < K; ++k)
        (is_pos[i][k] ? pos : neg).push_back(scores[i][k]);
    EerResult er = compute_eer(pos, neg);
    MetricsReport::Mode m;
    m.name = name;
    m.eer = er.eer;
    m.faf = compute_faf(false_alarms, hours);
    m.roc = std::move(er.roc);
    out.metrics.modes.push_back(std::move(m));
    out.timing.modes.push_back({name, measure_rtf(seconds, audio_seconds)});
    out.detections_csv.push_back(detections_to_csv(dets, sd.keyword_names));
  };

  // --- posterior smoothing + confidence ----------------------------------
  {
    std::vector<std::vector<double>> scores(n, std::vector<double>(K, kMissScore));
    std::vector<std::pair<std::string, Detection>> dets;
    int fa = 0;
    auto t_begin = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      ScoreMatrix lin = logpost[i];
      for (double& v : lin.values) v = std::exp(v);
      lin.semantics = ScoreSemantics::kLinearPosterior;
      ScoreMatrix up = unit_posteriors(lin, sd.topology);
      ScoreMatrix sm = smooth_posteriors(up, cfg.smooth);
      for (int k = 0; k < K; ++k) {
        std::vector<double> conf =
            keyword_confidence(sm, sd.keyword_labels[k].units);
        int best_t = 0;
        for (int t = 1; t < static_cast<int>(conf.size()); ++t)
          if (conf[t] > conf[best_t]) best_t = t;
        if (conf.empty()) continue;
        scores[i][k] = conf[best_t];
        if (std::log(conf[best_t]) >=
            std::log(sys.thresholds.per_keyword[k]) + sys.thresholds.t0) {
          Detection d;
          d.keyword = k;
          d.start_frame = std::max(0, best_t - cfg.smooth.w_m + 1);
          d.end_frame = best_t;
          d.score = conf[best_t];
          dets.emplace_back(corpus.test[i].id, d);
          if (!is_pos[i][k]) ++fa;
        }
      }
    }
    auto t_end = std::chrono::steady_clock::now();
    push_mode("smooth", scores, dets, fa,
              std::chrono::duration<double>(t_end - t_begin).count());
  }

  // --- keyword-filler decoding --------------------------------------------
  {
    std::vector<std::vector<double>> scores(n, std::vector<double>(K, kMissScore));
    std::vector<std::pair<std::string, Detection>> dets;
    int fa = 0;
    auto t_begin = std::chrono::steady_clock::now();
    Lattice graph =
        build_kwfiller_graph(sd.keyword_labels, sd.inventory, cfg.filler_logw);
    for (int i = 0; i < n; ++i) {
      ScoreMatrix pl =
          unit_pseudo_likelihood(logpost[i], sys.model.priors, sd.topology);
      std::vector<Detection> utt_dets;
      try {
        utt_dets = kwfiller_decode(graph, pl);
      } catch (const NoPathError&) {
      }
      for (const Detection& d : utt_dets) {
        scores[i][d.keyword] = std::max(scores[i][d.keyword], d.score);
        dets.emplace_back(corpus.test[i].id, d);
        if (!is_pos[i][d.keyword]) ++fa;
      }
    }
    auto t_end = std::chrono::steady_clock::now();
    push_mode("kwfiller", scores, dets, fa,
              std::chrono::duration<double>(t_end - t_begin).count());
  }

  // --- MED over CTC peak lattices ------------------------------------------
  if (sys.has_confusions) {
    const int wb = sd.inventory.has_wb() ? sd.inventory.wb_id() : -1;
    std::vector<std::vector<double>> scores(n, std::vector<double>(K, kMissScore));
    std::vector<std::pair<std::string, Detection>> dets;
    int fa = 0;
    auto t_begin = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      PeakLattice pl = build_ctc_peak_lattice(logpost[i], sd.topology,
                                              cfg.h_node, cfg.spike);
      for (int k = 0; k < K; ++k) {
        const std::vector<int>& units = sd.keyword_labels[k].units;
        for (const MedCandidate& c :
             med_candidates(pl, units, sys.confusions, wb))
          scores[i][k] = std::max(scores[i][k], c.log_score);
        double thr =
            std::log(sys.thresholds.per_keyword[k]) + sys.thresholds.t0;
        for (const Detection& d :
             med_search(pl, units, k, sys.confusions, thr, wb)) {
          dets.emplace_back(corpus.test[i].id, d);
          if (!is_pos[i][k]) ++fa;
        }
      }
    }
    auto t_end = std::chrono::steady_clock::now();
    push_mode("med", scores, dets, fa,
              std::chrono::duration<double>(t_end - t_begin).count());
  }
  return out;
}

std::string run_sweep(const Corpus& corpus, const PipelineConfig& cfg,
                      const TrainedSystem& sys) {
  if (corpus.test.empty()) throw EmptyCorpusError("test split");
  const SystemData& sd = sys.sd;
  const int K = static_cast<int>(sd.keyword_names.size());
  const int n = static_cast<int>(corpus.test.size());

  std::vector<ScoreMatrix> pl(n);
  parallel_for(n, cfg.threads, [&](int i) {
    ScoreMatrix logpost = sys.model.net.forward(corpus.test[i].features);
    pl[i] = unit_pseudo_likelihood(logpost, sys.model.priors, sd.topology);
  });
  std::vector<std::vector<std::string>> phrases(K);
  for (int k = 0; k < K; ++k) phrases[k] = split_ws(sd.keyword_names[k]);

  std::string csv = "filler_logw,detections,eer\n";
  for (double w : cfg.sweep_filler) {
    Lattice graph = build_kwfiller_graph(sd.keyword_labels, sd.inventory, w);
    std::vector<std::vector<Detection>> per_utt(n);
    parallel_for(n, cfg.threads, [&](int i) {
      try {
        per_utt[i] = kwfiller_decode(graph, pl[i]);
      } catch (const NoPathError&) {
      }
    });
    int total = 0;
    std::vector<double> pos, neg;
    for (int i = 0; i < n; ++i) {
      std::vector<double> best(K, kMissScore);
      for (const Detection& d : per_utt[i]) {
        ++total;
        best[d.keyword] = std::max(best[d.keyword], d.score);
      }
      for (int k = 0; k < K; ++k)
        (contains_phrase(corpus.test[i].words, phrases[k]) ? pos : neg)
            .push_back(best[k]);
    }
    EerResult er = compute_eer(pos, neg);
    csv += fmt_g(w) + ',' + std::to_string(total) + ',' + fmt_g(er.eer) + '\n';
  }
  return csv;
}

}  // namespace kws
