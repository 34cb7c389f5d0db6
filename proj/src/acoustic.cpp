#include "kws/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <thread>

#include "json.hpp"

namespace kws {

FrameClassifier::FrameClassifier(const NetConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int din = input_dim();
  o_w1_ = 0;
  o_b1_ = o_w1_ + cfg_.hidden1 * din;
  o_w2_ = o_b1_ + cfg_.hidden1;
  o_b2_ = o_w2_ + cfg_.hidden2 * cfg_.hidden1;
  o_w3_ = o_b2_ + cfg_.hidden2;
  o_b3_ = o_w3_ + cfg_.num_classes * cfg_.hidden2;
  params_.assign(o_b3_ + cfg_.num_classes, 0.0f);
  auto init = [&](int off, int rows, int cols) {
    const double scale = std::sqrt(2.0 / cols);
    for (int i = 0; i < rows * cols; ++i)
      params_[off + i] = static_cast<float>(scale * rng.next_normal());
  };
  init(o_w1_, cfg_.hidden1, din);
  init(o_w2_, cfg_.hidden2, cfg_.hidden1);
  init(o_w3_, cfg_.num_classes, cfg_.hidden2);
}

void FrameClassifier::splice(const FeatureMatrix& f, int t,
                             std::vector<double>& x) const {
  const int d = cfg_.feat_dim;
  x.resize(static_cast<size_t>(d) * (2 * cfg_.context + 1));
  size_t k = 0;
  for (int off = -cfg_.context; off <= cfg_.context; ++off) {
    int src = std::clamp(t + off, 0, f.num_frames - 1);
    for (int j = 0; j < d; ++j) x[k++] = f.at(src, j);
  }
}

ScoreMatrix FrameClassifier::forward(const FeatureMatrix& features) const {
  if (features.num_units != cfg_.feat_dim)
    throw DimensionMismatchError("feature dim " +
                                 std::to_string(features.num_units) +
                                 " != " + std::to_string(cfg_.feat_dim));
  const int sub = cfg_.subsample;
  const int out_frames = (features.num_frames + sub - 1) / sub;
  ScoreMatrix out(out_frames, cfg_.num_classes, 0.0,
                  ScoreSemantics::kLogPosterior);
  const int din = input_dim();
  std::vector<double> x, h1(cfg_.hidden1), h2(cfg_.hidden2),
      z3(cfg_.num_classes);
  for (int o = 0; o < out_frames; ++o) {
    splice(features, o * sub, x);
    for (int i = 0; i < cfg_.hidden1; ++i) {
      double acc = params_[o_b1_ + i];
      const float* w = &params_[o_w1_ + i * din];
      for (int j = 0; j < din; ++j) acc += static_cast<double>(w[j]) * x[j];
      h1[i] = acc > 0.0 ? acc : 0.0;
    }
    for (int i = 0; i < cfg_.hidden2; ++i) {
      double acc = params_[o_b2_ + i];
      const float* w = &params_[o_w2_ + i * cfg_.hidden1];
      for (int j = 0; j < cfg_.hidden1; ++j)
        acc += static_cast<double>(w[j]) * h1[j];
      h2[i] = acc > 0.0 ? acc : 0.0;
    }
    double zmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cfg_.num_classes; ++i) {
      double acc = params_[o_b3_ + i];
      const float* w = &params_[o_w3_ + i * cfg_.hidden2];
      for (int j = 0; j < cfg_.hidden2; ++j)
        acc += static_cast<double>(w[j]) * h2[j];
      z3[i] = acc;
      zmax = std::max(zmax, acc);
    }
    double norm = 0.0;
    for (int i = 0; i < cfg_.num_classes; ++i) norm += std::exp(z3[i] - zmax);
    norm = zmax + std::log(norm);
    for (int i = 0; i < cfg_.num_classes; ++i) out.at(o, i) = z3[i] - norm;
  }
  return out;
}

void FrameClassifier::backprop(const FeatureMatrix& features,
                               const ScoreMatrix& grad_logpost,
                               std::vector<double>& grad) const {
  if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
  const int sub = cfg_.subsample;
  const int din = input_dim();
  const int U = cfg_.num_classes;
  std::vector<double> x, z1(cfg_.hidden1), h1(cfg_.hidden1), z2(cfg_.hidden2),
      h2(cfg_.hidden2), z3(U), logp(U), dz3(U), dh2(cfg_.hidden2),
      dz1(cfg_.hidden1);
  for (int o = 0; o < grad_logpost.num_frames; ++o) {
    splice(features, o * sub, x);
    for (int i = 0; i < cfg_.hidden1; ++i) {
      double acc = params_[o_b1_ + i];
      const float* w = &params_[o_w1_ + i * din];
      for (int j = 0; j < din; ++j) acc += static_cast<double>(w[j]) * x[j];
      z1[i] = acc;
      h1[i] = acc > 0.0 ? acc : 0.0;
    }
    for (int i = 0; i < cfg_.hidden2; ++i) {
      double acc = params_[o_b2_ + i];
      const float* w = &params_[o_w2_ + i * cfg_.hidden1];
      for (int j = 0; j < cfg_.hidden1; ++j)
        acc += static_cast<double>(w[j]) * h1[j];
      z2[i] = acc;
      h2[i] = acc > 0.0 ? acc : 0.0;
    }
    double zmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < U; ++i) {
      double acc = params_[o_b3_ + i];
      const float* w = &params_[o_w3_ + i * cfg_.hidden2];
      for (int j = 0; j < cfg_.hidden2; ++j)
        acc += static_cast<double>(w[j]) * h2[j];
      z3[i] = acc;
      zmax = std::max(zmax, acc);
    }
    double norm = 0.0;
    for (int i = 0; i < U; ++i) norm += std::exp(z3[i] - zmax);
    norm = zmax + std::log(norm);
    // d loss / d z = g - softmax(z) * sum(g)
    double gsum = 0.0;
    for (int i = 0; i < U; ++i) gsum += grad_logpost.at(o, i);
    for (int i = 0; i < U; ++i) {
      logp[i] = z3[i] - norm;
      dz3[i] = grad_logpost.at(o, i) - std::exp(logp[i]) * gsum;
    }
    std::fill(dh2.begin(), dh2.end(), 0.0);
    for (int i = 0; i < U; ++i) {
      grad[o_b3_ + i] += dz3[i];
      double* gw = &grad[o_w3_ + i * cfg_.hidden2];
      const float* w = &params_[o_w3_ + i * cfg_.hidden2];
      for (int j = 0; j < cfg_.hidden2; ++j) {
        gw[j] += dz3[i] * h2[j];
        dh2[j] += static_cast<double>(w[j]) * dz3[i];
      }
    }
    std::fill(dz1.begin(), dz1.end(), 0.0);
    for (int i = 0; i < cfg_.hidden2; ++i) {
      if (z2[i] <= 0.0) continue;
      const double d = dh2[i];
      grad[o_b2_ + i] += d;
      double* gw = &grad[o_w2_ + i * cfg_.hidden1];
      const float* w = &params_[o_w2_ + i * cfg_.hidden1];
      for (int j = 0; j < cfg_.hidden1; ++j) {
        gw[j] += d * h1[j];
        dz1[j] += static_cast<double>(w[j]) * d;
      }
    }
    for (int i = 0; i < cfg_.hidden1; ++i) {
      if (z1[i] <= 0.0) continue;
      const double d = dz1[i];
      grad[o_b1_ + i] += d;
      double* gw = &grad[o_w1_ + i * din];
      for (int j = 0; j < din; ++j) gw[j] += d * x[j];
    }
  }
}

void FrameClassifier::apply_update(const std::vector<double>& grad,
                                   double scale) {
  for (size_t i = 0; i < params_.size(); ++i)
    params_[i] =
        static_cast<float>(static_cast<double>(params_[i]) - scale * grad[i]);
}

PriorVector estimate_priors(const std::vector<std::vector<int>>& alignments,
                            int num_classes) {
  PriorVector pv;
  pv.p.assign(num_classes, 0.0);
  long long total = 0;
  for (const auto& a : alignments)
    for (int c : a) {
      if (c < 0 || c >= num_classes)
        throw UnknownUnitError("alignment class " + std::to_string(c));
      pv.p[c] += 1.0;
      ++total;
    }
  if (total == 0) throw EmptyAlignmentError("no aligned frames for priors");
  double sum = 0.0;
  for (double& v : pv.p) {
    v = std::max(v / total, 1e-6);
    sum += v;
  }
  for (double& v : pv.p) v /= sum;
  return pv;
}

ScoreMatrix pseudo_likelihood(const ScoreMatrix& log_posteriors,
                              const PriorVector& priors) {
  if (static_cast<int>(priors.p.size()) != log_posteriors.num_units)
    throw DimensionMismatchError("prior size != classes");
  ScoreMatrix out = log_posteriors;
  out.semantics = ScoreSemantics::kLogPseudoLikelihood;
  for (int t = 0; t < out.num_frames; ++t)
    for (int u = 0; u < out.num_units; ++u)
      out.at(t, u) -= std::log(priors.p[u]);
  return out;
}

namespace {

// Canonical class chain for a uniform segmentation: every unit contributes
// its emitting label classes; blank-separated kinds get a mandatory blank
// between equal adjacent labels.
std::vector<int> flat_class_chain(const std::vector<int>& units,
                                  const Topology& topo) {
  std::vector<int> chain;
  for (size_t i = 0; i < units.size(); ++i) {
    const int u = units[i];
    switch (topo.kind()) {
      case TopoKind::kHmm5:
        chain.push_back(3 * u);
        chain.push_back(3 * u + 1);
        chain.push_back(3 * u + 2);
        break;
      case TopoKind::kHmmPb:
      case TopoKind::kHmmBp:
        chain.push_back(2 * u);
        break;
      case TopoKind::kCtc:
        if (i > 0 && units[i] == units[i - 1])
          chain.push_back(topo.blank_unit());
        chain.push_back(u);
        break;
      case TopoKind::kHmmBpb:
        if (i > 0 && units[i] == units[i - 1]) chain.push_back(2 * u + 1);
        chain.push_back(2 * u);
        break;
    }
  }
  return chain;
}

std::vector<int> sorted_order(const std::vector<Utterance>& corpus) {
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return corpus[a].id < corpus[b].id; });
  return order;
}

struct UttResult {
  double loss = 0.0;
  int frames = 0;
  bool skipped = false;
  std::vector<double> grad;
};

LossGrad criterion_loss(const Utterance& utt, const ScoreMatrix& logpost,
                        const Topology& topo, const Lattice* den,
                        const TrainOptions& opts) {
  const CriterionConfig& cc = opts.criterion;
  const bool wants_ce =
      cc.kind == CriterionKind::kCe ||
      (cc.kind != CriterionKind::kCtc && cc.cew > 0.0);
  const bool wants_seq = cc.kind != CriterionKind::kCe &&
                         !(cc.kind != CriterionKind::kCtc && cc.cew >= 1.0);
  LossGrad ce;
  if (wants_ce) ce = ce_loss(logpost, utt.alignment);
  if (!wants_seq) return ce;

  LossGrad seq;
  switch (cc.kind) {
    case CriterionKind::kCtc:
      seq = ctc_loss(logpost, utt.labels, topo);
      break;
    case CriterionKind::kLfMmi: {
      Lattice num = build_numerator_graph(utt.labels, utt.alignment,
                                          cc.tolerance, topo);
      seq = lf_mmi(logpost, num, *den, cc);
      break;
    }
    case CriterionKind::kLfBmmi: {
      Lattice num = build_numerator_graph(utt.labels, utt.alignment,
                                          cc.tolerance, topo);
      seq = lf_bmmi(logpost, num, *den, utt.alignment, cc, topo);
      break;
    }
    case CriterionKind::kLfSmbr:
      seq = lf_smbr(logpost, *den, utt.alignment, cc, topo);
      break;
    default:
      break;
  }
  if (opts.nu.has_value() && cc.kind != CriterionKind::kCtc) {
    const std::vector<int>& hyp =
        utt.hypothesis.empty() ? utt.alignment : utt.hypothesis;
    auto w = nu_weight(utt.alignment, hyp, *opts.nu, topo);
    apply_nu_weights(seq.grad, w);
  }
  if (cc.kind == CriterionKind::kCtc || cc.cew <= 0.0) return seq;
  LossGrad mixed;
  mixed.loss = cc.cew * ce.loss + (1.0 - cc.cew) * seq.loss;
  mixed.grad = ce.grad;
  for (int t = 0; t < mixed.grad.num_frames; ++t)
    for (int u = 0; u < mixed.grad.num_units; ++u)
      mixed.grad.at(t, u) = cc.cew * ce.grad.at(t, u) +
                            (1.0 - cc.cew) * seq.grad.at(t, u);
  return mixed;
}

}  // namespace

EpochResult train_epoch(FrameClassifier& model, std::vector<Utterance>& corpus,
                        const Topology& topology, const Lattice* denominator,
                        const TrainOptions& opts) {
  const bool is_lf = opts.criterion.kind == CriterionKind::kLfMmi ||
                     opts.criterion.kind == CriterionKind::kLfBmmi ||
                     opts.criterion.kind == CriterionKind::kLfSmbr;
  if (is_lf && opts.criterion.cew < 1.0 && denominator == nullptr)
    throw KwsError("LF criterion requires a denominator graph");
  EpochResult res;
  const std::vector<int> order = sorted_order(corpus);
  double total_loss = 0.0;
  long long total_frames = 0;
  for (size_t begin = 0; begin < order.size();
       begin += static_cast<size_t>(opts.batch_size)) {
    const size_t end =
        std::min(order.size(), begin + static_cast<size_t>(opts.batch_size));
    const int n = static_cast<int>(end - begin);
    std::vector<UttResult> results(n);
    parallel_for(n, opts.threads, [&](int i) {
      const Utterance& utt = corpus[order[begin + i]];
      UttResult& r = results[i];
      if (utt.alignment.empty() &&
          opts.criterion.kind != CriterionKind::kCtc) {
        r.skipped = true;
        return;
      }
      ScoreMatrix logpost = model.forward(utt.features);
      if (!utt.alignment.empty() &&
          static_cast<int>(utt.alignment.size()) != logpost.num_frames) {
        r.skipped = true;
        return;
      }
      try {
        LossGrad lg = criterion_loss(utt, logpost, topology, denominator, opts);
        r.loss = lg.loss;
        r.frames = logpost.num_frames;
        model.backprop(utt.features, lg.grad, r.grad);
      } catch (const InfeasibleError&) {
        r.skipped = true;
      } catch (const NoPathError&) {
        r.skipped = true;
      }
    });
    std::vector<double> batch_grad(model.num_params(), 0.0);
    long long batch_frames = 0;
    for (const UttResult& r : results) {
      if (r.skipped) {
        ++res.skipped;
        continue;
      }
      total_loss += r.loss;
      batch_frames += r.frames;
      for (size_t k = 0; k < batch_grad.size(); ++k) batch_grad[k] += r.grad[k];
    }
    total_frames += batch_frames;
    if (batch_frames > 0)
      model.apply_update(batch_grad, opts.learning_rate / batch_frames);
  }
  res.mean_frame_loss = total_frames > 0 ? total_loss / total_frames : 0.0;
  return res;
}

int flat_start_align(FrameClassifier& model, std::vector<Utterance>& corpus,
                     const Topology& topology) {
  int skipped = 0;
  const int sub = model.config().subsample;
  for (Utterance& utt : corpus) {
    const int frames = (utt.features.num_frames + sub - 1) / sub;
    std::vector<int> chain = flat_class_chain(utt.labels.units, topology);
    const int n = static_cast<int>(chain.size());
    if (n == 0 || frames < n) {
      utt.alignment.clear();
      ++skipped;
      continue;
    }
    utt.alignment.clear();
    utt.alignment.reserve(frames);
    const int base = frames / n, rem = frames % n;
    for (int i = 0; i < n; ++i) {
      const int len = base + (i < rem ? 1 : 0);
      for (int k = 0; k < len; ++k) utt.alignment.push_back(chain[i]);
    }
  }
  return skipped;
}

int viterbi_align(const FrameClassifier& model, std::vector<Utterance>& corpus,
                  const Topology& topology, int threads) {
  std::vector<int> skipped(corpus.size(), 0);
  parallel_for(static_cast<int>(corpus.size()), threads, [&](int i) {
    Utterance& utt = corpus[i];
    try {
      ScoreMatrix logpost = model.forward(utt.features);
      Lattice graph = compile_sequence_graph(utt.labels, topology);
      ViterbiResult vr = viterbi(graph, logpost, logpost.num_frames);
      utt.alignment = vr.units;
    } catch (const NoPathError&) {
      skipped[i] = 1;
    }
  });
  return std::accumulate(skipped.begin(), skipped.end(), 0);
}

void save_model(const std::string& path, const ModelFile& m) {
  nlohmann::json h;
  const NetConfig& c = m.net.config();
  h["feat_dim"] = c.feat_dim;
  h["context"] = c.context;
  h["hidden1"] = c.hidden1;
  h["hidden2"] = c.hidden2;
  h["num_classes"] = c.num_classes;
  h["subsample"] = c.subsample;
  h["topology"] = topo_kind_name(m.topology);
  h["unit_names"] = m.unit_names;
  h["has_blank"] = m.has_blank;
  h["has_wb"] = m.has_wb;
  h["has_filler"] = m.has_filler;
  h["priors"] = m.priors.p;
  const std::string header = h.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write("KWSM", 4);
  const uint32_t hlen = static_cast<uint32_t>(header.size());
  unsigned char b[4] = {static_cast<unsigned char>(hlen & 0xff),
                        static_cast<unsigned char>((hlen >> 8) & 0xff),
                        static_cast<unsigned char>((hlen >> 16) & 0xff),
                        static_cast<unsigned char>((hlen >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (float v : m.net.params()) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    unsigned char fb[4] = {static_cast<unsigned char>(bits & 0xff),
                           static_cast<unsigned char>((bits >> 8) & 0xff),
                           static_cast<unsigned char>((bits >> 16) & 0xff),
                           static_cast<unsigned char>((bits >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(fb), 4);
  }
  if (!out) throw FormatError("short write on " + path);
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "KWSM")
    throw FormatError("bad model magic in " + path);
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("truncated model header in " + path);
  const uint32_t hlen = static_cast<uint32_t>(b[0]) |
                        (static_cast<uint32_t>(b[1]) << 8) |
                        (static_cast<uint32_t>(b[2]) << 16) |
                        (static_cast<uint32_t>(b[3]) << 24);
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw FormatError("truncated model header in " + path);
  nlohmann::json h = nlohmann::json::parse(header);
  NetConfig c;
  c.feat_dim = h.at("feat_dim").get<int>();
  c.context = h.at("context").get<int>();
  c.hidden1 = h.at("hidden1").get<int>();
  c.hidden2 = h.at("hidden2").get<int>();
  c.num_classes = h.at("num_classes").get<int>();
  c.subsample = h.at("subsample").get<int>();
  ModelFile m;
  Rng rng(1);
  m.net = FrameClassifier(c, rng);
  m.topology = topo_kind_from_name(h.at("topology").get<std::string>());
  m.unit_names = h.at("unit_names").get<std::vector<std::string>>();
  m.has_blank = h.at("has_blank").get<bool>();
  m.has_wb = h.at("has_wb").get<bool>();
  m.has_filler = h.at("has_filler").get<bool>();
  m.priors.p = h.at("priors").get<std::vector<double>>();
  for (float& v : m.net.params()) {
    unsigned char fb[4];
    in.read(reinterpret_cast<char*>(fb), 4);
    if (!in) throw FormatError("truncated parameter blob in " + path);
    uint32_t bits = static_cast<uint32_t>(fb[0]) |
                    (static_cast<uint32_t>(fb[1]) << 8) |
                    (static_cast<uint32_t>(fb[2]) << 16) |
                    (static_cast<uint32_t>(fb[3]) << 24);
    std::memcpy(&v, &bits, 4);
  }
  return m;
}

UnitInventory inventory_from_model(const ModelFile& m) {
  std::vector<std::string> phones;
  for (const std::string& n : m.unit_names)
    if (n != "<blk>" && n != "<wb>" && n != "<fil>") phones.push_back(n);
  return UnitInventory(phones, m.has_blank, m.has_wb, m.has_filler);
}

}  // namespace kws
