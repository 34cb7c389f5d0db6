#include "kws/lattice.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <sstream>

namespace kws {

int Lattice::num_arcs() const {
  int n = 0;
  for (const auto& v : arcs) n += static_cast<int>(v.size());
  return n;
}

int Lattice::max_unit() const {
  int m = -1;
  for (const auto& v : arcs)
    for (const auto& a : v) m = std::max(m, a.unit);
  return m;
}

namespace {

void check_emitting(const Lattice& lattice, const ScoreMatrix& scores) {
  for (const auto& v : lattice.arcs)
    for (const auto& a : v) {
      if (a.unit == kEpsilon)
        throw KwsError("frame-synchronous kernel on lattice with epsilon arcs");
      if (a.unit >= scores.num_units)
        throw DimensionMismatchError("arc unit " + std::to_string(a.unit) +
                                     " >= score columns " +
                                     std::to_string(scores.num_units));
    }
}

}  // namespace

FBResult forward_backward(const Lattice& lattice, const ScoreMatrix& scores,
                          int num_frames) {
  check_emitting(lattice, scores);
  const int S = lattice.num_states();
  const int T = num_frames;
  if (T > scores.num_frames)
    throw DimensionMismatchError("T exceeds score rows");

  std::vector<std::vector<double>> alpha(T + 1,
                                         std::vector<double>(S, kLogZero));
  alpha[0][0] = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double as = alpha[t][s];
      if (log_is_zero(as)) continue;
      for (const auto& a : lattice.arcs[s]) {
        double w = as + a.logw + scores.at(t, a.unit);
        alpha[t + 1][a.dst] = log_add(alpha[t + 1][a.dst], w);
      }
    }
  }

  double log_total = kLogZero;
  for (int s = 0; s < S; ++s)
    if (lattice.is_final(s))
      log_total = log_add(log_total, alpha[T][s] + lattice.final_weight[s]);

  FBResult res;
  res.log_total = log_total;
  res.occupancy =
      ScoreMatrix(T, scores.num_units, 0.0, ScoreSemantics::kOccupancy);
  if (log_is_zero(log_total)) return res;

  std::vector<std::vector<double>> beta(T + 1, std::vector<double>(S, kLogZero));
  for (int s = 0; s < S; ++s)
    if (lattice.is_final(s)) beta[T][s] = lattice.final_weight[s];
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double acc = kLogZero;
      for (const auto& a : lattice.arcs[s]) {
        double bd = beta[t + 1][a.dst];
        if (log_is_zero(bd)) continue;
        acc = log_add(acc, a.logw + scores.at(t, a.unit) + bd);
      }
      beta[t][s] = acc;
    }
  }

  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double as = alpha[t][s];
      if (log_is_zero(as)) continue;
      for (const auto& a : lattice.arcs[s]) {
        double bd = beta[t + 1][a.dst];
        if (log_is_zero(bd)) continue;
        double post = as + a.logw + scores.at(t, a.unit) + bd - log_total;
        res.occupancy.at(t, a.unit) += std::exp(post);
      }
    }
  }
  return res;
}

ViterbiResult viterbi(const Lattice& lattice, const ScoreMatrix& scores,
                      int num_frames) {
  check_emitting(lattice, scores);
  const int S = lattice.num_states();
  const int T = num_frames;
  if (T > scores.num_frames)
    throw DimensionMismatchError("T exceeds score rows");

  std::vector<std::vector<double>> delta(T + 1, std::vector<double>(S, kLogZero));
  // back[t][s]: (previous state, arc index) of the best arc into s at time t.
  std::vector<std::vector<std::pair<int, int>>> back(
      T + 1, std::vector<std::pair<int, int>>(S, {-1, -1}));
  delta[0][0] = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double ds = delta[t][s];
      if (log_is_zero(ds)) continue;
      for (int ai = 0; ai < static_cast<int>(lattice.arcs[s].size()); ++ai) {
        const Arc& a = lattice.arcs[s][ai];
        double w = ds + a.logw + scores.at(t, a.unit);
        if (w > delta[t + 1][a.dst]) {
          delta[t + 1][a.dst] = w;
          back[t + 1][a.dst] = {s, ai};
        }
      }
    }
  }

  int best_state = -1;
  double best = kLogZero;
  for (int s = 0; s < S; ++s) {
    if (!lattice.is_final(s)) continue;
    double w = delta[T][s] + lattice.final_weight[s];
    if (log_is_zero(w)) continue;
    if (best_state < 0 || w > best) {
      best = w;
      best_state = s;
    }
  }
  if (best_state < 0) throw NoPathError("viterbi over " + std::to_string(T) + " frames");

  ViterbiResult res;
  res.log_score = best;
  res.units.resize(T);
  res.arc_aux.resize(T);
  int s = best_state;
  for (int t = T; t > 0; --t) {
    auto [ps, ai] = back[t][s];
    const Arc& a = lattice.arcs[ps][ai];
    res.units[t - 1] = a.unit;
    res.arc_aux[t - 1] = a.aux;
    s = ps;
  }
  return res;
}

std::vector<std::pair<std::vector<int>, double>> enumerate_paths(
    const Lattice& lattice, int num_frames) {
  for (const auto& v : lattice.arcs)
    for (const auto& a : v)
      if (a.unit == kEpsilon)
        throw KwsError("enumerate_paths on lattice with epsilon arcs");

  constexpr size_t kGuard = 1000000;
  std::vector<std::pair<std::vector<int>, double>> out;
  std::vector<int> units(num_frames);

  struct Frame {
    int state;
    int arc_index;
    double score;
  };
  std::vector<Frame> stack;
  stack.push_back({0, 0, 0.0});
  while (!stack.empty()) {
    Frame& top = stack.back();
    int depth = static_cast<int>(stack.size()) - 1;
    if (depth == num_frames) {
      if (lattice.is_final(top.state)) {
        if (out.size() >= kGuard)
          throw TooManyPathsError(std::to_string(kGuard) + " paths");
        out.emplace_back(units,
                         top.score + lattice.final_weight[top.state]);
      }
      stack.pop_back();
      continue;
    }
    if (top.arc_index >= static_cast<int>(lattice.arcs[top.state].size())) {
      stack.pop_back();
      continue;
    }
    const Arc& a = lattice.arcs[top.state][top.arc_index++];
    units[depth] = a.unit;
    stack.push_back({a.dst, 0, top.score + a.logw});
  }
  return out;
}

Lattice eliminate_epsilon(const Lattice& lattice) {
  const int S = lattice.num_states();
  // closure[s]: states reachable from s via epsilon arcs only, with the
  // log-summed weight of all epsilon paths.
  std::vector<std::vector<std::pair<int, double>>> closure(S);
  std::vector<int> color(S, 0);  // 0 unvisited, 1 in progress, 2 done

  auto visit = [&](auto&& self, int s) -> void {
    if (color[s] == 2) return;
    if (color[s] == 1) throw KwsError("epsilon cycle in lattice");
    color[s] = 1;
    std::vector<double> acc(S, kLogZero);
    for (const auto& a : lattice.arcs[s]) {
      if (a.unit != kEpsilon) continue;
      self(self, a.dst);
      acc[a.dst] = log_add(acc[a.dst], a.logw);
      for (const auto& [r, w] : closure[a.dst])
        acc[r] = log_add(acc[r], a.logw + w);
    }
    for (int r = 0; r < S; ++r)
      if (!log_is_zero(acc[r])) closure[s].emplace_back(r, acc[r]);
    color[s] = 2;
  };
  for (int s = 0; s < S; ++s) visit(visit, s);

  Lattice out;
  out.frame_synchronous = true;
  for (int s = 0; s < S; ++s) {
    out.add_state();
    out.final_weight[s] = lattice.final_weight[s];
  }
  for (int s = 0; s < S; ++s) {
    for (const auto& a : lattice.arcs[s])
      if (a.unit != kEpsilon) out.add_arc(s, a.dst, a.unit, a.logw, a.aux);
    for (const auto& [r, w] : closure[s]) {
      for (const auto& a : lattice.arcs[r])
        if (a.unit != kEpsilon)
          out.add_arc(s, a.dst, a.unit, w + a.logw, a.aux);
      if (lattice.is_final(r))
        out.final_weight[s] =
            log_add(out.final_weight[s], w + lattice.final_weight[r]);
    }
  }
  return trim(out);
}

Lattice trim(const Lattice& lattice) {
  const int S = lattice.num_states();
  std::vector<char> fwd(S, 0), bwd(S, 0);
  std::deque<int> queue;

  fwd[0] = 1;
  queue.push_back(0);
  while (!queue.empty()) {
    int s = queue.front();
    queue.pop_front();
    for (const auto& a : lattice.arcs[s])
      if (!fwd[a.dst]) {
        fwd[a.dst] = 1;
        queue.push_back(a.dst);
      }
  }

  std::vector<std::vector<int>> preds(S);
  for (int s = 0; s < S; ++s)
    for (const auto& a : lattice.arcs[s]) preds[a.dst].push_back(s);
  for (int s = 0; s < S; ++s)
    if (lattice.is_final(s)) {
      bwd[s] = 1;
      queue.push_back(s);
    }
  while (!queue.empty()) {
    int s = queue.front();
    queue.pop_front();
    for (int p : preds[s])
      if (!bwd[p]) {
        bwd[p] = 1;
        queue.push_back(p);
      }
  }

  std::vector<int> remap(S, -1);
  Lattice out;
  out.frame_synchronous = lattice.frame_synchronous;
  remap[0] = out.add_state();  // initial survives even in an empty language
  for (int s = 1; s < S; ++s)
    if (fwd[s] && bwd[s]) remap[s] = out.add_state();
  for (int s = 0; s < S; ++s) {
    if (remap[s] < 0 || !(fwd[s] && bwd[s])) continue;
    out.final_weight[remap[s]] = lattice.final_weight[s];
    for (const auto& a : lattice.arcs[s])
      if (remap[a.dst] >= 0 && fwd[a.dst] && bwd[a.dst])
        out.add_arc(remap[s], remap[a.dst], a.unit, a.logw, a.aux);
  }
  return out;
}

std::string dump_lattice(const Lattice& lattice) {
  std::ostringstream os;
  char buf[128];
  for (int s = 0; s < lattice.num_states(); ++s)
    for (const auto& a : lattice.arcs[s]) {
      std::snprintf(buf, sizeof(buf), "%d %d %d %.17g\n", s, a.dst, a.unit,
                    a.logw);
      os << buf;
    }
  for (int s = 0; s < lattice.num_states(); ++s)
    if (lattice.is_final(s)) {
      std::snprintf(buf, sizeof(buf), "%d -inf %.17g\n", s,
                    lattice.final_weight[s]);
      os << buf;
    }
  return os.str();
}

Lattice parse_lattice(const std::string& text) {
  Lattice lat;
  std::istringstream is(text);
  std::string line;
  auto ensure_state = [&](int s) {
    while (lat.num_states() <= s) lat.add_state();
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (ls >> t) tok.push_back(t);
    if (tok.size() == 3 && tok[1] == "-inf") {
      int s = std::stoi(tok[0]);
      ensure_state(s);
      lat.final_weight[s] = std::stod(tok[2]);
    } else if (tok.size() == 4) {
      int s = std::stoi(tok[0]);
      int d = std::stoi(tok[1]);
      ensure_state(std::max(s, d));
      lat.add_arc(s, d, std::stoi(tok[2]), std::stod(tok[3]));
    } else {
      throw FormatError("lattice line: " + line);
    }
  }
  return lat;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("truncated score matrix");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

float get_f32(std::istream& is) {
  uint32_t v = get_u32(is);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace

void write_score_matrix(const std::string& path, const ScoreMatrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path);
  os.write("SDKF", 4);
  put_u32(os, static_cast<uint32_t>(m.num_frames));
  put_u32(os, static_cast<uint32_t>(m.num_units));
  for (double v : m.values) put_f32(os, static_cast<float>(v));
}

ScoreMatrix read_score_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SDKF", 4) != 0)
    throw FormatError("bad score matrix magic in " + path);
  uint32_t t = get_u32(is);
  uint32_t u = get_u32(is);
  ScoreMatrix m(static_cast<int>(t), static_cast<int>(u));
  for (double& v : m.values) v = get_f32(is);
  return m;
}

std::string score_matrix_to_csv(const ScoreMatrix& m) {
  std::ostringstream os;
  os << "t";
  for (int u = 0; u < m.num_units; ++u) os << ",u" << u;
  os << "\n";
  char buf[64];
  for (int t = 0; t < m.num_frames; ++t) {
    os << t;
    for (int u = 0; u < m.num_units; ++u) {
      std::snprintf(buf, sizeof(buf), ",%.17g", m.at(t, u));
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

ScoreMatrix score_matrix_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty score csv");
  if (line.rfind("t,", 0) != 0) throw FormatError("score csv header: " + line);
  int units = static_cast<int>(std::count(line.begin(), line.end(), ','));
  std::vector<double> values;
  int frames = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');  // frame index column
    int got = 0;
    while (std::getline(ls, cell, ',')) {
      values.push_back(std::stod(cell));
      ++got;
    }
    if (got != units) throw FormatError("score csv row width");
    ++frames;
  }
  ScoreMatrix m(frames, units);
  m.values = std::move(values);
  return m;
}

}  // namespace kws
