// kws/common.hpp
//
// Shared numeric helpers and error types used across the toolkit.

#ifndef KWS_COMMON_HPP
#define KWS_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace kws {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool log_is_zero(double x) { return x == kLogZero; }

// log(exp(a) + exp(b)) with max-subtraction so that long chains of
// accumulation neither overflow nor underflow.
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (log_is_zero(a)) return kLogZero;
  double d = b - a;
  if (d < -745.0) return a;  // exp underflows to 0 anyway
  return a + std::log1p(std::exp(d));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs)
    if (x > m) m = x;
  if (log_is_zero(m)) return kLogZero;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

// Base error; every thrown condition in the toolkit derives from this.
class KwsError : public std::runtime_error {
 public:
  explicit KwsError(const std::string& msg) : std::runtime_error(msg) {}
};

class UnknownWordError : public KwsError {
 public:
  explicit UnknownWordError(const std::string& word)
      : KwsError("no pronunciation for word: " + word), word_(word) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

class MissingSpecialUnitError : public KwsError {
 public:
  explicit MissingSpecialUnitError(const std::string& what)
      : KwsError("inventory lacks special unit: " + what) {}
};

class NoPathError : public KwsError {
 public:
  explicit NoPathError(const std::string& what) : KwsError("no path: " + what) {}
};

class TooManyPathsError : public KwsError {
 public:
  explicit TooManyPathsError(const std::string& what)
      : KwsError("path enumeration overflow: " + what) {}
};

class LengthMismatchError : public KwsError {
 public:
  explicit LengthMismatchError(const std::string& what)
      : KwsError("length mismatch: " + what) {}
};

class InfeasibleError : public KwsError {
 public:
  explicit InfeasibleError(const std::string& what)
      : KwsError("infeasible: " + what) {}
};

class EmptyCorpusError : public KwsError {
 public:
  explicit EmptyCorpusError(const std::string& what)
      : KwsError("empty corpus: " + what) {}
};

class UnknownUnitError : public KwsError {
 public:
  explicit UnknownUnitError(const std::string& what)
      : KwsError("unknown unit: " + what) {}
};

class DimensionMismatchError : public KwsError {
 public:
  explicit DimensionMismatchError(const std::string& what)
      : KwsError("dimension mismatch: " + what) {}
};

class EmptyAlignmentError : public KwsError {
 public:
  explicit EmptyAlignmentError(const std::string& what)
      : KwsError("empty alignment: " + what) {}
};

class UncoveredPhoneError : public KwsError {
 public:
  explicit UncoveredPhoneError(const std::string& what)
      : KwsError("phone never aligned in dev set: " + what) {}
};

class EmptyDevError : public KwsError {
 public:
  explicit EmptyDevError(const std::string& what)
      : KwsError("empty dev data: " + what) {}
};

class EmptyScoresError : public KwsError {
 public:
  explicit EmptyScoresError(const std::string& what)
      : KwsError("empty score list: " + what) {}
};

class FormatError : public KwsError {
 public:
  explicit FormatError(const std::string& what) : KwsError("bad format: " + what) {}
};

// Runs fn(0..n-1) on up to `threads` worker threads.  Callers that need
// deterministic output store per-index results and combine them in index
// order afterwards, so the schedule never shows in the numbers.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int tid = 0; tid < workers; ++tid) {
    pool.emplace_back([&, tid]() {
      for (int i = tid; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Deterministic RNG used everywhere a random draw is needed.  The standard
// distributions are implementation-defined, so the draws are spelled out here
// to keep corpora byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // xorshift64* — small, fast, and stable across platforms.
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace kws

#endif  // KWS_COMMON_HPP
