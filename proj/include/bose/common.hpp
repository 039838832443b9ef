#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bose {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument value (non-positive beta, malformed test vector, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Parameter outside the domain where the quantity is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Work would exceed a configured memory or enumeration budget.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Integral or series does not converge for the requested input.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Activity z outside the range where the loop-gas sums converge.
class ActivityError : public Error {
 public:
  using Error::Error;
};

/// Zero-energy mode hit by a covariance without a condensate split.
class PoleError : public Error {
 public:
  using Error::Error;
};

/// Occupation cutoff too small for the requested accuracy.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// Markov chain failed its health checks (acceptance, stability guard).
class ChainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Positions live in at most three dimensions; unused components stay zero.
using Vec = std::array<double, 3>;

/// Compensated (Neumaier) summation.
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  KahanSum& operator+=(double x) {
    add(x);
    return *this;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// ---------------------------------------------------------------------------
// Seeds and random numbers
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed = splitmix(splitmix(parent ^ fnv1a(tag)) + index).
///
/// Every stream in the project (per sample, per batch, per chain, per sweep
/// point) is derived this way, so a run is a pure function of its root seed
/// and never of the thread schedule.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                                 std::uint64_t index) {
  return splitmix64(splitmix64(parent ^ fnv1a(tag)) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<long>(mean)(engine_);
  }
  double exponential(double mean) {
    return std::exponential_distribution<double>(1.0 / mean)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }
  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

/// Welford accumulator with an associative merge.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  void merge(const RunningStats& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double delta = o.mean_ - mean_;
    mean_ += delta * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }
  [[nodiscard]] std::size_t count() const { return n_; }
  [[nodiscard]] double mean() const { return mean_; }
  [[nodiscard]] double variance() const {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }
  [[nodiscard]] double std_error() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }
  [[nodiscard]] Estimate estimate() const { return {mean(), std_error()}; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Mean with batch-means error bar (n_batches contiguous blocks).
Estimate batch_means(std::span<const double> series, std::size_t n_batches = 20);

/// Integrated autocorrelation time with Sokal's automatic window (c = 6).
double integrated_autocorrelation_time(std::span<const double> series);

/// Least-squares slope and its standard error.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_error = 0.0;
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace bose
