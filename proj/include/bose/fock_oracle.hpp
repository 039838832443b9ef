#pragma once

// Brute-force Gibbs sums over a truncated bosonic Fock space with the
// occupation-diagonal interaction
//   H = Σ (λ_k + μ) n_k + V̂(0)(N² - N)/(2|Λ|) + (1/2|Λ|) Σ_{k≠k'} V̂(k-k') n_k n_k'.

#include <cstddef>
#include <span>
#include <vector>

#include "bose/common.hpp"
#include "json.hpp"

namespace bose::fock {

inline constexpr double kDefaultStateBudget = 1e7;

struct TruncatedFock {
  std::vector<double> energies;  // λ_k
  int n_max = 10;

  void validate(double state_budget = kDefaultStateBudget) const;
  [[nodiscard]] double state_count() const;
  [[nodiscard]] std::size_t lowest_mode() const;
};

/// V̂(k - k') on the mode grid. `coupling` is symmetric M×M, row-major; its
/// diagonal is ignored, V̂(0) enters through `vhat0`.
struct DiagonalInteraction {
  double volume = 1.0;
  double vhat0 = 0.0;
  std::vector<double> coupling;

  /// V̂(k - k') = v for every pair (including the diagonal V̂(0) = v).
  static DiagonalInteraction uniform(std::size_t modes, double v, double volume);
  /// V̂ from a central potential's transform evaluated at momentum differences.
  template <class Fn>
  static DiagonalInteraction from_momenta(std::span<const Vec> k, Fn&& vhat, double volume) {
    DiagonalInteraction out;
    out.volume = volume;
    out.vhat0 = vhat(Vec{0.0, 0.0, 0.0});
    const std::size_t m = k.size();
    out.coupling.assign(m * m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        out.coupling[a * m + b] = vhat(Vec{k[a][0] - k[b][0], k[a][1] - k[b][1], k[a][2] - k[b][2]});
      }
    }
    return out;
  }
  void validate(std::size_t modes) const;
};

struct FockOptions {
  double state_budget = kDefaultStateBudget;
  /// Boundary states (some n_k = n_max) may carry at most this relative weight.
  double boundary_tolerance = 1e-12;
  bool allow_truncation = false;
};

struct FockResult {
  double logZ = 0.0;
  std::vector<double> occupations;
  double mean_N = 0.0;
  double var_N = 0.0;
  std::size_t zero_mode = 0;
  std::vector<double> n0_histogram;  // P(n_{zero_mode} = n), n = 0..n_max
  double boundary_weight = 0.0;
};

/// One enumeration producing every observable. `inter` may be null.
FockResult enumerate(const TruncatedFock& fock, double beta, double mu,
                     const DiagonalInteraction* inter, const FockOptions& opt = {});

/// Serial reference of `enumerate` (single pass, no chunking).
FockResult enumerate_serial(const TruncatedFock& fock, double beta, double mu,
                            const DiagonalInteraction* inter, const FockOptions& opt = {});

double exact_log_partition(const TruncatedFock& fock, double beta, double mu,
                           const DiagonalInteraction* inter, const FockOptions& opt = {});
/// Z itself; throws DomainError if it overflows a double.
double exact_partition(const TruncatedFock& fock, double beta, double mu,
                       const DiagonalInteraction* inter, const FockOptions& opt = {});
std::vector<double> exact_occupations(const TruncatedFock& fock, double beta, double mu,
                                      const DiagonalInteraction* inter, const FockOptions& opt = {});
std::vector<double> exact_zero_mode_statistics(const TruncatedFock& fock, double beta, double mu,
                                               const DiagonalInteraction* inter,
                                               const FockOptions& opt = {});

/// μ such that ⟨N⟩ = target, by bisection on the monotone mean particle number.
double solve_mu_for_mean_N(const TruncatedFock& fock, double beta, double target_N,
                           const DiagonalInteraction* inter, const FockOptions& opt = {});

nlohmann::json to_json(const FockResult& r);

}  // namespace bose::fock
