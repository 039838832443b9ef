#pragma once

// Radial pair potentials for the loop gas, with the stability constant B
// (Σ_{i<j} V ≥ -B n) and the integrability radius r₀ carried alongside.

#include <cstdint>
#include <functional>
#include <string>

#include "bose/common.hpp"

namespace bose::loops {

class PairPotential {
 public:
  /// V ≡ 0.
  static PairPotential none();
  /// +∞ for r < a, 0 otherwise.
  static PairPotential hard_core(double a);
  /// v0 for r < a, 0 otherwise (v0 ≥ 0).
  static PairPotential step(double v0, double a);
  /// v0 e^{-r²/2s0²} - v1 e^{-r²/2s1²}. Requires a nonnegative Fourier
  /// transform, v0 s0^d ≥ v1 s1^d with s1 ≥ s0, so B = max(0, V(0)/2).
  static PairPotential gaussian(double v0, double s0, double v1 = 0.0, double s1 = 1.0, int d = 3);

  /// V(r); +∞ inside a hard core.
  [[nodiscard]] double operator()(double r) const;
  /// Same with r² as input (saves a sqrt in the hot loops).
  [[nodiscard]] double of_squared(double r2) const;

  [[nodiscard]] bool is_zero() const { return kind_ == Kind::none; }
  [[nodiscard]] double hard_core_radius() const { return core_; }
  [[nodiscard]] double stability_constant() const { return B_; }
  [[nodiscard]] double integrability_radius() const { return r0_; }
  /// Distance beyond which V is below 1e-300 (or exactly zero).
  [[nodiscard]] double range() const { return range_; }
  [[nodiscard]] const std::string& name() const { return name_; }

  /// Same potential with every energy multiplied by s (hard core unchanged).
  [[nodiscard]] PairPotential scaled(double s) const;

  /// ∫_{r₀}^∞ |V(r)| r^{d-1} dr by quadrature.
  [[nodiscard]] double integrability_integral(int d) const;

  struct StabilityReport {
    bool stable = true;
    double worst_margin = kInf;  // min over sets of Σ_{i<j}V + B n
    std::size_t sets_tested = 0;
  };
  /// Property test of Σ_{i<j} V(x_i - x_j) ≥ -B n on random point sets
  /// packed into cubes around the interaction range.
  [[nodiscard]] StabilityReport check_stability(int d, std::size_t n_sets, std::uint64_t seed) const;

 private:
  enum class Kind { none, hard_core, step, gaussian };
  Kind kind_ = Kind::none;
  double core_ = 0.0;
  double v0_ = 0.0, s0_ = 1.0, v1_ = 0.0, s1_ = 1.0;
  double a_ = 0.0;
  double B_ = 0.0;
  double r0_ = 0.0;
  double range_ = 0.0;
  std::string name_ = "none";
};

}  // namespace bose::loops
