#pragma once

// Exact thermodynamics of the noninteracting Bose gas on finite boxes and in
// the continuum limit. Units: hbar = 2m = 1, kinetic operator -Laplacian,
// dispersion p^2.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bose/common.hpp"

namespace bose::spectral {

struct TorusGeometry {
  int d = 3;
  double L = 1.0;
  int mode_cutoff = 1;

  [[nodiscard]] double volume() const { return std::pow(L, d); }
  void validate() const;
};

/// Sorted one-particle spectrum of a finite box plus its volume.
struct Spectrum {
  std::vector<double> eigenvalues;  // nondecreasing
  std::vector<double> gaps;         // eigenvalues - eigenvalues[0]
  double volume = 1.0;

  [[nodiscard]] double lowest() const { return eigenvalues.front(); }
  [[nodiscard]] std::size_t size() const { return eigenvalues.size(); }
};

inline constexpr std::size_t kDefaultModeBudget = 50'000'000;

/// Periodic Laplacian eigenvalues (2π/L)^2 |m|^2 for |m_i| <= mode_cutoff.
Spectrum build_torus_spectrum(const TorusGeometry& geom,
                              std::size_t mode_budget = kDefaultModeBudget);

/// Dirichlet Laplacian on [0, L]^d: (π/L)^2 |m|^2 with 1 <= m_i <= mode_cutoff.
Spectrum build_dirichlet_spectrum(int d, double L, int mode_cutoff,
                                  std::size_t mode_budget = kDefaultModeBudget);

/// Spectrum from arbitrary eigenvalues (sorted internally).
Spectrum make_spectrum(std::vector<double> eigenvalues, double volume);

/// Smallest torus cutoff whose dropped tail of Σ exp(-β λ) is below `tail`.
int torus_cutoff_for_tail(int d, double L, double beta, double tail = 1e-10);
/// Same for the Dirichlet sine modes.
int dirichlet_cutoff_for_tail(int d, double L, double beta, double tail = 1e-10);

/// Torus geometry with the cutoff chosen programmatically for inverse
/// temperatures >= beta_min.
TorusGeometry torus_for(int d, double L, double beta_min, double tail = 1e-10);

/// (1/|Λ|) Σ_k exp(-β σ(k)).
double admissibility_phi(const Spectrum& spec, double beta);

struct AdmissibilityTrace {
  std::vector<double> L;
  std::vector<double> phi;
  std::vector<double> increment;  // |phi[i] - phi[i-1]|, increment[0] = NaN
};

/// φ over a growing family of tori (cutoffs chosen per L).
AdmissibilityTrace admissibility_sequence(int d, std::span<const double> Ls, double beta);

/// Finite-volume pressure p = -(1/|Λ|) Σ ln(1 - exp(-β(λ+μ))).
double pressure(const Spectrum& spec, double beta, double mu);
/// Bose-Einstein density (1/|Λ|) Σ 1/(exp(β(λ+μ)) - 1).
double density(const Spectrum& spec, double beta, double mu);
/// dρ/dμ (strictly negative).
double density_derivative(const Spectrum& spec, double beta, double mu);

/// Unique μ > -λ(1) with density(spec, β, μ) = rho_target.
double solve_mu(const Spectrum& spec, double beta, double rho_target);

/// Continuum-limit density Σ_j exp(-jβμ)(4πjβ)^{-d/2} for μ > 0.
double continuum_density(int d, double beta, double mu);

struct DensityOfStates {
  enum class Kind { analytic, tabulated };
  Kind kind = Kind::analytic;
  int d = 3;
  std::vector<double> lambda;  // tabulated: strictly increasing, lambda[0] = 0
  std::vector<double> F;       // tabulated: nondecreasing, F[0] = 0

  static DensityOfStates analytic(int d);
  static DensityOfStates tabulated(std::vector<double> lambda, std::vector<double> F);
  void validate() const;

  /// Continuum dF/dλ = (4π)^{-d/2} λ^{d/2-1}/Γ(d/2).
  [[nodiscard]] double analytic_weight(double lambda) const;
  /// Integrated F(λ) for the analytic kind.
  [[nodiscard]] double analytic_F(double lambda) const;
};

/// ∫ exp(-βλ) dF(λ); reproduces the large-volume limit of admissibility_phi.
double laplace_transform(const DensityOfStates& dos, double beta);

/// ρ_cr(β) = ∫ (exp(βλ) - 1)^{-1} dF(λ).
double critical_density(double beta, const DensityOfStates& dos);
/// ζ(d/2) (4πβ)^{-d/2}.
double critical_density_closed_form(int d, double beta);

/// max(0, ρ - ρ_cr)/ρ.
double condensate_fraction(double beta, double rho, const DensityOfStates& dos);

/// One emitted row of the `ideal` experiment.
struct IdealRecord {
  double beta = 0.0;
  double mu = 0.0;
  double L = 0.0;
  int d = 3;
  double pressure = 0.0;
  double density = 0.0;
  double rho_cr = 0.0;
  double condensate_fraction = 0.0;
};

std::string ideal_csv_header();
std::string to_csv(const IdealRecord& r);

}  // namespace bose::spectral
