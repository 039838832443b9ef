#pragma once

// Thermal Gaussian loop fields on K_β × (discretized torus).
//
// Conventions. The spatial torus [0, L)^d carries n_x^d sites with spacing
// a = L/n_x. Test functions are real arrays over the sites, paired as
// ⟨f, g⟩ = a^d Σ f g. Momentum modes k = 2π m/L with m in [-n_x/2, n_x/2),
// energies ε_k = |k|² + μ, and normalized coefficients
// f̃_k = (a^d / sqrt|Λ|) Σ_x f(x) e^{-ik·x}, so that Σ_k |f̃_k|² = ⟨f, f⟩.
// f̂(0) = a^d Σ f is the unnormalized zero mode.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bose/common.hpp"

namespace bose::thermal {

struct FieldGrid {
  double beta = 1.0;
  int n_tau = 8;
  int d = 1;
  double L = 1.0;
  int n_x = 8;

  void validate() const;
  [[nodiscard]] double spacing() const { return L / n_x; }
  [[nodiscard]] double dtau() const { return beta / n_tau; }
  [[nodiscard]] std::size_t sites() const;
  [[nodiscard]] double cell_volume() const { return std::pow(spacing(), d); }
  [[nodiscard]] double volume() const { return std::pow(L, d); }
  /// Integer coordinates of site index s (axis 0 fastest).
  [[nodiscard]] std::array<int, 3> coords(std::size_t s) const;
  [[nodiscard]] std::size_t index(std::array<int, 3> c) const;
  /// |k|² of the centered momentum mode stored at DFT index s.
  [[nodiscard]] double k_squared(std::size_t s) const;
};

struct ThermalFieldParams {
  FieldGrid grid;
  double mu = 0.0;
  bool critical = false;
  double c = 0.0;

  /// Noncritical: μ > 0. Critical: μ = 0 and c ≥ 0 (c = 0 is the μ→0⁺ limit).
  void validate() const;
};

/// Field values indexed [t * sites + x].
struct FieldSample {
  FieldGrid grid;
  std::vector<double> values;
  std::uint64_t seed = 0;

  [[nodiscard]] double at(int t, std::size_t x) const { return values[static_cast<std::size_t>(t) * grid.sites() + x]; }
  /// φ(f, t) = a^d Σ_x f(x) φ(t, x).
  [[nodiscard]] double smear(std::span<const double> f, int t) const;
};

struct PureStatePoint {
  double r = 0.0;
  double theta = 0.0;
};

/// Normalized momentum coefficients f̃_k in DFT storage order.
std::vector<std::complex<double>> momentum_coefficients(const FieldGrid& g, std::span<const double> f);
/// f̂(0) = a^d Σ f.
double zero_mode(const FieldGrid& g, std::span<const double> f);

/// Single-mode covariance (e^{-ετ} + e^{-ε(β-τ)}) / (1 - e^{-εβ}).
double mode_covariance(double eps, double beta, double tau);

/// ⟨f | (e^{-τh} + e^{-(β-τ)h})(1 - e^{-βh})^{-1} | g⟩ (+ c f̂(0) ĝ(0) if critical).
double covariance(const ThermalFieldParams& p, std::span<const double> f, std::span<const double> g, double tau);

/// exp(-¼⟨f | coth(βh/2) | f⟩), times exp(-c f̂(0)²) in the critical case.
double weyl_expectation(const ThermalFieldParams& p, std::span<const double> f);

/// Spectral sampler: one periodic Ornstein-Uhlenbeck loop per spatial mode,
/// realized through the circulant time spectrum of each mode's covariance.
class FieldSampler {
 public:
  explicit FieldSampler(const ThermalFieldParams& p);

  /// Field with the zero mode included as an N(0, c) constant (critical) or
  /// as an ordinary mode (noncritical).
  [[nodiscard]] FieldSample draw(std::uint64_t seed) const;
  /// Nonzero-mode part only plus an explicit constant `zero_shift`.
  [[nodiscard]] FieldSample draw_nonzero(std::uint64_t seed, double zero_shift) const;
  [[nodiscard]] const ThermalFieldParams& params() const { return p_; }

 private:
  void fill(Rng& rng, std::vector<double>& out) const;

  ThermalFieldParams p_;
  std::vector<double> amplitude_;  // sqrt(s_l(ε_k)/a^d), [l * sites + k]
};

/// Draws a field whose discrete covariance is exactly `covariance` at the
/// grid times. The critical zero mode is an independent N(0, c) constant.
FieldSample sample_field(const ThermalFieldParams& p, std::uint64_t seed);

/// Field plus the Weyl-realization condensate: φ_nz + sqrt(2 c r) cos θ.
/// W_f is realized as exp(i φ(f, 0)/√2) on this field.
FieldSample sample_weyl_field(const ThermalFieldParams& p, PureStatePoint point, std::uint64_t seed);
/// (r, θ) drawn from dλ₀ = (1/4)e^{-r/4} dr ⊗ dθ/2π.
PureStatePoint sample_pure_state_point(Rng& rng);

struct MixingCheck {
  double lhs = 0.0;
  double lhs_imag = 0.0;
  double rhs = 0.0;
  double error_estimate = 0.0;
  bool converged = false;
};

/// ∫dλ₀(r,θ) exp(i sqrt(c r) cos θ f̂(0)) against exp(-c f̂(0)²). The θ
/// integral uses an n_quadrature-point trapezoid rule, r adaptive Gauss-Kronrod.
MixingCheck mixing_decomposition_check(double c, double f0, int n_quadrature = 256);

enum class Ergodicity { ergodic, non_ergodic, inconclusive };
std::string to_string(Ergodicity e);

struct ErgodicityReport {
  std::vector<double> volume;
  std::vector<double> variance;
  std::vector<double> variance_error;
  double slope = 0.0;
  double slope_error = 0.0;
  double plateau_threshold = 0.0;
  Ergodicity status = Ergodicity::inconclusive;
};

/// Variance of the space-time averaged field for each n_x in `sizes` at the
/// grid spacing of p.grid. Classified from the log-log slope in |Λ|.
ErgodicityReport ergodicity_diagnostic(const ThermalFieldParams& p, std::size_t n_samples,
                                       std::span<const int> sizes, std::uint64_t seed);

struct SubBox {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};  // exclusive
  [[nodiscard]] bool contains(std::array<int, 3> c, int d) const;
};

class PolynomialPerturbation {
 public:
  using Kernel = std::function<double(double)>;  // F(|x - y|)

  /// Local perturbation λ ∫∫ P(φ_ε). coeffs[i] multiplies x^i.
  PolynomialPerturbation(std::vector<double> coeffs, double lambda, double mollifier_width, SubBox region);
  /// Nonlocal perturbation λ ∫∫∫ P(φ_ε(x)) F(x - y) P(φ_ε(y)).
  PolynomialPerturbation(std::vector<double> coeffs, double lambda, double mollifier_width, SubBox region,
                         Kernel kernel);

  /// Checks grid compatibility: region inside the grid, ε ≥ 2a, F positive definite.
  void validate_for(const FieldGrid& g) const;

  [[nodiscard]] double eval(double x) const;
  [[nodiscard]] double min_value() const;
  [[nodiscard]] const std::vector<double>& coeffs() const { return coeffs_; }
  [[nodiscard]] double lambda() const { return lambda_; }
  [[nodiscard]] double mollifier_width() const { return eps_; }
  [[nodiscard]] const SubBox& region() const { return region_; }
  [[nodiscard]] bool nonlocal() const { return static_cast<bool>(kernel_); }
  [[nodiscard]] const Kernel& kernel() const { return kernel_; }

 private:
  std::vector<double> coeffs_;
  double lambda_ = 0.0;
  double eps_ = 0.0;
  SubBox region_;
  Kernel kernel_;
};

/// φ_ε: spatial Gaussian mollifier exp(-ε²k²/2) applied to every slice.
std::vector<double> mollify(const FieldSample& s, double eps);

/// -λ δτ a^d Σ P(φ_ε) (local) or -λ δτ a^{2d} ΣΣ P F P (nonlocal) over the region.
double perturbation_action(const FieldSample& s, const PolynomialPerturbation& pert);

/// Serial reference for perturbation_action (identical arithmetic path).
double perturbation_action_serial(const FieldSample& s, const PolynomialPerturbation& pert);

struct ReweightOptions {
  std::size_t jackknife_blocks = 20;
  double min_ess = 100.0;
  bool stratified = false;  // critical only: stratify (r, θ) over dλ₀ quantiles
};

struct ReweightResult {
  std::optional<Estimate> real;  // empty when the ESS guard refused
  std::optional<Estimate> imag;
  double ess = 0.0;
  std::size_t n_samples = 0;
  std::string diagnostic;
};

/// Importance-sampling estimate of E[O e^{S}]/E[e^{S}] for a real observable.
ReweightResult reweighted_mean(const ThermalFieldParams& p, const PolynomialPerturbation& pert,
                               const std::function<double(const FieldSample&)>& observable,
                               std::size_t n_samples, std::uint64_t seed, const ReweightOptions& opt = {});

/// ω_Λ(W_f) under the perturbed measure, W_f = exp(i φ(f,0)/√2).
ReweightResult reweighted_state(const ThermalFieldParams& p, const PolynomialPerturbation& pert,
                                std::span<const double> f, std::size_t n_samples, std::uint64_t seed,
                                const ReweightOptions& opt = {});

/// First-order shift of ⟨φ(f,0)²⟩ for P(x) = x²: -2λ Σ_{τ,x∈Λ} δτ a^d Cov(φ(f,0), φ_ε(τ,x))².
double first_order_square_shift(const ThermalFieldParams& p, const PolynomialPerturbation& pert,
                                std::span<const double> f);

struct MixingNode {
  double r = 0.0;
  double theta = 0.0;
  double base_weight = 0.0;   // dλ₀ quadrature weight
  double ratio = 1.0;         // Z^{(r,θ)}/Z
  double ratio_error = 0.0;
  double weight = 0.0;        // normalized renormalized weight
};

struct MixingTable {
  std::vector<MixingNode> nodes;
  Estimate mean_r;
  Estimate var_r;
};

/// dλ_ren ∝ dλ₀ Z^{(r,θ)} on a Gauss-Laguerre (r) × uniform (θ) grid. Every
/// node reuses the same antithetic nonzero-mode samples.
MixingTable renormalized_mixing(const ThermalFieldParams& p, const PolynomialPerturbation& pert, int n_grid_r,
                                int n_grid_theta, std::size_t n_samples, std::uint64_t seed,
                                std::size_t jackknife_blocks = 20);

/// Nodes and weights of Gauss-Laguerre quadrature for ∫_0^∞ e^{-s} g(s) ds.
std::pair<std::vector<double>, std::vector<double>> gauss_laguerre(int n);

/// log E[exp(φ(f, 0))] from n_samples free draws (exponential-moment monitor).
Estimate log_exponential_moment(const ThermalFieldParams& p, std::span<const double> f, std::size_t n_samples,
                                std::uint64_t seed);

/// Writes <stem>.bin (little-endian float64, [tau][site]) and <stem>.json.
void export_snapshot(const FieldSample& s, const std::filesystem::path& stem);
FieldSample import_snapshot(const std::filesystem::path& stem);

}  // namespace bose::thermal
