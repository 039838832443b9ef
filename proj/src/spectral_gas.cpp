#include "bose/spectral_gas.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/zeta.hpp>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "bose/kernels.hpp"

namespace bose::spectral {

namespace {

void require_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ArgumentError("beta must be positive and finite");
  }
}

void require_mu(const Spectrum& spec, double beta, double mu) {
  require_beta(beta);
  if (!(mu + spec.lowest() > 0.0)) {
    throw DomainError("condensation boundary crossed: mu <= -lambda(1)");
  }
}

// Σ_{m in Z} exp(-a m^2) split into the kept part |m| <= c and the dropped tail.
struct GaussSums {
  double kept = 0.0;
  double tail = 0.0;
};

GaussSums gauss_sums(double a, int c, bool include_zero_and_negative) {
  GaussSums s;
  KahanSum kept;
  if (include_zero_and_negative) kept += 1.0;
  for (int m = 1; m <= c; ++m) {
    kept += (include_zero_and_negative ? 2.0 : 1.0) * std::exp(-a * m * m);
  }
  KahanSum tail;
  for (long m = c + 1;; ++m) {
    const double t = std::exp(-a * static_cast<double>(m) * static_cast<double>(m));
    tail += (include_zero_and_negative ? 2.0 : 1.0) * t;
    if (t < 1e-300 || t < 1e-20 * tail.value()) break;
  }
  s.kept = kept.value();
  s.tail = tail.value();
  return s;
}

// S^d - S_c^d = (S - S_c) Σ_k S^k S_c^{d-1-k}, evaluated without cancellation.
double dropped_tail(const GaussSums& s, int d) {
  const double full = s.kept + s.tail;
  double factor = 0.0;
  for (int k = 0; k < d; ++k) factor += std::pow(full, k) * std::pow(s.kept, d - 1 - k);
  return s.tail * factor;
}

int cutoff_for_tail(int d, double a, double tail, bool periodic) {
  for (int c = 1; c < 1'000'000; ++c) {
    if (dropped_tail(gauss_sums(a, c, periodic), d) < tail) return c;
  }
  throw ResourceError("mode cutoff search did not terminate");
}

Spectrum from_square_norms(std::vector<long>& norms, double scale, double volume) {
  std::sort(norms.begin(), norms.end());
  Spectrum spec;
  spec.volume = volume;
  spec.eigenvalues.resize(norms.size());
  spec.gaps.resize(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    spec.eigenvalues[i] = scale * static_cast<double>(norms[i]);
  }
  for (std::size_t i = 0; i < norms.size(); ++i) {
    spec.gaps[i] = scale * static_cast<double>(norms[i] - norms[0]);
  }
  return spec;
}

std::size_t checked_mode_count(int d, long per_axis, std::size_t budget) {
  double count = std::pow(static_cast<double>(per_axis), d);
  if (count > static_cast<double>(budget)) {
    throw ResourceError(fmt::format("mode count {:.3g} exceeds budget {}", count, budget));
  }
  return static_cast<std::size_t>(count);
}

// Enumerate integer vectors with components in [lo, hi] and collect |m|^2.
std::vector<long> square_norms(int d, long lo, long hi, std::size_t count) {
  std::vector<long> norms;
  norms.reserve(count);
  std::array<long, 3> m{lo, lo, lo};
  for (;;) {
    long n2 = 0;
    for (int i = 0; i < d; ++i) n2 += m[i] * m[i];
    norms.push_back(n2);
    int axis = 0;
    while (axis < d) {
      if (++m[axis] <= hi) break;
      m[axis] = lo;
      ++axis;
    }
    if (axis == d) break;
  }
  return norms;
}

void require_dimension(int d) {
  if (d < 1 || d > 3) throw ArgumentError("dimension must be 1, 2 or 3");
}

}  // namespace

void TorusGeometry::validate() const {
  require_dimension(d);
  if (!(L > 0.0) || !std::isfinite(L)) throw ArgumentError("torus side L must be positive");
  if (mode_cutoff < 1) throw ArgumentError("mode_cutoff must be >= 1");
  const double v = volume();
  if (!(v > 0.0) || !std::isfinite(v)) throw ArgumentError("torus volume not finite");
}

Spectrum build_torus_spectrum(const TorusGeometry& geom, std::size_t mode_budget) {
  geom.validate();
  const long c = geom.mode_cutoff;
  const std::size_t count = checked_mode_count(geom.d, 2 * c + 1, mode_budget);
  auto norms = square_norms(geom.d, -c, c, count);
  const double k = 2.0 * kPi / geom.L;
  return from_square_norms(norms, k * k, geom.volume());
}

Spectrum build_dirichlet_spectrum(int d, double L, int mode_cutoff, std::size_t mode_budget) {
  TorusGeometry{d, L, mode_cutoff}.validate();
  const std::size_t count = checked_mode_count(d, mode_cutoff, mode_budget);
  auto norms = square_norms(d, 1, mode_cutoff, count);
  const double k = kPi / L;
  return from_square_norms(norms, k * k, std::pow(L, d));
}

Spectrum make_spectrum(std::vector<double> eigenvalues, double volume) {
  if (eigenvalues.empty()) throw ArgumentError("spectrum must not be empty");
  if (!(volume > 0.0)) throw ArgumentError("volume must be positive");
  std::sort(eigenvalues.begin(), eigenvalues.end());
  Spectrum spec;
  spec.volume = volume;
  spec.gaps.resize(eigenvalues.size());
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) spec.gaps[i] = eigenvalues[i] - eigenvalues[0];
  spec.eigenvalues = std::move(eigenvalues);
  return spec;
}

int torus_cutoff_for_tail(int d, double L, double beta, double tail) {
  require_dimension(d);
  require_beta(beta);
  const double k = 2.0 * kPi / L;
  return cutoff_for_tail(d, beta * k * k, tail, true);
}

int dirichlet_cutoff_for_tail(int d, double L, double beta, double tail) {
  require_dimension(d);
  require_beta(beta);
  const double k = kPi / L;
  return cutoff_for_tail(d, beta * k * k, tail, false);
}

TorusGeometry torus_for(int d, double L, double beta_min, double tail) {
  return TorusGeometry{d, L, torus_cutoff_for_tail(d, L, beta_min, tail)};
}

double admissibility_phi(const Spectrum& spec, double beta) {
  require_beta(beta);
  const auto& g = spec.gaps;
  return kernels::sum(g.size(), [&](std::size_t i) { return std::exp(-beta * g[i]); }) / spec.volume;
}

AdmissibilityTrace admissibility_sequence(int d, std::span<const double> Ls, double beta) {
  AdmissibilityTrace trace;
  for (double L : Ls) {
    const auto spec = build_torus_spectrum(torus_for(d, L, beta));
    const double phi = admissibility_phi(spec, beta);
    trace.increment.push_back(trace.phi.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : std::abs(phi - trace.phi.back()));
    trace.L.push_back(L);
    trace.phi.push_back(phi);
  }
  return trace;
}

double pressure(const Spectrum& spec, double beta, double mu) {
  require_mu(spec, beta, mu);
  const auto& e = spec.eigenvalues;
  return -kernels::sum(e.size(), [&](std::size_t i) {
           return std::log1p(-std::exp(-beta * (e[i] + mu)));
         }) /
         spec.volume;
}

double density(const Spectrum& spec, double beta, double mu) {
  require_mu(spec, beta, mu);
  const auto& e = spec.eigenvalues;
  return kernels::sum(e.size(), [&](std::size_t i) { return 1.0 / std::expm1(beta * (e[i] + mu)); }) /
         spec.volume;
}

double density_derivative(const Spectrum& spec, double beta, double mu) {
  require_mu(spec, beta, mu);
  const auto& e = spec.eigenvalues;
  return -beta *
         kernels::sum(e.size(),
                      [&](std::size_t i) {
                        const double s = std::sinh(0.5 * beta * (e[i] + mu));
                        return 0.25 / (s * s);
                      }) /
         spec.volume;
}

double solve_mu(const Spectrum& spec, double beta, double rho_target) {
  require_beta(beta);
  if (!(rho_target > 0.0) || !std::isfinite(rho_target)) {
    throw ArgumentError("target density must be positive");
  }
  const double lam1 = spec.lowest();
  // Work in s = ln(mu + lambda1); ln ρ is smooth and decreasing in s.
  auto residual = [&](double s) { return std::log(density(spec, beta, std::exp(s) - lam1)) - std::log(rho_target); };
  double lo = std::log(1e-14);
  double hi = std::log(std::max(1.0, std::abs(lam1) + 1.0));
  if (residual(lo) < 0.0) {
    throw DomainError("target density above the density at the bracket floor");
  }
  while (residual(hi) > 0.0) hi += std::log(4.0);

  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double mu = std::exp(s) - lam1;
    const double rho = density(spec, beta, mu);
    const double f = std::log(rho) - std::log(rho_target);
    if (f > 0.0) {
      lo = s;
    } else {
      hi = s;
    }
    // d ln ρ / ds = (dρ/dμ)(μ + λ1)/ρ
    const double dfds = density_derivative(spec, beta, mu) * std::exp(s) / rho;
    double next = s - f / dfds;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - s);
    s = next;
    if (step < 1e-13 || hi - lo < 1e-13) break;
  }
  return std::exp(s) - lam1;
}

double continuum_density(int d, double beta, double mu) {
  require_dimension(d);
  require_beta(beta);
  if (mu < 0.0) throw DomainError("continuum density needs mu >= 0");
  if (mu == 0.0) return critical_density_closed_form(d, beta);
  KahanSum s;
  for (long j = 1; j < 100'000'000; ++j) {
    const double t = std::exp(-static_cast<double>(j) * beta * mu) *
                     std::pow(4.0 * kPi * static_cast<double>(j) * beta, -0.5 * d);
    s += t;
    if (t < 1e-18 * s.value()) break;
  }
  return s.value();
}

DensityOfStates DensityOfStates::analytic(int d) {
  require_dimension(d);
  DensityOfStates dos;
  dos.kind = Kind::analytic;
  dos.d = d;
  return dos;
}

DensityOfStates DensityOfStates::tabulated(std::vector<double> lambda, std::vector<double> F) {
  DensityOfStates dos;
  dos.kind = Kind::tabulated;
  dos.lambda = std::move(lambda);
  dos.F = std::move(F);
  dos.validate();
  return dos;
}

void DensityOfStates::validate() const {
  if (kind == Kind::analytic) {
    require_dimension(d);
    return;
  }
  if (lambda.size() != F.size() || lambda.size() < 3) {
    throw ArgumentError("tabulated density of states needs >= 3 matching (lambda, F) pairs");
  }
  if (lambda[0] != 0.0 || F[0] != 0.0) throw ArgumentError("tabulated dF must start at lambda = 0 with F = 0");
  for (std::size_t i = 1; i < lambda.size(); ++i) {
    if (!(lambda[i] > lambda[i - 1])) throw ArgumentError("lambda grid must be strictly increasing");
    if (F[i] < F[i - 1]) throw ArgumentError("F must be nondecreasing");
  }
}

double DensityOfStates::analytic_weight(double l) const {
  const double c = std::pow(4.0 * kPi, -0.5 * d) / std::tgamma(0.5 * d);
  return c * std::pow(l, 0.5 * d - 1.0);
}

double DensityOfStates::analytic_F(double l) const {
  const double c = std::pow(4.0 * kPi, -0.5 * d) / std::tgamma(0.5 * d);
  return c * std::pow(l, 0.5 * d) / (0.5 * d);
}

namespace {

// ∫ g(λ) dF over the continuum weight, with λ = u^2 to remove the λ^{d/2-1}
// endpoint behaviour.
template <class G>
double integrate_analytic(const DensityOfStates& dos, G&& g) {
  const double c = std::pow(4.0 * kPi, -0.5 * dos.d) / std::tgamma(0.5 * dos.d);
  boost::math::quadrature::exp_sinh<double> integrator;
  auto integrand = [&](double u) {
    if (u <= 0.0 || u > 1e100) return 0.0;
    const double v = 2.0 * c * std::pow(u, dos.d - 1) * g(u * u);
    return std::isfinite(v) ? v : 0.0;
  };
  double err = 0.0;
  const double value = integrator.integrate(integrand, 1e-13, &err);
  return value;
}

// Trapezoid Stieltjes sum Σ ½(g_i + g_{i+1})(F_{i+1} - F_i) over cells i >= first.
template <class G>
double stieltjes_trapezoid(const DensityOfStates& dos, G&& g, std::size_t first) {
  KahanSum s;
  for (std::size_t i = first; i + 1 < dos.lambda.size(); ++i) {
    s += 0.5 * (g(dos.lambda[i]) + g(dos.lambda[i + 1])) * (dos.F[i + 1] - dos.F[i]);
  }
  return s.value();
}

}  // namespace

double laplace_transform(const DensityOfStates& dos, double beta) {
  require_beta(beta);
  dos.validate();
  auto g = [beta](double l) { return std::exp(-beta * l); };
  if (dos.kind == DensityOfStates::Kind::analytic) return integrate_analytic(dos, g);
  return stieltjes_trapezoid(dos, g, 0);
}

double critical_density(double beta, const DensityOfStates& dos) {
  require_beta(beta);
  dos.validate();
  auto bose = [beta](double l) { return 1.0 / std::expm1(beta * l); };
  if (dos.kind == DensityOfStates::Kind::analytic) {
    if (dos.d <= 2) throw DivergenceError("no condensation in this dimension");
    return integrate_analytic(dos, bose);
  }
  // The Bose factor diverges at λ = 0. The first cell is integrated
  // analytically against a local power law F = F1 (λ/λ1)^a fitted on the
  // first two cells, using 1/(e^x - 1) ≈ 1/x - 1/2 + x/12.
  const double l1 = dos.lambda[1], l2 = dos.lambda[2];
  const double F1 = dos.F[1], F2 = dos.F[2];
  if (!(F1 > 0.0) || !(F2 > F1)) {
    throw ArgumentError("tabulated dF must have weight in its first two cells");
  }
  const double a = std::log(F2 / F1) / std::log(l2 / l1);
  if (!(a > 1.0)) throw DivergenceError("no condensation in this dimension: dF too singular at 0");
  const double first = F1 * a / ((a - 1.0) * beta * l1) - 0.5 * F1 + beta * F1 * a * l1 / (12.0 * (a + 1.0));
  return first + stieltjes_trapezoid(dos, bose, 1);
}

double critical_density_closed_form(int d, double beta) {
  require_beta(beta);
  if (d <= 2) throw DivergenceError("no condensation in this dimension");
  return boost::math::zeta(0.5 * d) * std::pow(4.0 * kPi * beta, -0.5 * d);
}

double condensate_fraction(double beta, double rho, const DensityOfStates& dos) {
  if (!(rho > 0.0)) throw ArgumentError("density must be positive");
  const double rc = critical_density(beta, dos);
  return std::max(0.0, rho - rc) / rho;
}

std::string ideal_csv_header() { return "beta,mu,L,d,pressure,density,rho_cr,condensate_fraction"; }

std::string to_csv(const IdealRecord& r) {
  return fmt::format("{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g}", r.beta, r.mu, r.L, r.d,
                     r.pressure, r.density, r.rho_cr, r.condensate_fraction);
}

}  // namespace bose::spectral
