#include <cmath>
#include <vector>

#include "bose/spectral_gas.hpp"
#include "doctest.h"

using namespace bose;
using namespace bose::spectral;

namespace {

// Σ_j (4πjβ)^{-3/2}, with the Euler-Maclaurin tail ∫_J^∞ + half term.
double rho_cr_series(double beta) {
  const int J = 20000;
  double s = 0.0;
  for (int j = J; j >= 1; --j) s += std::pow(4.0 * kPi * j * beta, -1.5);
  const double c = std::pow(4.0 * kPi * beta, -1.5);
  s += c * 2.0 / std::sqrt(static_cast<double>(J)) - 0.5 * c * std::pow(J, -1.5);
  return s;
}

// Riemann sum of exp(-β p^2) on the momentum lattice (2π/L)Z^3 divided by L^3,
// evaluated as a product of independent 1-D sums.
double gaussian_lattice_sum(double L, double beta) {
  double s = 0.0;
  const double k = 2.0 * kPi / L;
  for (int m = -400; m <= 400; ++m) s += std::exp(-beta * k * k * m * m);
  return std::pow(s / L, 3);
}

}  // namespace

TEST_CASE("torus spectrum counting and multiplicities") {
  auto s1 = build_torus_spectrum({1, 2.0 * kPi, 1});
  REQUIRE(s1.size() == 3);
  CHECK(s1.eigenvalues[0] == doctest::Approx(0.0));
  CHECK(s1.eigenvalues[1] == doctest::Approx(1.0));
  CHECK(s1.eigenvalues[2] == doctest::Approx(1.0));
  CHECK(s1.gaps[0] == 0.0);

  auto s3 = build_torus_spectrum({3, 2.0 * kPi, 1});
  int ones = 0;
  for (double g : s3.gaps) ones += std::abs(g - 1.0) < 1e-12;
  CHECK(ones == 6);
  CHECK(s3.gaps[1] == doctest::Approx(1.0));

  CHECK(build_torus_spectrum({3, 10.0, 20}).size() == 41u * 41u * 41u);
  CHECK_THROWS_AS(build_torus_spectrum({3, 10.0, 200}, 1'000'000), ResourceError);
  CHECK_THROWS_AS(build_torus_spectrum({0, 10.0, 2}), ArgumentError);
}

TEST_CASE("admissibility phi") {
  auto spec = build_torus_spectrum(torus_for(3, 40.0, 1.0));
  CHECK(admissibility_phi(spec, 1.0) == doctest::Approx(gaussian_lattice_sum(40.0, 1.0)).epsilon(1e-9));
  CHECK(admissibility_phi(spec, 1.0) == doctest::Approx(std::pow(4.0 * kPi, -1.5)).epsilon(1e-6));

  auto spec2 = build_torus_spectrum(torus_for(3, 40.0, 2.0));
  CHECK(admissibility_phi(spec2, 2.0) == doctest::Approx(std::pow(8.0 * kPi, -1.5)).epsilon(1e-6));

  auto small = build_torus_spectrum({3, 2.0, 3});
  CHECK(admissibility_phi(small, 1e4) == doctest::Approx(1.0 / 8.0));
  CHECK_THROWS_AS(admissibility_phi(small, 0.0), ArgumentError);

  std::vector<double> Ls{5.0, 10.0, 20.0};
  auto trace = admissibility_sequence(3, Ls, 1.0);
  CHECK(std::isnan(trace.increment[0]));
  CHECK(trace.increment[2] < 1e-8);
}

TEST_CASE("cutoff controls the dropped tail") {
  const int c = torus_cutoff_for_tail(3, 40.0, 1.0);
  const double k = 2.0 * kPi / 40.0;
  double full = 0.0, kept = 0.0;
  for (int m = -2000; m <= 2000; ++m) {
    const double t = std::exp(-k * k * m * m);
    full += t;
    if (std::abs(m) <= c) kept += t;
  }
  CHECK(std::pow(full, 3) - std::pow(kept, 3) < 1e-9);
  CHECK(c < 45);
}

TEST_CASE("single-mode closed forms") {
  auto one = make_spectrum({0.0}, 1.0);
  CHECK(pressure(one, 1.0, 1.0) == doctest::Approx(-std::log(1.0 - std::exp(-1.0))));
  CHECK(density(one, 1.0, std::log(2.0)) == doctest::Approx(1.0));
  CHECK(solve_mu(one, 1.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  CHECK(pressure(one, 1.0, 60.0) < 1e-25);
  CHECK(density(one, 1.0, 60.0) < 1e-25);
  CHECK_THROWS_AS(pressure(one, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(density(one, 1.0, -0.1), DomainError);
}

TEST_CASE("pressure derivative and monotonicity") {
  auto spec = build_torus_spectrum(torus_for(3, 6.0, 1.0));
  const double h = 1e-5;
  for (double mu : {0.1, 0.5, 2.0}) {
    const double fd = (pressure(spec, 1.0, mu + h) - pressure(spec, 1.0, mu - h)) / (2 * h);
    CHECK(std::abs(fd + density(spec, 1.0, mu)) < 1e-8);
    CHECK(density(spec, 1.0, mu) > density(spec, 1.0, mu + 0.1));
    CHECK(pressure(spec, 1.0, mu) > pressure(spec, 1.0, mu + 0.1));
  }
  // At β ≠ 1 the derivative carries the factor β.
  const double beta = 2.0, mu = 0.3;
  const double fd = (pressure(spec, beta, mu + h) - pressure(spec, beta, mu - h)) / (2 * h);
  CHECK(fd == doctest::Approx(-beta * density(spec, beta, mu)).epsilon(1e-7));
  const double dfd = (density(spec, beta, mu + h) - density(spec, beta, mu - h)) / (2 * h);
  CHECK(density_derivative(spec, beta, mu) == doctest::Approx(dfd).epsilon(1e-6));
}

TEST_CASE("solve_mu round trip and condensation") {
  auto spec = build_torus_spectrum(torus_for(3, 8.0, 1.0));
  for (double mu0 : {-0.0 + 1e-6, 0.01, 0.7, 3.0}) {
    const double rho = density(spec, 1.0, mu0);
    CHECK(solve_mu(spec, 1.0, rho) == doctest::Approx(mu0).epsilon(1e-9));
  }
  const double rc = critical_density_closed_form(3, 1.0);
  double prev_scaled = 0.0;
  double prev_mu = 1.0;
  for (double L : {10.0, 20.0, 40.0}) {
    auto s = build_torus_spectrum(torus_for(3, L, 1.0));
    const double mu = solve_mu(s, 1.0, 2.0 * rc);
    CHECK(mu > 0.0);
    CHECK(mu < prev_mu);
    prev_mu = mu;
    // μ|Λ| ≈ 1/(ρ - ρ_cr) for a macroscopically occupied zero mode.
    prev_scaled = mu * std::pow(L, 3);
    CHECK(prev_scaled < 2.0 / rc);
  }
  CHECK_THROWS_AS(solve_mu(spec, 1.0, -1.0), ArgumentError);
}

TEST_CASE("critical density") {
  const auto dos = DensityOfStates::analytic(3);
  const double rc = critical_density(1.0, dos);
  CHECK(rc == doctest::Approx(rho_cr_series(1.0)).epsilon(1e-6));
  CHECK(rc == doctest::Approx(0.058644).epsilon(1e-4));
  CHECK(rc == doctest::Approx(critical_density_closed_form(3, 1.0)).epsilon(1e-8));
  CHECK(critical_density(4.0, dos) == doctest::Approx(rc / 8.0).epsilon(1e-8));
  CHECK_THROWS_AS(critical_density(1.0, DensityOfStates::analytic(2)), DivergenceError);
  CHECK_THROWS_AS(critical_density_closed_form(1, 1.0), DivergenceError);

  // Tabulated copy of the analytic F on a quadratic grid.
  std::vector<double> lam, F;
  const double h = 0.01;
  for (int i = 0; i <= 6000; ++i) {
    const double l = (i * h) * (i * h);
    lam.push_back(l);
    F.push_back(dos.analytic_F(l));
  }
  const auto tab = DensityOfStates::tabulated(lam, F);
  CHECK(critical_density(1.0, tab) == doctest::Approx(rc).epsilon(1e-3));
  CHECK(laplace_transform(tab, 1.0) == doctest::Approx(std::pow(4 * kPi, -1.5)).epsilon(1e-3));

  std::vector<double> F2;
  for (double l : lam) F2.push_back(l);  // F ∝ λ: d = 2 behaviour
  CHECK_THROWS_AS(critical_density(1.0, DensityOfStates::tabulated(lam, F2)), DivergenceError);
  CHECK_THROWS_AS(DensityOfStates::tabulated({0.0, 1.0, 0.5}, {0.0, 1.0, 2.0}), ArgumentError);
  CHECK_THROWS_AS(DensityOfStates::tabulated({0.0, 1.0, 2.0}, {0.0, 1.0, 0.5}), ArgumentError);
}

TEST_CASE("Laplace consistency with the large-volume admissibility limit") {
  const auto dos = DensityOfStates::analytic(3);
  for (double beta : {0.5, 1.0, 2.0}) {
    auto spec = build_torus_spectrum(torus_for(3, 30.0, beta));
    CHECK(laplace_transform(dos, beta) == doctest::Approx(admissibility_phi(spec, beta)).epsilon(1e-3));
  }
}

TEST_CASE("condensate fraction") {
  const auto dos = DensityOfStates::analytic(3);
  const double rc = critical_density(1.0, dos);
  CHECK(condensate_fraction(1.0, 0.5 * rc, dos) == 0.0);
  CHECK(condensate_fraction(1.0, 2.0 * rc, dos) == doctest::Approx(0.5));
  CHECK(condensate_fraction(1.0, 0.1, dos) == doctest::Approx(1.0 - 0.058644 / 0.1).epsilon(1e-4));
}

TEST_CASE("finite volume density approaches the continuum") {
  for (double mu : {0.1, 0.5}) {
    auto spec = build_torus_spectrum(torus_for(3, 16.0, 1.0));
    CHECK(density(spec, 1.0, mu) == doctest::Approx(continuum_density(3, 1.0, mu)).epsilon(5e-3));
  }
  CHECK(continuum_density(3, 1.0, 0.0) == doctest::Approx(critical_density_closed_form(3, 1.0)));
  CHECK_THROWS_AS(continuum_density(3, 1.0, -0.1), DomainError);
}

TEST_CASE("csv record") {
  IdealRecord r{1.0, 0.5, 10.0, 3, 0.1, 0.2, 0.05, 0.0};
  CHECK(ideal_csv_header() == "beta,mu,L,d,pressure,density,rho_cr,condensate_fraction");
  CHECK(to_csv(r).rfind("1,0.5,10,3,", 0) == 0);
}
