#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <filesystem>
#include <vector>

#include "bose/thermal_field.hpp"
#include "doctest.h"

using namespace bose;
using namespace bose::thermal;

namespace {

ThermalFieldParams noncritical(int d, int n_x, double L, int n_tau, double mu, double beta = 1.0) {
  return {{beta, n_tau, d, L, n_x}, mu, false, 0.0};
}

ThermalFieldParams critical(int d, int n_x, double L, int n_tau, double c, double beta = 1.0) {
  return {{beta, n_tau, d, L, n_x}, 0.0, true, c};
}

std::vector<double> bump(const FieldGrid& g, std::array<double, 3> center, double width, double phase = 0.0) {
  std::vector<double> f(g.sites());
  for (std::size_t s = 0; s < f.size(); ++s) {
    const auto c = g.coords(s);
    double r2 = 0.0;
    for (int i = 0; i < g.d; ++i) {
      double dx = c[i] * g.spacing() - center[i];
      dx -= g.L * std::round(dx / g.L);
      r2 += dx * dx;
    }
    f[s] = std::exp(-r2 / (2 * width * width)) * std::cos(phase * c[0]);
  }
  return f;
}

// Direct O(N²) real-space evaluation of the covariance from the mode sum.
double covariance_direct(const ThermalFieldParams& p, const std::vector<double>& f, const std::vector<double>& g,
                         double tau) {
  const auto& G = p.grid;
  const double a = G.spacing(), vol = G.volume();
  double total = 0.0;
  for (std::size_t x = 0; x < G.sites(); ++x) {
    for (std::size_t y = 0; y < G.sites(); ++y) {
      const auto cx = G.coords(x), cy = G.coords(y);
      double kernel = 0.0;
      for (std::size_t k = 0; k < G.sites(); ++k) {
        if (p.critical && k == 0) continue;
        const auto ck = G.coords(k);
        double phase = 0.0;
        for (int i = 0; i < G.d; ++i) {
          const int m = ck[i] < G.n_x / 2 ? ck[i] : ck[i] - G.n_x;
          phase += 2 * kPi * m / G.L * (cx[i] - cy[i]) * a;
        }
        kernel += mode_covariance(G.k_squared(k) + p.mu, G.beta, tau) * std::cos(phase) / vol;
      }
      total += f[x] * g[y] * kernel;
    }
  }
  total *= std::pow(a, 2 * G.d);
  if (p.critical) total += p.c * zero_mode(G, f) * zero_mode(G, g);
  return total;
}

}  // namespace

TEST_CASE("grid indexing") {
  FieldGrid g{1.0, 4, 3, 6.0, 4};
  CHECK(g.sites() == 64);
  for (std::size_t s = 0; s < g.sites(); ++s) CHECK(g.index(g.coords(s)) == s);
  CHECK(g.k_squared(0) == 0.0);
  CHECK(g.index({-1, 0, 0}) == 3);
  CHECK_THROWS_AS(FieldGrid({1.0, 1, 1, 1.0, 4}).validate(), ArgumentError);
}

TEST_CASE("single-mode covariance and Weyl closed forms") {
  // d=1, two sites on L=2π: modes k=0 and k=-1. f selects the zero mode with f̃_0 = 1.
  auto p = noncritical(1, 2, 2 * kPi, 4, 1.0);
  std::vector<double> f(2, 1.0 / std::sqrt(2 * kPi));
  CHECK(covariance(p, f, f, 0.0) == doctest::Approx(2.16395341).epsilon(1e-8));
  CHECK(covariance(p, f, f, 0.0) == doctest::Approx(1.0 / std::tanh(0.5)).epsilon(1e-13));
  CHECK(weyl_expectation(p, f) == doctest::Approx(std::exp(-0.54098835)).epsilon(1e-8));
  CHECK(weyl_expectation(p, f) == doctest::Approx(0.58218).epsilon(1e-4));
  CHECK(weyl_expectation(p, std::vector<double>(2, 0.0)) == 1.0);
  CHECK_THROWS_AS(covariance(noncritical(1, 2, 2 * kPi, 4, 0.0), f, f, 0.0), PoleError);
  CHECK_THROWS_AS(covariance(p, f, f, 1.5), ArgumentError);
}

TEST_CASE("covariance against a direct real-space sum; symmetry; Gram positivity") {
  auto p = noncritical(2, 4, 3.0, 4, 0.4, 1.3);
  const auto f = bump(p.grid, {0.5, 1.0, 0}, 0.6, 0.7);
  const auto g = bump(p.grid, {2.0, 0.3, 0}, 0.9);
  for (double tau : {0.0, 0.2, 0.65, 1.3}) {
    CHECK(covariance(p, f, g, tau) == doctest::Approx(covariance_direct(p, f, g, tau)).epsilon(1e-11));
    CHECK(covariance(p, f, g, tau) == doctest::Approx(covariance(p, f, g, 1.3 - tau)).epsilon(1e-12));
    CHECK(covariance(p, f, g, tau) == doctest::Approx(covariance(p, g, f, tau)).epsilon(1e-12));
  }
  auto q = critical(2, 4, 3.0, 4, 0.7, 1.3);
  CHECK(covariance(q, f, g, 0.3) == doctest::Approx(covariance_direct(q, f, g, 0.3)).epsilon(1e-11));

  // Gram matrix over (f_i, τ_i): entries Cov(φ(f_i, τ_i), φ(f_j, τ_j)) = C(|τ_i - τ_j|).
  std::vector<std::pair<std::vector<double>, double>> probes;
  for (int i = 0; i < 6; ++i) probes.push_back({bump(p.grid, {0.4 * i, 0.3 * i, 0}, 0.5 + 0.1 * i, 0.3 * i), 0.2 * i});
  Eigen::MatrixXd gram(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      gram(i, j) = covariance(p, probes[i].first, probes[j].first, std::abs(probes[i].second - probes[j].second));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("Weyl/covariance factor link and critical zero mode") {
  auto p = noncritical(2, 4, 3.0, 4, 0.4);
  const auto f = bump(p.grid, {1.0, 1.0, 0}, 0.7);
  CHECK(-std::log(weyl_expectation(p, f)) == doctest::Approx(0.25 * covariance(p, f, f, 0.0)).epsilon(1e-12));

  auto q = critical(2, 4, 3.0, 4, 1.5);
  auto f0 = f;
  const double mean = zero_mode(q.grid, f) / q.grid.volume();
  for (auto& v : f0) v -= mean;  // f̂(0) = 0
  CHECK(std::abs(zero_mode(q.grid, f0)) < 1e-13);
  auto fk = momentum_coefficients(q.grid, f0);
  double s = 0.0;
  for (std::size_t k = 1; k < fk.size(); ++k) s += std::norm(fk[k]) / std::tanh(0.5 * q.grid.k_squared(k));
  CHECK(weyl_expectation(q, f0) == doctest::Approx(std::exp(-0.25 * s)).epsilon(1e-12));

  std::vector<double> one(q.grid.sites(), 1.0);
  CHECK(covariance(q, one, one, 0.4) == doctest::Approx(1.5 * q.grid.volume() * q.grid.volume()).epsilon(1e-12));

  double norm = 0.0;
  for (double v : f) norm += v * v * q.grid.cell_volume();
  double parseval = 0.0;
  for (const auto& c : momentum_coefficients(q.grid, f)) parseval += std::norm(c);
  CHECK(parseval == doctest::Approx(norm).epsilon(1e-12));
}

TEST_CASE("sampled fields reproduce the covariance") {
  auto p = noncritical(1, 6, 4.0, 6, 0.3);
  const FieldSampler sampler(p);
  const auto f = bump(p.grid, {1.0, 0, 0}, 0.8);
  const auto g = bump(p.grid, {2.5, 0, 0}, 0.5, 1.0);
  const std::size_t n = 10000;
  RunningStats mean, ff, fg, fourth;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = sampler.draw(derive_seed(7, "test", i));
    const double a = s.smear(f, 0), b = s.smear(g, 2);
    mean.add(a);
    ff.add(a * a);
    fg.add(a * b);
    fourth.add(a * a * a * a);
  }
  CHECK(std::abs(mean.mean()) < 4 * mean.std_error());
  CHECK(std::abs(ff.mean() - covariance(p, f, f, 0.0)) < 3 * ff.std_error());
  CHECK(std::abs(fg.mean() - covariance(p, f, g, 2 * p.grid.dtau())) < 3 * fg.std_error());
  const double c2 = covariance(p, f, f, 0.0);
  CHECK(std::abs(fourth.mean() - 3 * c2 * c2) < 3 * fourth.std_error());

  // Critical zero mode: variance of the spatial mean exceeds the nonzero-mode value by c.
  auto q = critical(1, 6, 4.0, 6, 1.0);
  const FieldSampler cs(q);
  std::vector<double> avg(q.grid.sites(), 1.0 / q.grid.volume());
  RunningStats zm;
  for (std::size_t i = 0; i < 4000; ++i) {
    const double v = cs.draw(derive_seed(9, "crit", i)).smear(avg, 0);
    zm.add(v * v);
  }
  CHECK(std::abs(zm.mean() - 1.0) < 3 * zm.std_error());
  CHECK(covariance(q, avg, avg, 0.0) == doctest::Approx(1.0));

  // Replay: the same seed gives the same field.
  CHECK(sampler.draw(42).values == sampler.draw(42).values);
  CHECK(sample_field(p, 42).values == sampler.draw(42).values);
}

TEST_CASE("mixing decomposition") {
  // Oracle: θ-average gives J0(sqrt(c r) f0); r-integral by tanh-sinh in r.
  auto oracle = [](double c, double f0) {
    boost::math::quadrature::tanh_sinh<double> ts;
    return ts.integrate(
        [&](double x) {
          // r = x/(1-x) maps [0,1) to [0,∞)
          if (x >= 1.0) return 0.0;
          const double r = x / (1 - x);
          const double jac = 1.0 / ((1 - x) * (1 - x));
          return 0.25 * std::exp(-r / 4) * boost::math::cyl_bessel_j(0, std::sqrt(c * r) * f0) * jac;
        },
        0.0, 1.0);
  };
  CHECK(oracle(1.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  for (double c : {0.25, 1.0, 4.0}) {
    for (double f0 : {0.0, 0.5, 1.0, 2.0}) {
      const auto m = mixing_decomposition_check(c, f0);
      CHECK(m.converged);
      CHECK(std::abs(m.lhs - m.rhs) < 1e-6);
      CHECK(std::abs(m.lhs - oracle(c, f0)) < 1e-8);
      CHECK(std::abs(m.lhs_imag) < 1e-12);
    }
  }
  CHECK(mixing_decomposition_check(4.0, 0.5).lhs == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  CHECK(mixing_decomposition_check(1.0, 0.0).lhs == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(mixing_decomposition_check(0.0, 1.0), ArgumentError);
}

TEST_CASE("ergodicity dichotomy") {
  const std::vector<int> sizes{4, 8, 16};
  auto p = noncritical(1, 4, 2.0, 4, 0.5);
  const auto rep = ergodicity_diagnostic(p, 3000, sizes, 11);
  CHECK(rep.status == Ergodicity::ergodic);
  CHECK(rep.slope == doctest::Approx(-1.0).epsilon(0.2));
  // Exact: mean over slices of C_0(iδ) / (n_tau |Λ|)
  double expect = 0.0;
  for (int i = 0; i < 4; ++i) expect += mode_covariance(0.5, 1.0, i * 0.25) / 4.0;
  CHECK(std::abs(rep.variance[0] - expect / rep.volume[0]) < 4 * rep.variance_error[0]);

  auto q = critical(1, 4, 2.0, 4, 1.0);
  const auto crit = ergodicity_diagnostic(q, 3000, sizes, 12);
  CHECK(crit.status == Ergodicity::non_ergodic);
  for (std::size_t i = 0; i < sizes.size(); ++i) CHECK(std::abs(crit.variance[i] - 1.0) < 4 * crit.variance_error[i]);

  auto z = critical(1, 4, 2.0, 4, 0.0);
  CHECK(ergodicity_diagnostic(z, 500, sizes, 13).status == Ergodicity::ergodic);
  CHECK(ergodicity_diagnostic(p, 5, sizes, 13).status == Ergodicity::inconclusive);
  CHECK_THROWS_AS(ergodicity_diagnostic(p, 100, std::vector<int>{4}, 1), ArgumentError);
}

TEST_CASE("polynomial perturbation construction") {
  SubBox box{{0, 0, 0}, {2, 2, 2}};
  CHECK_THROWS_AS(PolynomialPerturbation({0, 1, 0, 1}, 1.0, 1.0, box), ArgumentError);
  CHECK_THROWS_AS(PolynomialPerturbation({0, 0, -1}, 1.0, 1.0, box), ArgumentError);
  CHECK_THROWS_AS(PolynomialPerturbation({0, 0, 1}, -1.0, 1.0, box), ArgumentError);
  PolynomialPerturbation quartic({0, 0, -1, 0, 1}, 1.0, 1.0, box);
  CHECK(quartic.min_value() == doctest::Approx(-0.25));
  CHECK_THROWS_AS(PolynomialPerturbation({0, 0, -1, 0, 1}, 1.0, 1.0, box, [](double) { return 1.0; }), ArgumentError);
  PolynomialPerturbation shifted({0.25, 0, -1, 0, 1}, 1.0, 1.0, box, [](double r) { return std::exp(-r * r); });
  CHECK(shifted.nonlocal());

  FieldGrid g{1.0, 4, 1, 4.0, 8};
  CHECK_THROWS_AS(PolynomialPerturbation({0, 0, 1}, 1.0, 0.5, box).validate_for(g), ArgumentError);  // ε < 2a
  CHECK_THROWS_AS(PolynomialPerturbation({0, 0, 1}, 1.0, 1.0, SubBox{{0}, {9}}).validate_for(g), ArgumentError);
  PolynomialPerturbation box_kernel({0, 0, 1}, 1.0, 1.0, SubBox{{0}, {8}}, [](double r) { return r < 1.6 ? 1.0 : 0.0; });
  CHECK_THROWS_AS(box_kernel.validate_for(g), ArgumentError);
}

TEST_CASE("perturbation action") {
  auto p = noncritical(2, 6, 3.0, 4, 0.5);
  const auto s = sample_field(p, 5);
  SubBox box{{1, 1, 0}, {5, 4, 0}};
  PolynomialPerturbation zero({0, 0, 1}, 0.0, 1.0, box);
  CHECK(perturbation_action(s, zero) == 0.0);
  PolynomialPerturbation sq({0, 0, 1}, 0.3, 1.0, box);
  const double act = perturbation_action(s, sq);
  CHECK(act < 0.0);
  CHECK(act == perturbation_action_serial(s, sq));
  // Direct sum of mollified values.
  const auto phi = mollify(s, 1.0);
  double direct = 0.0;
  for (int t = 0; t < 4; ++t)
    for (std::size_t x = 0; x < p.grid.sites(); ++x)
      if (box.contains(p.grid.coords(x), 2)) direct += phi[t * p.grid.sites() + x] * phi[t * p.grid.sites() + x];
  CHECK(act == doctest::Approx(-0.3 * direct * p.grid.dtau() * p.grid.cell_volume()).epsilon(1e-12));

  // Narrow enough that the min-image table stays positive definite.
  PolynomialPerturbation nl({0, 0, 1}, 0.3, 1.0, box, [](double r) { return std::exp(-4 * r * r); });
  PolynomialPerturbation wide({0, 0, 1}, 0.3, 1.0, box, [](double r) { return std::exp(-r * r); });
  CHECK_THROWS_AS(perturbation_action(s, wide), ArgumentError);
  const double a_nl = perturbation_action(s, nl);
  CHECK(a_nl < 0.0);
  CHECK(a_nl == perturbation_action_serial(s, nl));

  FieldSample constant{p.grid, std::vector<double>(s.values.size(), 2.0), 0};
  for (double v : mollify(constant, 1.0)) CHECK(v == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("reweighting") {
  auto p = noncritical(1, 8, 4.0, 4, 0.5);
  const auto f = bump(p.grid, {2.0, 0, 0}, 0.6);
  SubBox box{{2}, {7}};
  PolynomialPerturbation free({0, 0, 1}, 0.0, 1.0, box);
  const auto r0 = reweighted_state(p, free, f, 8000, 3);
  REQUIRE(r0.real);
  CHECK(std::abs(r0.real->value - weyl_expectation(p, f)) < 4 * r0.real->error);
  CHECK(r0.ess == doctest::Approx(8000.0));

  auto q = critical(1, 8, 4.0, 4, 1.0);
  PolynomialPerturbation sq({0, 0, 1}, 0.05, 1.0, box);
  const auto rc = reweighted_state(q, sq, std::vector<double>(8, 0.0), 500, 4);
  REQUIRE(rc.real);
  CHECK(rc.real->value == 1.0);
  CHECK(rc.real->error < 1e-14);
  const auto crit_free = reweighted_state(q, free, f, 8000, 5, {.stratified = true});
  REQUIRE(crit_free.real);
  CHECK(std::abs(crit_free.real->value - weyl_expectation(q, f)) < 4 * crit_free.real->error);

  PolynomialPerturbation huge({0, 0, 1}, 1e4, 1.0, box);
  const auto refused = reweighted_state(p, huge, f, 500, 6);
  CHECK_FALSE(refused.real.has_value());
  CHECK(refused.ess < 100);
  CHECK_FALSE(refused.diagnostic.empty());
}

TEST_CASE("first-order perturbation theory for P = x^2") {
  auto p = noncritical(1, 8, 4.0, 4, 0.5);
  const auto f = bump(p.grid, {2.0, 0, 0}, 0.6);
  SubBox box{{2}, {7}};
  const double lambda = 1e-3;
  PolynomialPerturbation sq({0, 0, 1}, lambda, 1.0, box);
  const double shift = first_order_square_shift(p, sq, f);
  CHECK(shift < 0.0);
  std::vector<double> fv(f);
  auto obs = [&](const FieldSample& s) {
    const double x = s.smear(fv, 0);
    return x * x;
  };
  // Same samples, weights on and off: the difference isolates the shift.
  const std::size_t n = 40000;
  const auto on = reweighted_mean(p, sq, obs, n, 21);
  PolynomialPerturbation off({0, 0, 1}, 0.0, 1.0, box);
  const auto base = reweighted_mean(p, off, obs, n, 21);
  REQUIRE(on.real);
  REQUIRE(base.real);
  const double measured = on.real->value - base.real->value;
  MESSAGE("first-order shift: predicted " << shift << ", measured " << measured);
  CHECK(std::abs(measured - shift) < 0.1 * std::abs(shift));
}

TEST_CASE("renormalized mixing") {
  auto q = critical(1, 8, 4.0, 4, 1.0);
  SubBox box{{2}, {7}};
  PolynomialPerturbation free({0, 0, 1}, 0.0, 1.0, box);
  const auto t0 = renormalized_mixing(q, free, 6, 8, 50, 1);
  for (const auto& node : t0.nodes) CHECK(node.ratio == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(t0.var_r.value == doctest::Approx(16.0).epsilon(1e-10));

  PolynomialPerturbation sq({0, 0, 1}, 1e-2, 1.0, box);
  const auto t = renormalized_mixing(q, sq, 6, 8, 400, 2);
  CHECK(t.var_r.value > 3 * t.var_r.error);
  CHECK(t.mean_r.value < t0.mean_r.value);  // repulsive P suppresses large condensate amplitude
  // θ ↔ -θ and θ ↔ π - θ leave the weights unchanged (cos θ enters as cos²θ).
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 8; ++j) {
      const auto& a = t.nodes[i * 8 + j];
      const auto& b = t.nodes[i * 8 + (8 - j) % 8];
      const auto& c = t.nodes[i * 8 + (4 - j + 8) % 8];
      CHECK(a.ratio == doctest::Approx(b.ratio).epsilon(1e-12));
      CHECK(a.ratio == doctest::Approx(c.ratio).epsilon(1e-12));
    }
  }
  double total = 0.0;
  for (const auto& node : t.nodes) total += node.weight;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(renormalized_mixing(noncritical(1, 8, 4.0, 4, 0.5), sq, 2, 2, 10, 1), ArgumentError);
}

TEST_CASE("Gauss-Laguerre nodes") {
  const auto [x, w] = gauss_laguerre(8);
  double m0 = 0, m1 = 0, m5 = 0;
  for (int i = 0; i < 8; ++i) {
    m0 += w[i];
    m1 += w[i] * x[i];
    m5 += w[i] * std::pow(x[i], 5);
  }
  CHECK(m0 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m1 == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(m5 == doctest::Approx(120.0).epsilon(1e-12));
}

TEST_CASE("exponential moment monitor and snapshots") {
  auto p = noncritical(1, 6, 3.0, 4, 0.5);
  const auto f = bump(p.grid, {1.5, 0, 0}, 0.5);
  const auto m = log_exponential_moment(p, f, 20000, 8);
  CHECK(std::abs(m.value - 0.5 * covariance(p, f, f, 0.0)) < 4 * m.error + 1e-3);

  const auto s = sample_field(p, 99);
  const auto dir = std::filesystem::temp_directory_path() / "bose_snapshot_test";
  std::filesystem::create_directories(dir);
  export_snapshot(s, dir / "field");
  const auto back = import_snapshot(dir / "field");
  CHECK(back.values == s.values);
  CHECK(back.seed == 99);
  CHECK(back.grid.n_x == 6);
  std::filesystem::remove_all(dir);
}
