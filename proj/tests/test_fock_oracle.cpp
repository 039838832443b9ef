#include <cmath>
#include <numeric>
#include <vector>

#include "bose/fock_oracle.hpp"
#include "bose/spectral_gas.hpp"
#include "doctest.h"

using namespace bose;
using namespace bose::fock;

namespace {

// Mean-field reduction: with V̂ ≡ v the energy separates into single-mode
// terms (λ_k+μ)n - v n²/(2V) plus v(2N² - N)/(2V). Convolving the single-mode
// weights over N gives Z and ⟨n_k⟩ without touching the product space.
struct MeanField {
  double logZ;
  std::vector<double> occ;
};

MeanField mean_field_oracle(const std::vector<double>& lam, int n_max, double beta, double mu, double v,
                            double volume) {
  const std::size_t m = lam.size();
  auto mode_weights = [&](std::size_t k) {
    std::vector<double> w(n_max + 1);
    for (int n = 0; n <= n_max; ++n) w[n] = std::exp(-beta * ((lam[k] + mu) * n - v * n * n / (2 * volume)));
    return w;
  };
  auto convolve = [](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> c(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
    return c;
  };
  auto n_factor = [&](std::size_t N) {
    const double x = static_cast<double>(N);
    return std::exp(-beta * v * (2 * x * x - x) / (2 * volume));
  };
  std::vector<double> all{1.0};
  for (std::size_t k = 0; k < m; ++k) all = convolve(all, mode_weights(k));
  double Z = 0.0;
  for (std::size_t N = 0; N < all.size(); ++N) Z += all[N] * n_factor(N);
  MeanField out{std::log(Z), {}};
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<double> rest{1.0};
    for (std::size_t q = 0; q < m; ++q)
      if (q != k) rest = convolve(rest, mode_weights(q));
    const auto wk = mode_weights(k);
    double num = 0.0;
    for (int n = 0; n <= n_max; ++n)
      for (std::size_t r = 0; r < rest.size(); ++r) num += n * wk[n] * rest[r] * n_factor(n + r);
    out.occ.push_back(num / Z);
  }
  return out;
}

double truncated_bose(double lam, double beta, double mu, int n_max) {
  const double q = std::exp(-beta * (lam + mu));
  return q / (1 - q) - (n_max + 1) * std::pow(q, n_max + 1) / (1 - std::pow(q, n_max + 1));
}

}  // namespace

TEST_CASE("single mode geometric series") {
  TruncatedFock f{{0.0}, 60};
  const double Z = exact_partition(f, 1.0, 1.0, nullptr);
  CHECK(std::abs(Z - 1.0 / (1.0 - std::exp(-1.0))) < 1e-15 * Z + 1e-15);
  const auto hist = exact_zero_mode_statistics(f, 1.0, 1.0, nullptr);
  for (int n = 0; n < 10; ++n) {
    CHECK(hist[n] == doctest::Approx((1 - std::exp(-1.0)) * std::exp(-n)).epsilon(1e-13));
  }
}

TEST_CASE("free enumeration matches the spectral pressure on shared modes") {
  // Lowest two modes of the d=3, L=20 torus.
  auto spec = spectral::build_torus_spectrum({3, 20.0, 1});
  std::vector<double> modes(spec.eigenvalues.begin(), spec.eigenvalues.begin() + 2);
  TruncatedFock f{modes, 360};
  const auto shared = spectral::make_spectrum(modes, 8000.0);
  const double lz = exact_log_partition(f, 1.0, 0.1, nullptr);
  CHECK(std::abs(lz - spectral::pressure(shared, 1.0, 0.1) * 8000.0) < 1e-12 * std::abs(lz));

  TruncatedFock g{{0.0, 1.0, 1.0}, 40};
  const auto s3 = spectral::make_spectrum(g.energies, 2 * kPi);
  CHECK(std::abs(exact_log_partition(g, 1.0, 1.0, nullptr) - spectral::pressure(s3, 1.0, 1.0) * 2 * kPi) < 1e-13);
}

TEST_CASE("free occupations are truncated Bose-Einstein; degenerate modes agree") {
  TruncatedFock f{{0.0, 0.3, 0.3, 0.9}, 12};
  const auto r = enumerate(f, 1.0, 0.4, nullptr, {.allow_truncation = true});
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(r.occupations[k] == doctest::Approx(truncated_bose(f.energies[k], 1.0, 0.4, 12)).epsilon(1e-10));
  }
  CHECK(r.occupations[1] == doctest::Approx(r.occupations[2]).epsilon(1e-13));
  CHECK(std::accumulate(r.occupations.begin(), r.occupations.end(), 0.0) == doctest::Approx(r.mean_N).epsilon(1e-13));
  double total = 0.0;
  for (double p : r.n0_histogram) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    total += p;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("mean-field interaction matches the N-resummed reduction") {
  const std::vector<double> lam{0.0, 0.2, 0.5};
  const int n_max = 14;
  const double v = 0.7, volume = 5.0, beta = 1.3, mu = 0.25;
  TruncatedFock f{lam, n_max};
  const auto inter = DiagonalInteraction::uniform(lam.size(), v, volume);
  const auto r = enumerate(f, beta, mu, &inter, {.allow_truncation = true});
  const auto oracle = mean_field_oracle(lam, n_max, beta, mu, v, volume);
  CHECK(r.logZ == doctest::Approx(oracle.logZ).epsilon(1e-12));
  for (std::size_t k = 0; k < lam.size(); ++k) CHECK(r.occupations[k] == doctest::Approx(oracle.occ[k]).epsilon(1e-11));
}

TEST_CASE("repulsion lowers Z") {
  TruncatedFock f{{0.0, 0.5}, 30};
  const FockOptions loose{.allow_truncation = true};
  const double free_lz = exact_log_partition(f, 1.0, 0.2, nullptr, loose);
  const auto inter = DiagonalInteraction::uniform(2, 5.0, 1.0);
  CHECK(exact_log_partition(f, 1.0, 0.2, &inter, loose) < free_lz);
}

TEST_CASE("thermodynamic consistency -dlnZ/d(beta mu) = <N>") {
  TruncatedFock f{{0.0, 0.4, 0.4, 1.1}, 25};
  const auto inter = DiagonalInteraction::uniform(4, 0.3, 4.0);
  const double beta = 1.0, mu = 0.5, h = 1e-5;
  for (const DiagonalInteraction* v : {static_cast<const DiagonalInteraction*>(nullptr), &inter}) {
    const double fd = -(exact_log_partition(f, beta, mu + h, v, {.allow_truncation = true}) -
                        exact_log_partition(f, beta, mu - h, v, {.allow_truncation = true})) /
                      (2 * h * beta);
    CHECK(std::abs(fd - enumerate(f, beta, mu, v, {.allow_truncation = true}).mean_N) < 1e-8);
  }
}

TEST_CASE("errors and truncation behaviour") {
  CHECK_THROWS_AS(exact_log_partition({{0.0, 0.1}, 5}, 1.0, 0.01, nullptr), TruncationError);
  CHECK_THROWS_AS(exact_log_partition({std::vector<double>(8, 0.0), 20}, 1.0, 1.0, nullptr), ResourceError);
  CHECK_THROWS_AS(exact_log_partition({{0.0}, 10}, 0.0, 1.0, nullptr), ArgumentError);
  double prev = -kInf;
  for (int n = 2; n <= 40; n += 2) {
    const double lz = exact_log_partition({{0.0, 0.2}, n}, 1.0, 0.3, nullptr, {.allow_truncation = true});
    CHECK(lz > prev);
    prev = lz;
  }
  const double full = exact_log_partition({{0.0, 0.2}, 200}, 1.0, 0.3, nullptr);
  CHECK(std::abs(prev - full) < 2e-5);
}

TEST_CASE("zero-mode histogram") {
  const auto hist = exact_zero_mode_statistics({{0.0, 0.3}, 20}, 1.0, 8.0, nullptr);
  CHECK(hist[0] > 0.999);
  const double mu = 0.05;
  const auto geo = exact_zero_mode_statistics({{0.0, 1.0}, 800}, 1.0, mu, nullptr);
  for (int n = 0; n < 50; n += 7) CHECK(geo[n] == doctest::Approx((1 - std::exp(-mu)) * std::exp(-mu * n)).epsilon(1e-10));
}

TEST_CASE("repulsion at fixed <N> (observed, not asserted)") {
  TruncatedFock f{{0.0, 0.2, 0.2}, 70};
  const double target = 3.0;
  const double mu_free = solve_mu_for_mean_N(f, 1.0, target, nullptr);
  const auto inter = DiagonalInteraction::uniform(3, 0.5, 2.0);
  const double mu_int = solve_mu_for_mean_N(f, 1.0, target, &inter);
  const auto a = enumerate(f, 1.0, mu_free, nullptr);
  const auto b = enumerate(f, 1.0, mu_int, &inter);
  CHECK(a.mean_N == doctest::Approx(target).epsilon(1e-9));
  CHECK(b.mean_N == doctest::Approx(target).epsilon(1e-9));
  auto var = [](const std::vector<double>& h) {
    double m = 0, m2 = 0;
    for (std::size_t n = 0; n < h.size(); ++n) {
      m += n * h[n];
      m2 += n * n * h[n];
    }
    return m2 - m * m;
  };
  MESSAGE("Var(n0) free = " << var(a.n0_histogram) << ", repulsive = " << var(b.n0_histogram));
}

TEST_CASE("parallel enumeration agrees with the serial reference") {
  TruncatedFock f{{0.0, 0.3, 0.7}, 15};
  const auto inter = DiagonalInteraction::uniform(3, 0.4, 3.0);
  const auto a = enumerate(f, 1.0, 0.3, &inter, {.allow_truncation = true});
  const auto b = enumerate_serial(f, 1.0, 0.3, &inter, {.allow_truncation = true});
  CHECK(a.logZ == doctest::Approx(b.logZ).epsilon(1e-13));
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.occupations[k] == doctest::Approx(b.occupations[k]).epsilon(1e-12));
  const auto j = to_json(a);
  CHECK(j.contains("n0_histogram"));
  CHECK(j["occupations"].size() == 3);
}
