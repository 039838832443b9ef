#include <cmath>
#include <vector>

#include "bose/kernels.hpp"
#include "bose/loop_observables.hpp"
#include "doctest.h"

using namespace bose;
using namespace bose::loops;

namespace {

std::vector<LoopConfiguration> free_draws(double z, const BoxRegion& r, std::size_t n, std::uint64_t seed) {
  const auto nu = LoopIntensities::make(z, r);
  std::vector<LoopConfiguration> out(n);
  for (std::size_t s = 0; s < n; ++s) out[s] = sample_free_poisson(nu, r, derive_seed(seed, "draw", s));
  return out;
}

// Periodic V = 0 bridge weights are exact, so a tiny relative slack covers
// the winding truncation.
bool within(Estimate a, double b, double k = 3.0) { return std::abs(a.value - b) <= k * a.error + 1e-8 * std::abs(b); }

GibbsOptions opts() {
  GibbsOptions o;
  o.stage_links = 4;
  o.merge_links = 4;
  return o;
}

}  // namespace

TEST_CASE("moments of the free loop gas") {
  const BoxRegion r{3, 8.0, Boundary::periodic, 1.0, 8};
  const double z = 0.5;
  const auto samples = free_draws(z, r, 20000, 1);
  const SpaceTimeBump f{{2.0, 2.0, 2.0}, 0.5, 1.0, 0.0, 1.0};
  const SpaceTimeBump g{{6.0, 6.0, 6.0}, 0.4, 2.0, 0.0, 0.5};

  const std::vector<SpaceTimeBump> one{f};
  const auto m1 = moment_estimate(samples, one, r);
  CHECK(within(m1.value, free_pairing_mean(f, LoopIntensities::make(z, r), r)));
  CHECK(m1.value.value >= 0.0);
  CHECK_FALSE(m1.disjoint_supports);

  const std::vector<SpaceTimeBump> two{f, g};
  CHECK(f.disjoint(g, r));
  const auto m2 = moment_estimate(samples, two, r);
  CHECK(m2.disjoint_supports);
  CHECK(m2.value.value >= 0.0);
  CHECK(std::abs(m2.value.value - m2.product_of_singles.value) <=
        3.0 * std::hypot(m2.value.error, m2.product_of_singles.error));
}

TEST_CASE("integration by parts at V = 0") {
  const BoxRegion r{3, 4.0, Boundary::periodic, 1.0, 8};
  const double z = 0.5;
  const SpaceTimeBump f{{2.0, 2.0, 2.0}, 0.45, 1.5, 0.0, 1.0};
  const SpaceTimeBump g{{2.3, 1.8, 2.0}, 0.5, 1.0, 0.2, 0.9};
  const SpaceTimeBump h{{1.6, 2.2, 2.4}, 0.4, 2.0, 0.0, 0.6};
  IbpOptions o;
  o.n_samples = 8000;

  const auto trivial = integration_by_parts_check(z, r, PairPotential::none(), f, {CylKind::one, g},
                                                  {CylKind::one, h}, 3, o);
  CHECK(trivial.rhs.value == 0.0);
  CHECK(trivial.pass);

  const std::vector<std::pair<CylKind, CylKind>> family{{CylKind::linear, CylKind::one},
                                                        {CylKind::one, CylKind::exp_neg},
                                                        {CylKind::square, CylKind::cosine},
                                                        {CylKind::cosine, CylKind::linear}};
  std::uint64_t seed = 10;
  for (auto [a, b] : family) {
    CAPTURE(to_string(a));
    CAPTURE(to_string(b));
    const auto res = integration_by_parts_check(z, r, PairPotential::none(), f, {a, g}, {b, h}, ++seed, o);
    CHECK(res.pass);
  }
}

TEST_CASE("integration by parts with a soft repulsion and on a Dirichlet box") {
  const SpaceTimeBump f{{1.5, 1.5, 1.5}, 0.35, 1.5, 0.0, 1.0};
  const SpaceTimeBump g{{1.7, 1.4, 1.5}, 0.35, 1.0, 0.0, 1.0};
  IbpOptions o;
  o.n_samples = 6000;
  o.chain = opts();
  const BoxRegion per{3, 3.0, Boundary::periodic, 1.0, 8};
  const auto soft = integration_by_parts_check(0.5, per, PairPotential::gaussian(1.0, 0.5), f,
                                               {CylKind::one, g}, {CylKind::exp_neg, g}, 5, o);
  CHECK(soft.pass);
  CHECK(std::abs(soft.rhs.value) > 2.0 * soft.rhs.error);  // the identity is not trivially 0 = 0

  o.mean_mc = 2000;
  const BoxRegion dir{3, 3.0, Boundary::dirichlet, 1.0, 8};
  const auto d = integration_by_parts_check(0.6, dir, PairPotential::none(), f, {CylKind::linear, g},
                                            {CylKind::one, g}, 6, o);
  CHECK(d.pass);
}

TEST_CASE("open-path energy agrees with the leg-by-leg trapezoid") {
  const BoxRegion r{3, 4.0, Boundary::periodic, 1.0, 8};
  const auto V = PairPotential::gaussian(1.0, 0.6);
  Rng rng(4);
  const int j = 3, ns = r.n_slices, M = j * ns;
  std::vector<Vec> path(M + 1, Vec{0, 0, 0});
  path[0] = {1.0, 1.0, 1.0};
  path[M] = {1.5, 1.2, 0.8};
  fill_bridge(path, r.dtau(), 3, rng);
  for (auto& p : path) p = wrap(r, p);
  LoopConfiguration c;
  c.loops.push_back(propose_loop(r, 2, rng));

  double ref = 0.0;
  for (int a = 0; a < j; ++a) {
    for (int b = a + 1; b < j; ++b) {
      for (int s = 0; s <= ns; ++s) {
        const double w = (s == 0 || s == ns) ? 0.5 : 1.0;
        ref += r.dtau() * w * V.of_squared(distance2(r, path[a * ns + s], path[b * ns + s]));
      }
    }
  }
  for (int k = 0; k <= M; ++k) {
    const double w = (k == 0 || k == M) ? 0.5 : 1.0;
    for (std::size_t b = k % ns; b < c.loops[0].size(); b += ns)
      ref += r.dtau() * w * V.of_squared(distance2(r, path[k], c.loops[0].beads[b]));
  }
  CHECK(open_path_energy(path, c, V, r) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("reduced density matrix at V = 0") {
  for (auto b : {Boundary::periodic, Boundary::dirichlet}) {
    CAPTURE(to_string(b));
    const BoxRegion r{3, 3.0, b, 1.0, 8};
    const double z = 0.5;
    const Vec x{1.5, 1.4, 1.6}, y{1.9, 1.0, 1.2};
    const auto rxy = reduced_density_matrix(z, r, PairPotential::none(), {}, x, y, 20000, 1);
    const auto ryx = reduced_density_matrix(z, r, PairPotential::none(), {}, y, x, 20000, 2);
    CHECK(within(rxy.value, rxy.exact_free));
    CHECK(std::abs(rxy.value.value - ryx.value.value) <= 3.0 * std::hypot(rxy.value.error, ryx.value.error) + 1e-14);
    CHECK_FALSE(rxy.upper_bound);

    const auto diag = reduced_density_matrix(z, r, PairPotential::none(), {}, x, x, 20000, 3);
    CHECK(within(diag.value, free_rdm(z, r, x, x)));

    // ∫ρ(x|x) = Σ_j z^j M_j = ⟨N⟩ of the free gas.
    double n_free = 0.0;
    for (int j = 1; j < 100; ++j) n_free += std::pow(z, j) * bridge_mass(r, j);
    CHECK(within(rdm_trace(z, r, PairPotential::none(), {}, 40000, 4), n_free));
  }
}

TEST_CASE("reduced density matrix with interactions") {
  const BoxRegion r{3, 3.0, Boundary::periodic, 1.0, 8};
  const double z = 0.6;
  const auto V = PairPotential::gaussian(1.0, 0.5);
  const auto run = gibbs_sample(z, r, V, 4000, 21, opts(), 300, 3);
  const auto tr = rdm_trace(z, r, V, run.samples, 4, 5, 40);
  const auto N = batch_means(run.particle_number, 40);
  CHECK(std::abs(tr.value - N.value) <= 3.0 * std::hypot(tr.error, N.error));

  const Vec x{1.0, 1.0, 1.0}, y{1.5, 1.2, 1.0};
  const auto a = reduced_density_matrix(z, r, V, run.samples, x, y, 4, 6, 40);
  const auto b = reduced_density_matrix(z, r, V, run.samples, y, x, 4, 7, 40);
  CHECK(std::abs(a.value.value - b.value.value) <= 3.0 * std::hypot(a.value.error, b.value.error));
  CHECK(a.value.value < a.exact_free);

  // A hard core that covers the whole box kills every bridge: only a bound survives.
  LoopConfiguration blocker;
  blocker.loops.push_back(propose_loop(r, 1, *std::make_unique<Rng>(1)));
  const std::vector<LoopConfiguration> blocked{blocker};
  const auto ub = reduced_density_matrix(z, r, PairPotential::hard_core(2.7), blocked, x, y, 100, 8);
  CHECK(ub.upper_bound);
  CHECK(ub.bound >= 0.0);
}

TEST_CASE("window densities from samples match the exact V = 0 values") {
  for (auto b : {Boundary::periodic, Boundary::dirichlet}) {
    CAPTURE(to_string(b));
    const BoxRegion r{3, 4.0, b, 1.0, 8};
    const double z = 0.6;
    const auto samples = free_draws(z, r, 20000, 9);
    for (auto where : {WindowPlacement::centered, WindowPlacement::wall}) {
      const auto est = window_density_mc(samples, r, 2.0, where);
      CHECK(within(est, window_density_exact(z, r, 2.0, where)));
    }
  }
}

TEST_CASE("first-order density shift equals minus the free covariance of N and energy") {
  const BoxRegion r{3, 3.0, Boundary::periodic, 1.0, 8};
  const double z = 0.6;
  const auto V = PairPotential::gaussian(0.1, 0.5);
  const auto samples = free_draws(z, r, 40000, 12);
  std::vector<double> n(samples.size()), e(samples.size());
  kernels::for_each_index(samples.size(), [&](std::size_t s) {
    n[s] = static_cast<double>(samples[s].particle_number());
    e[s] = interaction_energy(samples[s], V, r);
  });
  RunningStats sn, se;
  for (std::size_t s = 0; s < n.size(); ++s) {
    sn.add(n[s]);
    se.add(e[s]);
  }
  std::vector<double> prod(n.size());
  for (std::size_t s = 0; s < n.size(); ++s) prod[s] = (n[s] - sn.mean()) * (e[s] - se.mean());
  const auto cov = batch_means(prod, 40);

  const auto run = gibbs_sample_chains(2, z, r, V, 20000, 13, opts(), 300, 2, false);
  const auto nv = batch_means(run.particle_number, 40);
  const double shift = nv.value - sn.mean();
  const double err = std::hypot(nv.error, sn.std_error());
  CHECK(cov.value > 0.0);
  CHECK(std::abs(shift + cov.value) <= 3.0 * std::hypot(err, cov.error));
}
