#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <map>
#include <vector>

#include "bose/gibbs.hpp"
#include "doctest.h"

using namespace bose;
using namespace bose::loops;

namespace {

// ---------------------------------------------------------------------------
// Independent oracle. Loops are compared as classes under rotation by whole
// periods; the target density of a configuration is recomputed from scratch
// as Π_loops z^j Π_links p(link) · e^{-ε}, and proposal densities are summed
// over every pathway that produces the same class.
// ---------------------------------------------------------------------------

struct Oracle {
  BoxRegion r;
  PairPotential V;
  double z;
  GibbsOptions opt;  // normalized move probabilities
  double proposal_total;

  Oracle(const MoveKernel& k)
      : r(k.region()), V(k.potential()), z(k.z()), opt(k.options()),
        proposal_total(k.intensities().proposal_total) {}

  double P(Move m) const { return opt.move_probability[static_cast<int>(m)]; }

  std::array<double, 3> disp(const Vec& a, const Vec& b) const {
    std::array<double, 3> d{0, 0, 0};
    for (int i = 0; i < r.d; ++i) {
      d[i] = b[i] - a[i];
      if (r.periodic()) d[i] -= r.L * std::round(d[i] / r.L);
    }
    return d;
  }
  double log_link_free(const Vec& a, const Vec& b) const {
    const auto d = disp(a, b);
    double s = 0.0;
    for (int i = 0; i < r.d; ++i) s += std::log(heat::gauss1(d[i], r.dtau()));
    return s;
  }
  double log_link_target(const Vec& a, const Vec& b) const {
    if (r.periodic()) return log_link_free(a, b);
    double s = 0.0;
    for (int i = 0; i < r.d; ++i) s += std::log(heat::dirichlet1(a[i], b[i], r.dtau(), r.L));
    return s;
  }
  double log_rho(const Vec& a, const Vec& b, double t) const {
    const auto d = disp(a, b);
    double s = 0.0;
    for (int i = 0; i < r.d; ++i) s += std::log(r.periodic() ? heat::periodic1(d[i], t, r.L) : heat::gauss1(d[i], t));
    return s;
  }
  double log_chain_free(const BridgeLoop& l, std::ptrdiff_t from, int links) const {
    double s = 0.0;
    for (int k = 0; k < links; ++k) s += log_link_free(l.at(from + k), l.at(from + k + 1));
    return s;
  }
  double log_loop(const BridgeLoop& l) const {
    double s = l.j * std::log(z);
    for (std::size_t k = 0; k < l.size(); ++k) s += log_link_target(l.at(k), l.at(k + 1));
    return s;
  }
  double log_pi(const LoopConfiguration& c) const {
    double s = -interaction_energy(c, V, r);
    for (const auto& l : c.loops) s += log_loop(l);
    return s;
  }

  // Forward merge density of the two loops at ia, ib into the class of C.
  double log_merge_forward(const LoopConfiguration& x, std::size_t ia, std::size_t ib, const BridgeLoop& C) const {
    const int ns = r.n_slices, m = opt.merge_links;
    const double n = static_cast<double>(x.loops.size());
    double acc = -kInf;
    for (auto [a, b] : {std::pair{ia, ib}, std::pair{ib, ia}}) {
      const auto& A = x.loops[a];
      const auto& B = x.loops[b];
      const auto MA = static_cast<std::ptrdiff_t>(A.size()), MB = static_cast<std::ptrdiff_t>(B.size());
      for (std::ptrdiff_t p = 0; p < MA; ++p) {
        for (int rr = 0; rr < B.j; ++rr) {
          const std::ptrdiff_t q = p % ns + static_cast<std::ptrdiff_t>(ns) * rr;
          for (int rot = 0; rot < C.j; ++rot) {
            const std::ptrdiff_t base = p % ns + static_cast<std::ptrdiff_t>(ns) * rot;
            bool ok = C.at(base) == A.at(p);
            for (std::ptrdiff_t t = m; ok && t <= MB; ++t) ok = C.at(base + t) == B.at(q + t);
            for (std::ptrdiff_t t = MB + m; ok && t < MA + MB; ++t) ok = C.at(base + t) == A.at(p + t - MB);
            if (!ok) continue;
            const double l1 = log_chain_free(C, base, m) - log_rho(C.at(base), C.at(base + m), m * r.dtau());
            const double l2 =
                log_chain_free(C, base + MB, m) - log_rho(C.at(base + MB), C.at(base + MB + m), m * r.dtau());
            acc = log_add_exp(acc, std::log(P(Move::merge) / (n * (n - 1.0) * MA * B.j)) + l1 + l2);
          }
        }
      }
    }
    return acc;
  }

  // Density of the bridge part of a piece when its known beads P (starting at
  // phase `phase`) match a rotation of T; -inf otherwise.
  double log_piece(const std::vector<Vec>& known, std::ptrdiff_t phase, const BridgeLoop& T) const {
    const int ns = r.n_slices, m = opt.merge_links;
    const auto MT = static_cast<std::ptrdiff_t>(T.size());
    if (static_cast<std::ptrdiff_t>(known.size()) != MT - m + 1) return -kInf;
    double acc = -kInf;
    for (int rot = 0; rot < T.j; ++rot) {
      const std::ptrdiff_t s = phase + static_cast<std::ptrdiff_t>(ns) * rot;
      bool ok = true;
      for (std::size_t t = 0; ok && t < known.size(); ++t) ok = T.at(s + static_cast<std::ptrdiff_t>(t)) == known[t];
      if (!ok) continue;
      acc = log_add_exp(acc, log_chain_free(T, s + MT - m, m) - log_rho(T.at(s + MT - m), T.at(s), m * r.dtau()));
    }
    return acc;
  }

  // Cut density of loop ic of y into the classes of A and B.
  double log_cut_forward(const LoopConfiguration& y, std::size_t ic, const BridgeLoop& A, const BridgeLoop& B) const {
    const int ns = r.n_slices, m = opt.merge_links;
    const auto& C = y.loops[ic];
    const auto MC = static_cast<std::ptrdiff_t>(C.size());
    const double n = static_cast<double>(y.loops.size());
    double acc = -kInf;
    for (std::ptrdiff_t u = 0; u < MC; ++u) {
      for (int k = 1; k < C.j; ++k) {
        const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(k) * ns, M1 = MC - K;
        std::vector<Vec> k2, k1;
        for (std::ptrdiff_t t = 0; t <= K - m; ++t) k2.push_back(C.at(u + m + t));
        for (std::ptrdiff_t t = 0; t <= M1 - m; ++t) k1.push_back(C.at(u + K + m + t));
        const std::ptrdiff_t ph = (u + m) % ns;
        const double sel = std::log(P(Move::cut) / (n * MC * (C.j - 1.0)));
        acc = log_add_exp(acc, sel + log_piece(k2, ph, B) + log_piece(k1, ph, A));
        acc = log_add_exp(acc, sel + log_piece(k2, ph, A) + log_piece(k1, ph, B));
      }
    }
    return acc;
  }

  // log R for merging loops ia, ib of x into C.
  double merge_ratio(const LoopConfiguration& x, std::size_t ia, std::size_t ib, const BridgeLoop& C) const {
    LoopConfiguration y;
    for (std::size_t i = 0; i < x.loops.size(); ++i)
      if (i != ia && i != ib) y.loops.push_back(x.loops[i]);
    y.loops.push_back(C);
    return log_pi(y) - log_pi(x) + log_cut_forward(y, y.loops.size() - 1, x.loops[ia], x.loops[ib]) -
           log_merge_forward(x, ia, ib, C);
  }

  double birth_ratio(const LoopConfiguration& x, const BridgeLoop& w) const {
    LoopConfiguration y = x;
    y.loops.push_back(w);
    const double fwd = std::log(P(Move::birth)) + w.j * std::log(z) - std::log(proposal_total) +
                       log_chain_free(w, 0, static_cast<int>(w.size()));
    const double rev = std::log(P(Move::death) / static_cast<double>(y.loops.size()));
    return log_pi(y) - log_pi(x) + rev - fwd;
  }

  double stage_ratio(const LoopConfiguration& x, std::size_t idx, const BridgeLoop& w, std::ptrdiff_t first,
                     int links) const {
    LoopConfiguration y = x;
    y.loops[idx] = w;
    return log_pi(y) - log_pi(x) + log_chain_free(x.loops[idx], first, links) - log_chain_free(w, first, links);
  }
};

BoxRegion region(Boundary b) { return BoxRegion{3, 3.0, b, 1.0, 8}; }

GibbsOptions small_options() {
  GibbsOptions o;
  o.stage_links = 4;
  o.merge_links = 4;
  return o;
}

BridgeLoop inside_loop(const BoxRegion& r, int j, Rng& rng) {
  for (;;) {
    auto l = propose_loop(r, j, rng);
    if (survival_weight(r, l) > 0.0) return l;
  }
}

LoopConfiguration mixed_configuration(const BoxRegion& r, Rng& rng) {
  LoopConfiguration c;
  for (int j : {1, 2, 1, 3, 2}) c.loops.push_back(inside_loop(r, j, rng));
  return c;
}

// Stationary frequency of x in the two-state chain {x, y} that always proposes
// the other state and accepts with min(1, e^{lr}).
Estimate two_state_frequency(double lr_xy, double lr_yx, std::uint64_t seed, std::size_t steps) {
  Rng rng(seed);
  bool at_x = true;
  std::vector<double> series;
  series.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const double lr = at_x ? lr_xy : lr_yx;
    if (lr >= 0.0 || std::log(rng.uniform()) < lr) at_x = !at_x;
    series.push_back(at_x ? 1.0 : 0.0);
  }
  return batch_means(series, 50);
}

}  // namespace

TEST_CASE("move ratios match the independent oracle") {
  for (auto b : {Boundary::periodic, Boundary::dirichlet}) {
    CAPTURE(to_string(b));
    const auto r = region(b);
    const auto V = PairPotential::gaussian(1.0, 0.5);
    const MoveKernel K(0.6, r, V, small_options());
    const Oracle O(K);
    Rng rng(derive_seed(42, to_string(b), 0));

    int merges = 0, cuts = 0, stages = 0;
    for (int trial = 0; trial < 40; ++trial) {
      const auto x = mixed_configuration(r, rng);

      const auto w = inside_loop(r, 1 + static_cast<int>(rng.index(3)), rng);
      const auto br = K.log_ratio_birth(x, w);
      CHECK(br.log_ratio == doctest::Approx(O.birth_ratio(x, w)).epsilon(1e-10));
      auto y = x;
      y.loops.push_back(w);
      CHECK(K.log_ratio_death(y, y.loops.size() - 1).log_ratio == doctest::Approx(-br.log_ratio).epsilon(1e-10));

      const std::size_t idx = rng.index(x.loops.size());
      const Vec delta{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
      const auto moved = K.translated(x.loops[idx], delta);
      if (survival_weight(r, moved) > 0.0) {
        const auto tr = K.log_ratio_replace(x, idx, moved, 0, moved.size());
        CHECK(tr.log_ratio == doctest::Approx(O.stage_ratio(x, idx, moved, 0, 0)).epsilon(1e-10));
      }

      const auto first = static_cast<std::ptrdiff_t>(rng.index(x.loops[idx].size()));
      const int links = std::min<int>(4, static_cast<int>(x.loops[idx].size()));
      if (auto st = K.restaged(x.loops[idx], first, static_cast<std::size_t>(links), rng);
          st && survival_weight(r, *st) > 0.0) {
        const auto sr = K.log_ratio_replace(x, idx, *st, first, static_cast<std::size_t>(links));
        CHECK(sr.log_ratio == doctest::Approx(O.stage_ratio(x, idx, *st, first, links)).epsilon(1e-10));
        ++stages;
      }

      if (auto mp = K.propose_merge(x, rng)) {
        const auto mr = K.log_ratio_merge(x, *mp);
        if (std::isfinite(mr.log_ratio)) {
          CHECK(mr.log_ratio == doctest::Approx(O.merge_ratio(x, mp->a, mp->b, mp->merged)).epsilon(1e-10));
          ++merges;
          // Reverse move: cut the merged loop back into the original classes.
          LoopConfiguration y2;
          for (std::size_t i = 0; i < x.loops.size(); ++i)
            if (i != mp->a && i != mp->b) y2.loops.push_back(x.loops[i]);
          y2.loops.push_back(mp->merged);
          const auto& A = x.loops[mp->a];
          const auto& B = x.loops[mp->b];
          const int m = K.merge_links();
          std::vector<Vec> i1, i2;
          for (int t = 1; t < m; ++t) i1.push_back(A.at(mp->p + t));
          for (int t = 1; t < m; ++t) i2.push_back(B.at(mp->q + t));
          const auto cp = K.assemble_cut(mp->merged, y2.loops.size() - 1, mp->p % r.n_slices, B.j, i1, i2);
          CHECK(K.log_ratio_cut(y2, cp).log_ratio == doctest::Approx(-mr.log_ratio).epsilon(1e-10));
        }
      }

      if (auto cp = K.propose_cut(x, rng)) {
        const auto cr = K.log_ratio_cut(x, *cp);
        if (std::isfinite(cr.log_ratio)) {
          LoopConfiguration x2;
          for (std::size_t i = 0; i < x.loops.size(); ++i)
            if (i != cp->c) x2.loops.push_back(x.loops[i]);
          x2.loops.push_back(cp->piece1);
          x2.loops.push_back(cp->piece2);
          const double o = O.merge_ratio(x2, x2.loops.size() - 2, x2.loops.size() - 1, x.loops[cp->c]);
          CHECK(cr.log_ratio == doctest::Approx(-o).epsilon(1e-10));
          ++cuts;
        }
      }
    }
    CHECK(merges > 10);
    CHECK(cuts > 10);
    CHECK(stages > 10);
  }
}

TEST_CASE("incremental energy changes match full recomputation") {
  const auto r = region(Boundary::periodic);
  const auto V = PairPotential::gaussian(1.0, 0.5);
  const MoveKernel K(0.6, r, V, small_options());
  Rng rng(5);
  const auto x = mixed_configuration(r, rng);
  const double e0 = interaction_energy(x, V, r);
  for (int t = 0; t < 20; ++t) {
    if (auto mp = K.propose_merge(x, rng)) {
      LoopConfiguration y;
      for (std::size_t i = 0; i < x.loops.size(); ++i)
        if (i != mp->a && i != mp->b) y.loops.push_back(x.loops[i]);
      y.loops.push_back(mp->merged);
      CHECK(K.log_ratio_merge(x, *mp).energy_change ==
            doctest::Approx(interaction_energy(y, V, r) - e0).epsilon(1e-10));
    }
  }
}

TEST_CASE("two-state reductions satisfy detailed balance") {
  const auto r = region(Boundary::periodic);
  const auto V = PairPotential::gaussian(0.5, 0.5);
  const MoveKernel K(0.6, r, V, small_options());
  const Oracle O(K);
  Rng rng(77);
  int tested = 0;
  for (int trial = 0; trial < 200 && tested < 3; ++trial) {
    const auto x = mixed_configuration(r, rng);
    auto mp = K.propose_merge(x, rng);
    if (!mp) continue;
    const double lr = K.log_ratio_merge(x, *mp).log_ratio;
    if (!(std::abs(lr) < 2.0)) continue;
    const double oracle = O.merge_ratio(x, mp->a, mp->b, mp->merged);
    const auto f = two_state_frequency(lr, -lr, derive_seed(9, "two-state", static_cast<std::uint64_t>(trial)),
                                       200000);
    const double expect = 1.0 / (1.0 + std::exp(oracle));
    CHECK(std::abs(f.value - expect) < 3.0 * f.error);
    ++tested;
  }
  CHECK(tested == 3);

  // Birth/death pair.
  const auto x = mixed_configuration(r, rng);
  const auto w = inside_loop(r, 1, rng);
  const double lr = K.log_ratio_birth(x, w).log_ratio;
  auto y = x;
  y.loops.push_back(w);
  const double back = K.log_ratio_death(y, y.loops.size() - 1).log_ratio;
  const auto f = two_state_frequency(lr, back, 31, 200000);
  CHECK(std::abs(f.value - 1.0 / (1.0 + std::exp(O.birth_ratio(x, w)))) < 3.0 * f.error);
}

TEST_CASE("V = 0 chain reproduces the free Poisson measure") {
  for (auto b : {Boundary::periodic, Boundary::dirichlet}) {
    CAPTURE(to_string(b));
    const BoxRegion r{3, 4.0, b, 1.0, 8};
    const double z = 0.6;
    GibbsOptions o = small_options();
    const auto run = gibbs_sample(z, r, PairPotential::none(), 20000, 8, o, 500, 2, false);
    const auto nu = LoopIntensities::make(z, r);
    double mean_n = 0.0, mean_loops = 0.0;
    for (int j = 1; j <= nu.j_max; ++j) {
      mean_n += j * nu.nu[j];
      mean_loops += nu.nu[j];
    }
    const auto N = batch_means(run.particle_number, 40);
    const auto C = batch_means(run.loop_count, 40);
    CHECK(std::abs(N.value - mean_n) < 3.0 * N.error);
    CHECK(std::abs(C.value - mean_loops) < 3.0 * C.error);

    // Two-sample chi-square on the loop-count histogram, with the chain counts
    // scaled down to their effective sample size.
    const double tau = std::max(1.0, integrated_autocorrelation_time(run.loop_count));
    std::map<long, double> chain, direct;
    for (double c : run.loop_count) chain[static_cast<long>(c)] += 1.0;
    const std::size_t n_direct = 20000;
    for (std::size_t s = 0; s < n_direct; ++s)
      direct[static_cast<long>(sample_free_poisson(nu, r, derive_seed(3, "direct", s)).loops.size())] += 1.0;
    const double n1 = static_cast<double>(run.loop_count.size()) / (2.0 * tau), n2 = n_direct;
    double chi2 = 0.0;
    int bins = 0;
    std::map<long, std::pair<double, double>> merged;
    for (auto [k, v] : chain) merged[std::min(k, 6L)].first += v / (2.0 * tau);
    for (auto [k, v] : direct) merged[std::min(k, 6L)].second += v;
    for (auto [k, pr] : merged) {
      const double a = pr.first, c = pr.second;
      if (a + c < 5.0) continue;
      const double t = std::sqrt(n2 / n1) * a - std::sqrt(n1 / n2) * c;
      chi2 += t * t / (a + c);
      ++bins;
    }
    REQUIRE(bins >= 3);
    const double p = 1.0 - boost::math::cdf(boost::math::chi_squared(bins - 1), chi2);
    CHECK(p > 0.01);
  }
}

TEST_CASE("hard core lowers the density; running energy stays exact") {
  const BoxRegion r{3, 3.0, Boundary::periodic, 1.0, 8};
  const double z = 0.6;
  const auto hc = gibbs_sample(z, r, PairPotential::hard_core(0.6), 6000, 12, small_options(), 300, 2, false);
  const auto nu = LoopIntensities::make(z, r);
  double free_n = 0.0;
  for (int j = 1; j <= nu.j_max; ++j) free_n += j * nu.nu[j];
  const auto N = batch_means(hc.particle_number, 30);
  CHECK(N.value + 3.0 * N.error < free_n);

  GibbsChain chain(z, r, PairPotential::gaussian(1.0, 0.5), 4, small_options());
  chain.run(2000);
  const double running = chain.energy();
  CHECK(running == doctest::Approx(chain.recompute_energy()).epsilon(1e-9));
  CHECK(chain.energy() >= -r.beta * 0.5 * chain.particle_number());
}

TEST_CASE("chains are deterministic and checkpoints resume exactly") {
  const BoxRegion r{3, 3.0, Boundary::dirichlet, 1.0, 8};
  const auto V = PairPotential::gaussian(1.0, 0.5);
  GibbsChain a(0.5, r, V, 2024, small_options());
  GibbsChain b(0.5, r, V, 2024, small_options());
  a.run(300);
  b.run(300);
  CHECK(a.csv_row() == b.csv_row());

  const auto dir = std::filesystem::temp_directory_path() / "bose_test_gibbs";
  std::filesystem::create_directories(dir);
  a.save_checkpoint(dir / "chain");
  CHECK(std::filesystem::exists(dir / "chain.bin"));
  CHECK(std::filesystem::exists(dir / "chain.json"));
  auto c = GibbsChain::load_checkpoint(dir / "chain", V, small_options());
  CHECK(c.csv_row() == a.csv_row());
  a.run(200);
  c.run(200);
  CHECK(c.csv_row() == a.csv_row());
  CHECK_THROWS_AS((void)GibbsChain::load_checkpoint(dir / "chain", PairPotential::hard_core(0.3), small_options()),
                  ConfigError);
  std::filesystem::remove_all(dir);

  CHECK(GibbsChain::csv_header().rfind("sweep,N,loop_count,energy,", 0) == 0);
}

TEST_CASE("sustained low acceptance raises a tuning error") {
  const BoxRegion r{3, 3.0, Boundary::periodic, 1.0, 8};
  GibbsOptions o = small_options();
  o.health_window = 50;
  o.min_acceptance = 0.99;
  GibbsChain chain(0.5, r, PairPotential::none(), 1, o);
  CHECK_THROWS_AS(chain.run(100), ChainError);

  GibbsOptions bad = small_options();
  bad.merge_links = 9;
  CHECK_THROWS_AS(GibbsChain(0.5, r, PairPotential::none(), 1, bad), ArgumentError);
}
