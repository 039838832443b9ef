#include "bose/small_activity.hpp"

#include <fmt/format.h>

#include "bose/kernels.hpp"
#include "bose/loop_gas.hpp"

namespace bose::series {

using loops::BridgeLoop;
using loops::LoopConfiguration;

namespace {

constexpr std::size_t kBatches = 64;

// Mean of g over n_mc draws, split into fixed seeded batches merged in order.
template <class Draw>
Estimate batched_mean(std::size_t n_mc, std::uint64_t seed, std::string_view tag, Draw draw) {
  if (n_mc < 2) throw ArgumentError("Monte Carlo needs at least two samples");
  const std::size_t nb = std::min(kBatches, n_mc);
  std::vector<RunningStats> parts(nb);
  kernels::for_each_index(nb, [&](std::size_t b) {
    Rng rng(derive_seed(seed, tag, b));
    const std::size_t count = n_mc / nb + (b < n_mc % nb ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i) parts[b].add(draw(rng));
  });
  RunningStats all;
  for (const auto& p : parts) all.merge(p);
  return all.estimate();
}

// Loop of winding j with bead 0 at x: a proposal bridge shifted onto x, or a
// point loop in static mode.
BridgeLoop loop_at(const BoxRegion& r, int j, const Vec& x, bool fixed_point, Rng& rng) {
  BridgeLoop l;
  l.j = j;
  if (fixed_point) {
    l.beads.assign(static_cast<std::size_t>(j) * r.n_slices, x);
    return l;
  }
  l = loops::propose_loop(r, j, rng);
  const Vec b0 = l.beads[0];
  for (auto& b : l.beads) {
    for (int i = 0; i < r.d; ++i) b[i] += x[i] - b0[i];
    if (r.periodic()) b = loops::wrap(r, b);
  }
  return l;
}

double q_of(const BoxRegion& r, const BridgeLoop& l) {
  if (r.periodic()) return 1.0;
  for (const auto& b : l.beads)
    for (int i = 0; i < r.d; ++i)
      if (!(b[i] > 0.0 && b[i] < r.L)) return 0.0;
  return loops::survival_weight(r, l);
}

Vec uniform_base(const BoxRegion& r, Rng& rng) {
  Vec x{0, 0, 0};
  for (int i = 0; i < r.d; ++i) {
    do {
      x[i] = rng.uniform(0.0, r.L);
    } while (!r.periodic() && x[i] == 0.0);
  }
  return x;
}

// Side of the cube for relative displacements; capped at L for tori, where
// it then covers the whole box exactly.
double cube_side(const BoxRegion& r, double reach) { return r.periodic() ? std::min(r.L, 2.0 * reach) : 2.0 * reach; }

Vec shifted(const BoxRegion& r, const Vec& x, double side, Rng& rng) {
  Vec y = x;
  for (int i = 0; i < r.d; ++i) y[i] += rng.uniform(-0.5 * side, 0.5 * side);
  return r.periodic() ? loops::wrap(r, y) : y;
}

double mayer(double w) { return std::isinf(w) ? -1.0 : std::expm1(-w); }
double boltzmann(double u) { return std::isinf(u) ? 0.0 : std::exp(-u); }

double reach(const PairPotential& V, const BoxRegion& r, std::initializer_list<int> js, bool fixed_point) {
  double R = effective_range(V);
  if (!fixed_point)
    for (int j : js) R += 6.0 * std::sqrt(0.5 * j * r.beta);
  return R;
}

double density_per_volume(const BoxRegion& r, int j) { return loops::proposal_mass(r, j) / r.volume(); }

// (1/j)∫dW_j e^{-U} per volume.
Estimate self_sector(int j, const PairPotential& V, const BoxRegion& r, const MayerOptions& opt) {
  const auto e = batched_mean(opt.n_mc, opt.seed, fmt::format("self-{}", j), [&](Rng& rng) {
    const auto l = loop_at(r, j, uniform_base(r, rng), false, rng);
    const double q = q_of(r, l);
    if (q == 0.0) return 0.0;
    return q * (V.is_zero() ? 1.0 : boltzmann(loops::self_energy(l, V, r)));
  });
  const double c = loops::proposal_mass(r, j) / j / r.volume();
  return {c * e.value, c * e.error};
}

// c ∫∫ dW_{j1} dW_{j2} e^{-U1-U2} g(f) per volume.
template <class G>
Estimate pair_sector(int j1, int j2, double c, const PairPotential& V, const BoxRegion& r, const MayerOptions& opt,
                     std::string_view tag, G g) {
  const double side = cube_side(r, reach(V, r, {j1, j2}, opt.static_paths));
  const auto e = batched_mean(opt.n_mc, opt.seed, tag, [&](Rng& rng) {
    const Vec x1 = uniform_base(r, rng);
    const auto a = loop_at(r, j1, x1, opt.static_paths, rng);
    const auto b = loop_at(r, j2, shifted(r, x1, side, rng), opt.static_paths, rng);
    const double q = q_of(r, a) * q_of(r, b);
    if (q == 0.0) return 0.0;
    const double u = (j1 > 1 ? loops::self_energy(a, V, r) : 0.0) + (j2 > 1 ? loops::self_energy(b, V, r) : 0.0);
    return q * boltzmann(u) * g(mayer(loops::pair_energy(a, b, V, r)));
  });
  const double k = c * density_per_volume(r, j1) * density_per_volume(r, j2) * std::pow(side, r.d);
  return {k * e.value, k * e.error};
}

Estimate triple_sector(const PairPotential& V, const BoxRegion& r, const MayerOptions& opt) {
  const double R = reach(V, r, {1, 1}, opt.static_paths);
  const double s2 = cube_side(r, R), s3 = cube_side(r, 2.0 * R);
  const auto e = batched_mean(opt.n_mc, opt.seed, "1+1+1", [&](Rng& rng) {
    const Vec x1 = uniform_base(r, rng);
    const auto a = loop_at(r, 1, x1, opt.static_paths, rng);
    const auto b = loop_at(r, 1, shifted(r, x1, s2, rng), opt.static_paths, rng);
    const auto c = loop_at(r, 1, shifted(r, x1, s3, rng), opt.static_paths, rng);
    const double q = q_of(r, a) * q_of(r, b) * q_of(r, c);
    if (q == 0.0) return 0.0;
    const double fab = mayer(loops::pair_energy(a, b, V, r));
    const double fac = mayer(loops::pair_energy(a, c, V, r));
    const double fbc = mayer(loops::pair_energy(b, c, V, r));
    return q * (fab * fac * fbc + fab * fac + fab * fbc + fac * fbc);
  });
  const double d1 = density_per_volume(r, 1);
  const double k = d1 * d1 * d1 * std::pow(s2, r.d) * std::pow(s3, r.d) / 6.0;
  return {k * e.value, k * e.error};
}

}  // namespace

double effective_range(const PairPotential& V) {
  if (V.is_zero()) return 0.0;
  double lo = V.hard_core_radius(), hi = std::max(V.range(), lo);
  if (hi <= lo) return lo;
  if (std::abs(V(hi)) >= 1e-12) return hi;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (std::abs(V(mid)) < 1e-12 ? hi : lo) = mid;
  }
  return hi;
}

MayerCoefficient mayer_coefficient(int n, const PairPotential& V, const BoxRegion& region, const MayerOptions& opt) {
  region.validate();
  if (n < 1 || n > 3) throw ArgumentError(fmt::format("Mayer coefficient order {} not in 1..3", n));
  MayerCoefficient out;
  out.n = n;
  out.free_value = loops::bridge_mass(region, n) / n / region.volume();
  auto identity = [](double f) { return f; };
  if (n == 1) {
    out.sectors.push_back({"1", region.periodic() ? Estimate{out.free_value, 0.0} : self_sector(1, V, region, opt)});
  } else if (n == 2) {
    out.sectors.push_back({"2", self_sector(2, V, region, opt)});
    out.sectors.push_back({"1+1", pair_sector(1, 1, 0.5, V, region, opt, "1+1", identity)});
  } else {
    out.sectors.push_back({"3", self_sector(3, V, region, opt)});
    out.sectors.push_back({"2+1", pair_sector(2, 1, 0.5, V, region, opt, "2+1", identity)});
    out.sectors.push_back({"1+1+1", triple_sector(V, region, opt)});
  }
  double var = 0.0;
  for (const auto& s : out.sectors) {
    out.value.value += s.value.value;
    var += s.value.error * s.value.error;
  }
  out.value.error = std::sqrt(var);
  const double shift = out.value.value - out.free_value;
  if (out.value.error > 0.3 * std::abs(shift) && out.value.error > 1e-3 * std::abs(out.value.value)) {
    out.warning = fmt::format(
        "b_{} interaction part {:.3g} has MC error {:.3g}; raise n_mc or stratify the relative displacement", n,
        shift, out.value.error);
  }
  return out;
}

std::vector<MayerCoefficient> mayer_coefficients(int order, const PairPotential& V, const BoxRegion& region,
                                                 const MayerOptions& opt) {
  std::vector<MayerCoefficient> out;
  for (int n = 1; n <= order; ++n) {
    MayerOptions o = opt;
    o.seed = derive_seed(opt.seed, "mayer-order", static_cast<std::uint64_t>(n));
    out.push_back(mayer_coefficient(n, V, region, o));
  }
  return out;
}

ConvergenceEstimate convergence_radius(const PairPotential& V, const BoxRegion& region, std::size_t n_mc,
                                       std::uint64_t seed) {
  region.validate();
  ConvergenceEstimate out;
  out.beta = region.beta;
  out.stability_constant = V.stability_constant();
  if (V.is_zero()) {
    out.radius_lower_bound = 1.0;
    out.kirkwood_salsburg = kInf;
    return out;
  }
  MayerOptions opt;
  opt.n_mc = n_mc;
  opt.seed = seed;
  // Per-volume mass of the pair integral is (4πβ)^{-d} s^d; one factor
  // (4πβ)^{-d/2} belongs to C, so divide the other out.
  const auto p = pair_sector(1, 1, 1.0, V, region, opt, "radius", [](double f) { return std::abs(f); });
  const double per = density_per_volume(region, 1);
  out.C = {p.value / per, p.error / per};
  const double c = out.C.value + 2.0 * out.C.error;
  const double bound = std::exp(-2.0 * region.beta * out.stability_constant - 1.0);
  out.kirkwood_salsburg = c > 0.0 ? bound / c : kInf;
  out.radius_lower_bound = std::min(1.0, out.kirkwood_salsburg);
  return out;
}

SeriesDensity series_density(double z, const std::vector<MayerCoefficient>& coeffs, double radius) {
  if (coeffs.empty()) throw ArgumentError("series needs at least b_1");
  if (!(z >= 0.0)) throw ActivityError("activity must be nonnegative");
  if (z > radius) {
    throw ActivityError(fmt::format("z = {} exceeds the convergence bound {:.6g}; series refused", z, radius));
  }
  SeriesDensity out;
  out.order = static_cast<int>(coeffs.size());
  KahanSum s;
  double var = 0.0;
  for (const auto& b : coeffs) {
    const double w = b.n * std::pow(z, b.n);
    s += w * b.value.value;
    var += std::pow(w * b.value.error, 2);
  }
  const auto& last = coeffs.back();
  out.truncation = std::abs(last.n * last.value.value * std::pow(z, last.n));
  out.value = {s.value(), std::sqrt(var + out.truncation * out.truncation)};
  return out;
}

PartitionShift log_partition_shift(double z, const PairPotential& V, const BoxRegion& region,
                                   const std::vector<MayerCoefficient>& coeffs, std::size_t n_draws,
                                   std::uint64_t seed) {
  if (n_draws < 2) throw ArgumentError("need at least two draws");
  const auto nu = loops::LoopIntensities::make(z, region);
  std::vector<double> w(n_draws);
  kernels::for_each_index(n_draws, [&](std::size_t s) {
    const auto c = loops::sample_free_poisson(nu, region, derive_seed(seed, "shift", s));
    w[s] = boltzmann(loops::interaction_energy(c, V, region));
  });
  RunningStats st;
  for (double x : w) st.add(x);
  PartitionShift out;
  out.monte_carlo = {std::log(st.mean()), st.std_error() / st.mean()};
  KahanSum s;
  double var = 0.0;
  for (const auto& b : coeffs) {
    const double zn = std::pow(z, b.n) * region.volume();
    s += (b.value.value - b.free_value) * zn;
    var += std::pow(b.value.error * zn, 2);
  }
  const auto& last = coeffs.back();
  const double trunc = std::abs((last.value.value - last.free_value) * std::pow(z, last.n) * region.volume());
  out.series = {s.value(), std::sqrt(var + trunc * trunc)};
  out.agree = std::abs(out.monte_carlo.value - out.series.value) <=
              3.0 * std::hypot(out.monte_carlo.error, out.series.error);
  return out;
}

std::string coefficients_csv(const std::vector<MayerCoefficient>& coeffs) {
  std::string out = "n,sector,value,error\n";
  for (const auto& b : coeffs) {
    for (const auto& s : b.sectors) out += fmt::format("{},{},{:.17g},{:.17g}\n", b.n, s.sector, s.value.value, s.value.error);
    out += fmt::format("{},total,{:.17g},{:.17g}\n", b.n, b.value.value, b.value.error);
  }
  return out;
}

nlohmann::json radius_json(const ConvergenceEstimate& c) {
  return {{"radius_lower_bound", c.radius_lower_bound},
          {"kirkwood_salsburg", std::isfinite(c.kirkwood_salsburg) ? nlohmann::json(c.kirkwood_salsburg) : nlohmann::json()},
          {"stability_constant", c.stability_constant},
          {"beta", c.beta},
          {"C", c.C.value},
          {"C_error", c.C.error}};
}

}  // namespace bose::series
