#include "bose/loop_observables.hpp"

#include <fmt/format.h>

#include "bose/kernels.hpp"

namespace bose::loops {

namespace {

// Index drawn from a cumulative table whose entry 0 is zero.
int draw_index(std::span<const double> cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(), static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
}

double link_survival(const BoxRegion& r, std::span<const Vec> path) {
  if (r.periodic()) return 1.0;
  double w = 1.0;
  for (std::size_t k = 0; k + 1 < path.size() && w > 0.0; ++k)
    for (int i = 0; i < r.d; ++i) w *= heat::survival1(path[k][i], path[k + 1][i], r.dtau(), r.L);
  return w;
}

// Open bridge x → y of j periods, wrapped; nullopt if a link is unresolvable.
std::optional<std::vector<Vec>> open_bridge(const BoxRegion& r, const Vec& x, const Vec& y, int j, Rng& rng) {
  const std::size_t M = static_cast<std::size_t>(j) * r.n_slices;
  std::vector<Vec> path(M + 1, Vec{0, 0, 0});
  path[0] = x;
  const Vec D = sample_image_displacement(r, displacement(r, x, y), j * r.beta, rng);
  for (int i = 0; i < 3; ++i) path[M][i] = x[i] + D[i];
  fill_bridge(path, r.dtau(), r.d, rng);
  if (!links_resolvable(r, path)) return std::nullopt;
  for (auto& p : path) p = wrap(r, p);
  return path;
}

Vec uniform_point(const BoxRegion& r, Rng& rng) {
  Vec x{0, 0, 0};
  for (int i = 0; i < r.d; ++i) {
    do {
      x[i] = rng.uniform(0.0, r.L);
    } while (!r.periodic() && x[i] == 0.0);
  }
  return x;
}

std::pair<double, double> window_bounds(const BoxRegion& r, double w, WindowPlacement where) {
  const double lo = where == WindowPlacement::centered ? 0.5 * (r.L - w) : 0.0;
  return {lo, lo + w};
}

}  // namespace

// ---------------------------------------------------------------------------

MomentResult moment_estimate(std::span<const LoopConfiguration> samples, std::span<const SpaceTimeBump> fs,
                             const BoxRegion& region, std::size_t n_batches) {
  if (samples.empty()) throw ArgumentError("moment estimate needs samples");
  if (fs.empty()) throw ArgumentError("moment estimate needs at least one test function");
  const std::size_t n = samples.size(), k = fs.size();
  std::vector<double> prod(n);
  std::vector<std::vector<double>> single(k, std::vector<double>(n));
  std::vector<TestFunction> bound;
  for (const auto& f : fs) bound.push_back(f.bind(region));
  kernels::for_each_index(n, [&](std::size_t s) {
    double p = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double v = pairing(samples[s], bound[i], region);
      single[i][s] = v;
      p *= v;
    }
    prod[s] = p;
  });
  MomentResult out;
  const std::size_t nb = std::min(n_batches, n);
  out.value = batch_means(prod, nb);
  for (auto& v : single) out.singles.push_back(batch_means(v, nb));
  out.disjoint_supports = k > 1;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (!fs[i].disjoint(fs[j], region)) out.disjoint_supports = false;
  if (out.disjoint_supports) {
    double v = 1.0, rel2 = 0.0;
    for (const auto& e : out.singles) {
      v *= e.value;
      if (e.value != 0.0) rel2 += std::pow(e.error / e.value, 2);
    }
    out.product_of_singles = {v, std::abs(v) * std::sqrt(rel2)};
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(CylKind k) {
  switch (k) {
    case CylKind::one: return "one";
    case CylKind::linear: return "linear";
    case CylKind::square: return "square";
    case CylKind::exp_neg: return "exp_neg";
    case CylKind::cosine: return "cosine";
  }
  return "?";
}

double Cylindrical::of(double s) const {
  switch (kind) {
    case CylKind::one: return 1.0;
    case CylKind::linear: return s;
    case CylKind::square: return s * s;
    case CylKind::exp_neg: return std::exp(-s);
    case CylKind::cosine: return std::cos(s);
  }
  return 0.0;
}

double Cylindrical::pairing_of(const LoopConfiguration& c, const BoxRegion& r) const {
  return kind == CylKind::one ? 0.0 : pairing(c, g.bind(r), r);
}

double Cylindrical::pairing_of(const BridgeLoop& l, const BoxRegion& r) const {
  return kind == CylKind::one ? 0.0 : pairing(l, g.bind(r), r);
}

IbpResult integration_by_parts_check(double z, const BoxRegion& region, const PairPotential& V,
                                     const SpaceTimeBump& f, const Cylindrical& F, const Cylindrical& G,
                                     std::uint64_t seed, const IbpOptions& opt) {
  const auto nu = LoopIntensities::make(z, region, opt.chain.j_max);
  const auto fb = f.bind(region);

  IbpResult out;
  double mean_err = 0.0;
  if (region.periodic() && 8.0 * f.width <= region.L) {
    out.mean_f = free_pairing_mean(f, nu, region);
  } else {
    const auto e = free_pairing_mean_mc(fb, nu, region, opt.mean_mc, derive_seed(seed, "ibp-mean", 0));
    out.mean_f = e.value;
    mean_err = e.error;
  }

  std::vector<LoopConfiguration> samples;
  if (V.is_zero()) {
    samples.resize(opt.n_samples);
    kernels::for_each_index(opt.n_samples, [&](std::size_t s) {
      samples[s] = sample_free_poisson(nu, region, derive_seed(seed, "ibp-config", s));
    });
  } else {
    samples = gibbs_sample(z, region, V, opt.n_samples, derive_seed(seed, "ibp-chain", 0), opt.chain, opt.burn_in,
                           opt.thin)
                  .samples;
  }

  std::vector<double> lhs(samples.size()), rhs(samples.size()), diff(samples.size()), fg(samples.size());
  kernels::for_each_index(samples.size(), [&](std::size_t s) {
    const auto& phi = samples[s];
    const double sF = F.pairing_of(phi, region);
    const double sG = G.pairing_of(phi, region);
    const double FG = F.of(sF) * G.of(sG);
    KahanSum l;
    for (const auto& w : phi.loops) l += pairing(w, fb, region) * F.of(sF - F.pairing_of(w, region)) * G.of(sG);
    l += -out.mean_f * FG;

    Rng rng(derive_seed(seed, "ibp-fresh", s));
    const auto w = propose_loop(region, nu.sample_winding(rng), rng);
    const double q = survival_weight(region, w);
    double r = 0.0;
    if (q > 0.0) {
      const double de = V.is_zero() ? 0.0 : energy_against(phi, w, {}, V, region) + self_energy(w, V, region);
      const double boltz = std::isinf(de) ? 0.0 : std::exp(-de);
      r = nu.proposal_total * q * pairing(w, fb, region) * F.of(sF) *
          (G.of(sG + G.pairing_of(w, region)) * boltz - G.of(sG));
    }
    lhs[s] = l.value();
    rhs[s] = r;
    diff[s] = l.value() - r;
    fg[s] = FG;
  });
  const std::size_t nb = std::min(opt.n_batches, samples.size());
  out.lhs = batch_means(lhs, nb);
  out.rhs = batch_means(rhs, nb);
  out.difference = batch_means(diff, nb);
  const double fg_mean = batch_means(fg, nb).value;
  out.difference.error = std::hypot(out.difference.error, std::abs(fg_mean) * mean_err);
  out.pass = std::abs(out.difference.value) <= 3.0 * out.difference.error + 1e-14;
  return out;
}

// ---------------------------------------------------------------------------

double free_rdm(double z, const BoxRegion& region, const Vec& x, const Vec& y, int j_max) {
  region.validate();
  const int J = j_max > 0 ? j_max : choose_j_max(z, region.d, 1e-14);
  KahanSum s;
  for (int j = 1; j <= J; ++j) {
    const double t = j * region.beta;
    double k = 1.0;
    for (int i = 0; i < region.d; ++i) {
      k *= region.periodic() ? heat::periodic1(y[i] - x[i], t, region.L) : heat::dirichlet1(x[i], y[i], t, region.L);
    }
    s += std::pow(z, j) * k;
  }
  return s.value();
}

double open_path_energy(std::span<const Vec> path, const LoopConfiguration& c, const PairPotential& V,
                        const BoxRegion& region) {
  if (V.is_zero()) return 0.0;
  const auto M = path.size() - 1;
  const auto ns = static_cast<std::size_t>(region.n_slices);
  auto w = [M](std::size_t k) { return (k == 0 || k == M) ? 0.5 : 1.0; };
  KahanSum e;
  for (std::size_t k = 0; k <= M; ++k) {
    for (std::size_t l = k + ns; l <= M; l += ns) {
      if (k == 0 && l == M) continue;
      const double v = V.of_squared(distance2(region, path[k], path[l]));
      if (std::isinf(v)) return kInf;
      e += w(k) * w(l) * v;
    }
    const std::size_t phase = k % ns;
    for (const auto& loop : c.loops) {
      for (std::size_t b = phase; b < loop.size(); b += ns) {
        const double v = V.of_squared(distance2(region, path[k], loop.beads[b]));
        if (std::isinf(v)) return kInf;
        e += w(k) * v;
      }
    }
  }
  return region.dtau() * e.value();
}

namespace {

// Per-sample open-bridge estimates, one block of n_bridges per configuration.
std::vector<double> open_bridge_series(double z, const BoxRegion& region, const PairPotential& V,
                                       std::span<const LoopConfiguration> samples, const Vec* x_fixed,
                                       const Vec* y_fixed, std::size_t n_bridges, std::uint64_t seed, int J) {
  static const LoopConfiguration empty;
  const std::size_t n_cfg = samples.empty() ? 1 : samples.size();
  std::vector<double> out(n_cfg * n_bridges);
  kernels::for_each_index(n_cfg, [&](std::size_t s) {
    const auto& phi = samples.empty() ? empty : samples[s];
    Rng rng(derive_seed(seed, "rdm", s));
    std::vector<double> cum(static_cast<std::size_t>(J) + 1, 0.0);
    for (std::size_t b = 0; b < n_bridges; ++b) {
      const Vec x = x_fixed ? *x_fixed : uniform_point(region, rng);
      const Vec y = y_fixed ? *y_fixed : x;
      for (int j = 1; j <= J; ++j)
        cum[j] = cum[j - 1] + std::pow(z, j) * endpoint_kernel(region, x, y, j * region.beta);
      const double total = cum[J];
      double value = 0.0;
      if (total > 0.0) {
        const int j = std::max(1, draw_index(cum, rng));
        std::optional<std::vector<Vec>> path;
        for (int tries = 0; tries < 100 && !path; ++tries) path = open_bridge(region, x, y, j, rng);
        if (path) {
          const double q = link_survival(region, *path);
          if (q > 0.0) {
            const double e = open_path_energy(*path, phi, V, region);
            value = std::isinf(e) ? 0.0 : total * q * std::exp(-e);
          }
        }
      }
      out[s * n_bridges + b] = x_fixed ? value : region.volume() * value;
    }
  });
  return out;
}

}  // namespace

RdmResult reduced_density_matrix(double z, const BoxRegion& region, const PairPotential& V,
                                 std::span<const LoopConfiguration> samples, const Vec& x, const Vec& y,
                                 std::size_t n_bridges, std::uint64_t seed, std::size_t n_batches) {
  if (n_bridges < 1) throw ArgumentError("need at least one bridge per configuration");
  const int J = choose_j_max(z, region.d, 1e-12);
  const auto series = open_bridge_series(z, region, V, samples, &x, &y, n_bridges, seed, J);
  RdmResult out;
  out.value = batch_means(series, std::min(n_batches, series.size()));
  out.exact_free = free_rdm(z, region, x, y);
  if (out.value.value <= 2.0 * out.value.error) {
    out.upper_bound = true;
    out.bound = std::max(out.value.value, 0.0) + 2.0 * out.value.error;
  }
  return out;
}

Estimate rdm_trace(double z, const BoxRegion& region, const PairPotential& V,
                   std::span<const LoopConfiguration> samples, std::size_t n_bridges, std::uint64_t seed,
                   std::size_t n_batches) {
  const int J = choose_j_max(z, region.d, 1e-12);
  const auto series = open_bridge_series(z, region, V, samples, nullptr, nullptr, n_bridges, seed, J);
  return batch_means(series, std::min(n_batches, series.size()));
}

// ---------------------------------------------------------------------------

Estimate window_density_mc(std::span<const LoopConfiguration> samples, const BoxRegion& region, double window,
                           WindowPlacement where, std::size_t n_batches) {
  if (samples.empty()) throw ArgumentError("window density needs samples");
  if (!(window > 0.0) || window > region.L) throw ArgumentError("window side must be in (0, L]");
  const auto [lo, hi] = window_bounds(region, window, where);
  const TestFunction ind = [lo = lo, hi = hi, d = region.d](double, const Vec& x) {
    for (int i = 0; i < d; ++i)
      if (x[i] < lo || x[i] >= hi) return 0.0;
    return 1.0;
  };
  const double norm = region.beta * std::pow(window, region.d);
  std::vector<double> v(samples.size());
  kernels::for_each_index(samples.size(), [&](std::size_t s) { v[s] = pairing(samples[s], ind, region) / norm; });
  return batch_means(v, std::min(n_batches, v.size()));
}

SigmaReport sigma_independence_mc(double z, double beta, int d, const PairPotential& V, std::span<const double> Ls,
                                  double window, WindowPlacement where, std::uint64_t seed,
                                  const SigmaMcOptions& opt, double threshold) {
  std::vector<SigmaRow> rows;
  const std::size_t per_chain = std::max<std::size_t>(1, opt.n_samples / std::max<std::size_t>(1, opt.chains));
  for (std::size_t i = 0; i < Ls.size(); ++i) {
    SigmaRow row;
    row.L = Ls[i];
    Estimate est[2];
    for (int b = 0; b < 2; ++b) {
      const BoxRegion r{d, Ls[i], b == 0 ? Boundary::periodic : Boundary::dirichlet, beta, 16};
      const auto run = gibbs_sample_chains(opt.chains, z, r, V, per_chain,
                                           derive_seed(seed, b == 0 ? "sigma-periodic" : "sigma-dirichlet", i),
                                           opt.chain, opt.burn_in, opt.thin);
      est[b] = window_density_mc(run.samples, r, window, where, 40);
    }
    row.periodic = est[0].value;
    row.periodic_error = est[0].error;
    row.dirichlet = est[1].value;
    row.dirichlet_error = est[1].error;
    row.gap = std::abs(row.dirichlet - row.periodic) / row.periodic;
    row.gap_error = std::hypot(row.dirichlet_error / row.periodic, row.dirichlet * row.periodic_error /
                                                                       (row.periodic * row.periodic));
    rows.push_back(row);
  }
  return summarize_sigma(std::move(rows), threshold);
}

}  // namespace bose::loops
