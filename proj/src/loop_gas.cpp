#include "bose/loop_gas.hpp"

#include <fmt/format.h>

#include "bose/kernels.hpp"
#include "bose/spectral_gas.hpp"

namespace bose::loops {

namespace {

// Beads of every loop at phase s, in loop order.
void gather_phase(const LoopConfiguration& c, int n_s, int s, std::vector<Vec>& out) {
  out.clear();
  for (const auto& l : c.loops) {
    for (int a = 0; a < l.j; ++a) out.push_back(l.beads[static_cast<std::size_t>(a * n_s + s)]);
  }
}

double phase_energy(const std::vector<Vec>& pts, const PairPotential& V, const BoxRegion& region) {
  KahanSum e;
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      const double v = V.of_squared(distance2(region, pts[a], pts[b]));
      if (std::isinf(v)) return kInf;
      e += v;
    }
  }
  return e.value();
}

double ordered_total(const std::vector<double>& per_phase, double dtau) {
  KahanSum s;
  for (double v : per_phase) {
    if (std::isinf(v)) return kInf;
    s += v;
  }
  return dtau * s.value();
}

}  // namespace

double interaction_energy(const LoopConfiguration& c, const PairPotential& V, const BoxRegion& region) {
  if (V.is_zero()) return 0.0;
  const int n_s = region.n_slices;
  std::vector<double> per_phase(static_cast<std::size_t>(n_s), 0.0);
  kernels::for_each_index(per_phase.size(), [&](std::size_t s) {
    std::vector<Vec> pts;
    gather_phase(c, n_s, static_cast<int>(s), pts);
    per_phase[s] = phase_energy(pts, V, region);
  });
  return ordered_total(per_phase, region.dtau());
}

double interaction_energy_serial(const LoopConfiguration& c, const PairPotential& V, const BoxRegion& region) {
  if (V.is_zero()) return 0.0;
  const int n_s = region.n_slices;
  std::vector<double> per_phase(static_cast<std::size_t>(n_s), 0.0);
  std::vector<Vec> pts;
  for (int s = 0; s < n_s; ++s) {
    gather_phase(c, n_s, s, pts);
    per_phase[static_cast<std::size_t>(s)] = phase_energy(pts, V, region);
  }
  return ordered_total(per_phase, region.dtau());
}

double pair_energy(const BridgeLoop& a, const BridgeLoop& b, const PairPotential& V, const BoxRegion& region) {
  if (V.is_zero()) return 0.0;
  const int n_s = region.n_slices;
  KahanSum e;
  for (int s = 0; s < n_s; ++s) {
    for (int p = 0; p < a.j; ++p) {
      const Vec& x = a.beads[static_cast<std::size_t>(p * n_s + s)];
      for (int q = 0; q < b.j; ++q) {
        const double v = V.of_squared(distance2(region, x, b.beads[static_cast<std::size_t>(q * n_s + s)]));
        if (std::isinf(v)) return kInf;
        e += v;
      }
    }
  }
  return region.dtau() * e.value();
}

double self_energy(const BridgeLoop& a, const PairPotential& V, const BoxRegion& region) {
  if (V.is_zero() || a.j < 2) return 0.0;
  const int n_s = region.n_slices;
  KahanSum e;
  for (int s = 0; s < n_s; ++s) {
    for (int p = 0; p < a.j; ++p) {
      for (int q = p + 1; q < a.j; ++q) {
        const double v = V.of_squared(distance2(region, a.beads[static_cast<std::size_t>(p * n_s + s)],
                                                a.beads[static_cast<std::size_t>(q * n_s + s)]));
        if (std::isinf(v)) return kInf;
        e += v;
      }
    }
  }
  return region.dtau() * e.value();
}

double energy_against(const LoopConfiguration& c, const BridgeLoop& w, std::span<const std::size_t> skip,
                      const PairPotential& V, const BoxRegion& region) {
  if (V.is_zero()) return 0.0;
  KahanSum e;
  for (std::size_t i = 0; i < c.loops.size(); ++i) {
    if (std::find(skip.begin(), skip.end(), i) != skip.end()) continue;
    const double v = pair_energy(w, c.loops[i], V, region);
    if (std::isinf(v)) return kInf;
    e += v;
  }
  return e.value();
}

// ---------------------------------------------------------------------------

double SpaceTimeBump::operator()(double tau, const Vec& x, const BoxRegion& region) const {
  if (tau < t0 || tau >= t1) return 0.0;
  double r2 = 0.0;
  for (int i = 0; i < region.d; ++i) {
    double u = x[i] - center[i];
    if (region.periodic()) u -= region.L * std::round(u / region.L);
    if (std::abs(u) > 4.0 * width) return 0.0;
    r2 += u * u;
  }
  return amplitude * std::exp(-0.5 * r2 / (width * width));
}

double SpaceTimeBump::spatial_integral(int d) const {
  const double one = std::sqrt(2.0 * kPi) * width * std::erf(4.0 / std::sqrt(2.0));
  return amplitude * std::pow(one, d);
}

TestFunction SpaceTimeBump::bind(const BoxRegion& region) const {
  return [f = *this, region](double tau, const Vec& x) { return f(tau, x, region); };
}

bool SpaceTimeBump::disjoint(const SpaceTimeBump& o, const BoxRegion& region) const {
  if (t1 <= o.t0 || o.t1 <= t0) return true;
  for (int i = 0; i < region.d; ++i) {
    double u = o.center[i] - center[i];
    if (region.periodic()) u -= region.L * std::round(u / region.L);
    if (std::abs(u) > 4.0 * (width + o.width)) return true;
  }
  return false;
}

double pairing(const BridgeLoop& loop, const TestFunction& f, const BoxRegion& region) {
  const double dt = region.dtau();
  const auto m = loop.size();
  KahanSum s;
  s += 0.5 * f(0.0, loop.beads[0]);
  for (std::size_t k = 1; k < m; ++k) s += f(static_cast<double>(k) * dt, loop.beads[k]);
  s += 0.5 * f(static_cast<double>(m) * dt, loop.beads[0]);
  return dt * s.value();
}

double pairing(const LoopConfiguration& c, const TestFunction& f, const BoxRegion& region) {
  KahanSum s;
  for (const auto& l : c.loops) s += pairing(l, f, region);
  return s.value();
}

double free_pairing_mean(const SpaceTimeBump& f, const LoopIntensities& nu, const BoxRegion& region) {
  if (!region.periodic()) throw ArgumentError("closed-form pairing mean needs a periodic box");
  if (8.0 * f.width > region.L) throw ArgumentError("bump support does not fit in the box");
  const double dt = region.dtau();
  const double space = f.spatial_integral(region.d) / region.volume();
  auto h = [&](double tau) { return (tau >= f.t0 && tau < f.t1) ? 1.0 : 0.0; };
  KahanSum total;
  for (int j = 1; j <= nu.j_max; ++j) {
    const int m = j * region.n_slices;
    KahanSum t;
    t += 0.5 * h(0.0);
    for (int k = 1; k < m; ++k) t += h(k * dt);
    t += 0.5 * h(m * dt);
    total += nu.nu[j] * dt * t.value() * space;
  }
  return total.value();
}

Estimate free_pairing_mean_mc(const TestFunction& f, const LoopIntensities& nu, const BoxRegion& region,
                              std::size_t n_per_winding, std::uint64_t seed) {
  std::vector<Estimate> per_j(static_cast<std::size_t>(nu.j_max) + 1);
  kernels::for_each_index(static_cast<std::size_t>(nu.j_max), [&](std::size_t i) {
    const int j = static_cast<int>(i) + 1;
    Rng rng(derive_seed(seed, "pairing-mean", static_cast<std::uint64_t>(j)));
    RunningStats st;
    for (std::size_t k = 0; k < n_per_winding; ++k) {
      const auto loop = propose_loop(region, j, rng);
      st.add(survival_weight(region, loop) * pairing(loop, f, region));
    }
    per_j[static_cast<std::size_t>(j)] = {nu.proposal[j] * st.mean(), nu.proposal[j] * st.std_error()};
  });
  KahanSum v;
  double var = 0.0;
  for (int j = 1; j <= nu.j_max; ++j) {
    v += per_j[j].value;
    var += per_j[j].error * per_j[j].error;
  }
  return {v.value(), std::sqrt(var)};
}

// ---------------------------------------------------------------------------

CharacteristicResult characteristic_functional(double z, const BoxRegion& region, const TestFunction& f,
                                               std::size_t n_mc, std::uint64_t seed, int j_max) {
  if (n_mc < 2) throw ArgumentError("characteristic functional needs n_mc >= 2");
  const auto nu = LoopIntensities::make(z, region, j_max);
  CharacteristicResult out;
  out.j_max = nu.j_max;

  // Explicit side: per winding, E[w (e^{i(ω,f)} - 1)] over proposal bridges.
  struct Part {
    double re = 0, im = 0, var_re = 0, var_im = 0;
  };
  std::vector<Part> parts(static_cast<std::size_t>(nu.j_max) + 1);
  kernels::for_each_index(static_cast<std::size_t>(nu.j_max), [&](std::size_t i) {
    const int j = static_cast<int>(i) + 1;
    Rng rng(derive_seed(seed, "cf-bridge", static_cast<std::uint64_t>(j)));
    RunningStats re, im;
    for (std::size_t k = 0; k < n_mc; ++k) {
      const auto loop = propose_loop(region, j, rng);
      const double w = survival_weight(region, loop);
      const double x = pairing(loop, f, region);
      re.add(w * (std::cos(x) - 1.0));
      im.add(w * std::sin(x));
    }
    const double c = nu.proposal[j];
    parts[static_cast<std::size_t>(j)] = {c * re.mean(), c * im.mean(), std::pow(c * re.std_error(), 2),
                                          std::pow(c * im.std_error(), 2)};
  });
  KahanSum a, b;
  double va = 0.0, vb = 0.0;
  for (int j = 1; j <= nu.j_max; ++j) {
    a += parts[j].re;
    b += parts[j].im;
    va += parts[j].var_re;
    vb += parts[j].var_im;
  }
  out.log_explicit = {a.value(), b.value()};
  const double mod = std::exp(a.value());
  const double cb = std::cos(b.value()), sb = std::sin(b.value());
  out.explicit_re = {mod * cb, mod * std::sqrt(cb * cb * va + sb * sb * vb)};
  out.explicit_im = {mod * sb, mod * std::sqrt(sb * sb * va + cb * cb * vb)};

  // Empirical side: e^{i(φ,f)} over independent configurations.
  std::vector<double> cs(n_mc), sn(n_mc);
  kernels::for_each_index(n_mc, [&](std::size_t i) {
    const auto c = sample_free_poisson(nu, region, derive_seed(seed, "cf-config", i));
    const double x = pairing(c, f, region);
    cs[i] = std::cos(x);
    sn[i] = std::sin(x);
  });
  RunningStats er, ei;
  for (std::size_t i = 0; i < n_mc; ++i) {
    er.add(cs[i]);
    ei.add(sn[i]);
  }
  out.empirical_re = er.estimate();
  out.empirical_im = ei.estimate();
  auto close = [](Estimate x, Estimate y) {
    const double s = std::hypot(x.error, y.error);
    return std::abs(x.value - y.value) <= 3.0 * s + 1e-14;
  };
  out.agree = close(out.explicit_re, out.empirical_re) && close(out.explicit_im, out.empirical_im);
  return out;
}

// ---------------------------------------------------------------------------

TraceIdentityResult trace_identity_check(double mu, const BoxRegion& region) {
  region.validate();
  if (!(mu > 0.0)) throw ActivityError("trace identity needs mu > 0 (z < 1)");
  const double z = std::exp(-region.beta * mu);
  TraceIdentityResult r;
  spectral::Spectrum spec;
  if (region.periodic()) {
    const auto geom = spectral::torus_for(region.d, region.L, region.beta, 1e-15);
    r.mode_cutoff = geom.mode_cutoff;
    spec = spectral::build_torus_spectrum(geom);
  } else {
    r.mode_cutoff = spectral::dirichlet_cutoff_for_tail(region.d, region.L, region.beta, 1e-15);
    spec = spectral::build_dirichlet_spectrum(region.d, region.L, r.mode_cutoff);
  }
  r.modes = spec.size();
  r.lhs = spec.volume * spectral::pressure(spec, region.beta, mu);
  r.j_max = choose_j_max(z, region.d, 1e-15);
  KahanSum s;
  for (int j = 1; j <= r.j_max; ++j) s += std::pow(z, j) / j * bridge_mass(region, j);
  r.rhs = s.value();
  r.difference = r.rhs - r.lhs;
  return r;
}

double window_density_exact(double z, const BoxRegion& region, double window, WindowPlacement where, int j_max) {
  region.validate();
  if (!(window > 0.0) || window > region.L) throw ArgumentError("window side must be in (0, L]");
  const int J = j_max > 0 ? j_max : choose_j_max(z, region.d, 1e-14);
  const double lo = where == WindowPlacement::centered ? 0.5 * (region.L - window) : 0.0;
  const double hi = lo + window;
  const double L = region.L;
  KahanSum total;
  for (int j = 1; j <= J; ++j) {
    const double t = j * region.beta;
    double per_coord;
    if (region.periodic()) {
      per_coord = heat::winding_factor1(t, L) / std::sqrt(4.0 * kPi * t);
    } else {
      const double st = std::sqrt(t);
      KahanSum diag, refl;
      const int N = static_cast<int>(std::ceil(8.0 * st / L)) + 2;
      for (int n = -N; n <= N; ++n) {
        diag += std::exp(-static_cast<double>(n) * n * L * L / t);
        refl += 0.25 * (std::erf((hi + n * L) / st) - std::erf((lo + n * L) / st));
      }
      per_coord = diag.value() / std::sqrt(4.0 * kPi * t) - refl.value() / window;
    }
    total += std::pow(z, j) * std::pow(per_coord, region.d);
  }
  return total.value();
}

SigmaReport summarize_sigma(std::vector<SigmaRow> rows, double threshold) {
  SigmaReport rep;
  rep.rows = std::move(rows);
  if (rep.rows.empty()) return rep;
  rep.monotone = true;
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    const auto& a = rep.rows[i - 1];
    const auto& b = rep.rows[i];
    const double slack = 2.0 * std::hypot(a.gap_error, b.gap_error);
    if (!(b.gap < a.gap + slack)) rep.monotone = false;
  }
  if (rep.rows.size() > 1 && !(rep.rows.back().gap < rep.rows.front().gap)) rep.monotone = false;
  rep.final_gap = rep.rows.back().gap;
  rep.shrinks = rep.monotone && rep.final_gap < threshold;
  return rep;
}

SigmaReport sigma_independence_exact(double z, double beta, int d, std::span<const double> Ls, double window,
                                     WindowPlacement where, double threshold) {
  std::vector<SigmaRow> rows;
  for (double L : Ls) {
    BoxRegion per{d, L, Boundary::periodic, beta, 16};
    BoxRegion dir{d, L, Boundary::dirichlet, beta, 16};
    SigmaRow r;
    r.L = L;
    r.periodic = window_density_exact(z, per, window, where);
    r.dirichlet = window_density_exact(z, dir, window, where);
    r.gap = std::abs(r.dirichlet - r.periodic) / r.periodic;
    rows.push_back(r);
  }
  return summarize_sigma(std::move(rows), threshold);
}

}  // namespace bose::loops
