#include "bose/bridge.hpp"

#include <fmt/format.h>

namespace bose::loops {

std::string to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "dirichlet"; }

Boundary boundary_from_string(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "dirichlet") return Boundary::dirichlet;
  throw ArgumentError(fmt::format("unknown boundary '{}' (periodic|dirichlet)", s));
}

void BoxRegion::validate() const {
  if (d < 1 || d > 3) throw ArgumentError("dimension must be 1, 2 or 3");
  if (!(L > 0.0) || !std::isfinite(L)) throw ArgumentError("box side L must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ArgumentError("beta must be positive");
  if (n_slices < 2) throw ArgumentError("n_slices must be >= 2");
}

const Vec& BridgeLoop::at(std::ptrdiff_t k) const {
  const auto m = static_cast<std::ptrdiff_t>(beads.size());
  return beads[static_cast<std::size_t>(((k % m) + m) % m)];
}

std::vector<Vec> BridgeLoop::closed_path() const {
  std::vector<Vec> p(beads);
  if (!p.empty()) p.push_back(p.front());
  return p;
}

void validate_loop(const BridgeLoop& loop, const BoxRegion& region) {
  if (loop.j < 1) throw ArgumentError("loop winding must be >= 1");
  if (loop.beads.size() != static_cast<std::size_t>(loop.j) * region.n_slices) {
    throw ArgumentError(fmt::format("loop of winding {} must have {} beads, has {}", loop.j,
                                    loop.j * region.n_slices, loop.beads.size()));
  }
  for (const auto& b : loop.beads) {
    for (int i = 0; i < region.d; ++i) {
      const bool ok = region.periodic() ? (b[i] >= 0.0 && b[i] < region.L) : (b[i] > 0.0 && b[i] < region.L);
      if (!ok || !std::isfinite(b[i])) throw ArgumentError("loop bead outside the box");
    }
  }
  if (region.periodic()) {
    const auto m = static_cast<std::ptrdiff_t>(loop.size());
    for (std::ptrdiff_t k = 0; k < m; ++k) {
      const auto& a = loop.at(k);
      const auto& b = loop.at(k + 1);
      for (int i = 0; i < region.d; ++i) {
        double u = b[i] - a[i];
        u -= region.L * std::round(u / region.L);
        if (std::abs(u) >= 0.5 * region.L) throw ArgumentError("loop link longer than L/2");
      }
    }
  }
}

long LoopConfiguration::particle_number() const {
  long n = 0;
  for (const auto& l : loops) n += l.j;
  return n;
}

std::vector<long> LoopConfiguration::winding_counts(int j_max) const {
  std::vector<long> h(static_cast<std::size_t>(j_max) + 1, 0);
  for (const auto& l : loops) {
    if (l.j <= j_max) ++h[static_cast<std::size_t>(l.j)];
  }
  return h;
}

namespace heat {

double gauss1(double u, double t) { return std::exp(-u * u / (4.0 * t)) / std::sqrt(4.0 * kPi * t); }

namespace {

// Σ_n exp(-(u + nL)²/4t) for u already reduced to [-L/2, L/2].
double image_sum(double u, double t, double L) {
  KahanSum s;
  s += std::exp(-u * u / (4.0 * t));
  for (int n = 1;; ++n) {
    const double a = std::exp(-(u + n * L) * (u + n * L) / (4.0 * t));
    const double b = std::exp(-(u - n * L) * (u - n * L) / (4.0 * t));
    s += a;
    s += b;
    if (a + b < 1e-18 * s.value() || n > 1000000) break;
  }
  return s.value();
}

double reduce(double u, double L) { return u - L * std::round(u / L); }

}  // namespace

double periodic1(double u, double t, double L) { return image_sum(reduce(u, L), t, L) / std::sqrt(4.0 * kPi * t); }

double winding_factor1(double t, double L) { return image_sum(0.0, t, L); }

double dirichlet1(double a, double b, double t, double L) {
  if (!(a > 0.0 && a < L && b > 0.0 && b < L)) return 0.0;
  return survival1(a, b, t, L) * gauss1(a - b, t);
}

double survival1(double a, double b, double t, double L) {
  if (!(a > 0.0 && a < L && b > 0.0 && b < L)) return 0.0;
  const double base = (a - b) * (a - b);
  // n = 0 carries the direct path and the nearest reflections; higher images
  // fall off like exp(-n²L²/t).
  double s = -std::expm1(-a * b / t);
  s -= std::exp(-(L - a) * (L - b) / t);
  for (int n = 1;; ++n) {
    double term = 0.0;
    for (int sg : {-1, 1}) {
      const double dn = a - b + 2.0 * sg * n * L;
      term += std::exp(-(dn * dn - base) / (4.0 * t));
      const double sn = a + b + 2.0 * sg * n * L;
      // n = -1 in the reflected family was already taken above.
      if (!(sg == -1 && n == 1)) term -= std::exp(-(sn * sn - base) / (4.0 * t));
    }
    s += term;
    if (std::abs(term) < 1e-18 || n > 100000) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

double dirichlet_trace1(double t, double L) {
  KahanSum s;
  s += 1.0;
  for (int n = 1;; ++n) {
    const double term = 2.0 * std::exp(-static_cast<double>(n) * n * L * L / t);
    s += term;
    if (term < 1e-18 || n > 1000000) break;
  }
  return std::max(0.0, L / std::sqrt(4.0 * kPi * t) * s.value() - 0.5);
}

}  // namespace heat

double bridge_mass(const BoxRegion& region, int j) {
  region.validate();
  if (j < 1) throw ArgumentError("winding must be >= 1");
  const double t = j * region.beta;
  if (region.periodic()) {
    return region.volume() * std::pow(4.0 * kPi * t, -0.5 * region.d) *
           std::pow(heat::winding_factor1(t, region.L), region.d);
  }
  return std::pow(heat::dirichlet_trace1(t, region.L), region.d);
}

double proposal_mass(const BoxRegion& region, int j) {
  if (region.periodic()) return bridge_mass(region, j);
  region.validate();
  return region.volume() * std::pow(4.0 * kPi * j * region.beta, -0.5 * region.d);
}

int choose_j_max(double z, int d, double tail, int cap) {
  if (!(z >= 0.0) || !(z < 1.0)) {
    throw ActivityError(fmt::format("activity z = {} outside [0, 1): the loop sum diverges", z));
  }
  if (z == 0.0) return 1;
  const double p = 1.0 + 0.5 * d;
  for (int J = 1; J <= cap; ++J) {
    // Σ_{j>J} z^j j^{-p} ≤ z^{J+1} (J+1)^{-p} / (1 - z)
    const double bound = std::exp((J + 1) * std::log(z) - p * std::log(J + 1.0)) / (1.0 - z);
    if (bound < tail) return J;
  }
  throw ActivityError(fmt::format("activity z = {} needs more than {} windings for tail {}", z, cap, tail));
}

Vec displacement(const BoxRegion& region, const Vec& a, const Vec& b) {
  Vec d{0, 0, 0};
  for (int i = 0; i < region.d; ++i) {
    d[i] = b[i] - a[i];
    if (region.periodic()) d[i] -= region.L * std::round(d[i] / region.L);
  }
  return d;
}

double distance2(const BoxRegion& region, const Vec& a, const Vec& b) {
  double r2 = 0.0;
  for (int i = 0; i < region.d; ++i) {
    double u = b[i] - a[i];
    if (region.periodic()) u -= region.L * std::round(u / region.L);
    r2 += u * u;
  }
  return r2;
}

Vec wrap(const BoxRegion& region, Vec x) {
  if (!region.periodic()) return x;
  for (int i = 0; i < region.d; ++i) {
    x[i] -= region.L * std::floor(x[i] / region.L);
    if (x[i] >= region.L) x[i] -= region.L;  // floor rounding at the top edge
  }
  return x;
}

namespace {

void bisect(std::span<Vec> out, std::size_t lo, std::size_t hi, double dtau, int d, Rng& rng) {
  if (hi - lo < 2) return;
  const std::size_t mid = (lo + hi) / 2;
  const double t1 = static_cast<double>(mid - lo) * dtau;
  const double t2 = static_cast<double>(hi - mid) * dtau;
  const double w = t1 / (t1 + t2);
  const double sd = std::sqrt(2.0 * t1 * t2 / (t1 + t2));
  for (int i = 0; i < d; ++i) out[mid][i] = out[lo][i] + w * (out[hi][i] - out[lo][i]) + sd * rng.normal();
  bisect(out, lo, mid, dtau, d, rng);
  bisect(out, mid, hi, dtau, d, rng);
}

}  // namespace

void fill_bridge(std::span<Vec> out, double dtau, int d, Rng& rng) {
  if (out.size() < 2) throw ArgumentError("a bridge needs two endpoints");
  bisect(out, 0, out.size() - 1, dtau, d, rng);
}

Vec sample_image_displacement(const BoxRegion& region, const Vec& D0, double t, Rng& rng) {
  if (!region.periodic()) return D0;
  Vec D{0, 0, 0};
  for (int i = 0; i < region.d; ++i) {
    const double u = D0[i] - region.L * std::round(D0[i] / region.L);
    const double total = heat::periodic1(u, t, region.L) * std::sqrt(4.0 * kPi * t);
    double target = rng.uniform() * total;
    // Walk n = 0, 1, -1, 2, -2, ... so the common images are found first.
    int chosen = 0;
    for (int k = 0;; ++k) {
      const int n = (k % 2 == 1) ? (k + 1) / 2 : -(k / 2);
      const double w = std::exp(-(u + n * region.L) * (u + n * region.L) / (4.0 * t));
      target -= w;
      chosen = n;
      if (target <= 0.0 || k > 2000000) break;
    }
    D[i] = u + chosen * region.L;
  }
  return D;
}

double endpoint_kernel(const BoxRegion& region, const Vec& a, const Vec& b, double t) {
  double k = 1.0;
  for (int i = 0; i < region.d; ++i) {
    k *= region.periodic() ? heat::periodic1(b[i] - a[i], t, region.L) : heat::gauss1(b[i] - a[i], t);
  }
  return k;
}

double survival_weight(const BoxRegion& region, const BridgeLoop& loop, std::ptrdiff_t first, std::size_t count) {
  if (region.periodic()) return 1.0;
  double w = 1.0;
  const double dt = region.dtau();
  for (std::size_t c = 0; c < count && w > 0.0; ++c) {
    const auto& a = loop.at(first + static_cast<std::ptrdiff_t>(c));
    const auto& b = loop.at(first + static_cast<std::ptrdiff_t>(c) + 1);
    for (int i = 0; i < region.d; ++i) w *= heat::survival1(a[i], b[i], dt, region.L);
  }
  return w;
}

double survival_weight(const BoxRegion& region, const BridgeLoop& loop) {
  return survival_weight(region, loop, 0, loop.size());
}

bool links_resolvable(const BoxRegion& region, std::span<const Vec> unwrapped) {
  if (!region.periodic()) return true;
  for (std::size_t k = 0; k + 1 < unwrapped.size(); ++k) {
    for (int i = 0; i < region.d; ++i) {
      if (std::abs(unwrapped[k + 1][i] - unwrapped[k][i]) >= 0.5 * region.L) return false;
    }
  }
  return true;
}

BridgeLoop propose_loop(const BoxRegion& region, int j, Rng& rng) {
  const std::size_t m = static_cast<std::size_t>(j) * region.n_slices;
  std::vector<Vec> path(m + 1, Vec{0, 0, 0});
  // Each retry costs one bridge; a box this coarse would otherwise spin.
  constexpr int kMaxAttempts = 100000;
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxAttempts) {
      throw ResourceError(fmt::format(
          "no winding-{} loop with every link below L/2 after {} draws; raise n_slices or L", j, kMaxAttempts));
    }
    Vec base{0, 0, 0};
    for (int i = 0; i < region.d; ++i) {
      do {
        base[i] = rng.uniform(0.0, region.L);
      } while (!region.periodic() && base[i] == 0.0);
    }
    const Vec D = sample_image_displacement(region, Vec{0, 0, 0}, j * region.beta, rng);
    path[0] = base;
    for (int i = 0; i < 3; ++i) path[m][i] = base[i] + D[i];
    fill_bridge(path, region.dtau(), region.d, rng);
    if (links_resolvable(region, path)) break;
  }
  BridgeLoop loop;
  loop.j = j;
  loop.beads.resize(m);
  for (std::size_t k = 0; k < m; ++k) loop.beads[k] = wrap(region, path[k]);
  return loop;
}

LoopIntensities LoopIntensities::make(double z, const BoxRegion& region, int j_max) {
  region.validate();
  LoopIntensities out;
  out.z = z;
  out.j_max = j_max > 0 ? j_max : choose_j_max(z, region.d);
  if (!(z >= 0.0) || !(z < 1.0)) throw ActivityError(fmt::format("activity z = {} outside [0, 1)", z));
  out.nu.assign(static_cast<std::size_t>(out.j_max) + 1, 0.0);
  out.proposal.assign(out.nu.size(), 0.0);
  KahanSum t, tp;
  for (int j = 1; j <= out.j_max; ++j) {
    const double zj = std::pow(z, j) / j;
    out.nu[j] = zj * bridge_mass(region, j);
    out.proposal[j] = zj * proposal_mass(region, j);
    t += out.nu[j];
    tp += out.proposal[j];
  }
  out.total = t.value();
  out.proposal_total = tp.value();
  return out;
}

int LoopIntensities::sample_winding(Rng& rng) const {
  double target = rng.uniform() * proposal_total;
  for (int j = 1; j <= j_max; ++j) {
    target -= proposal[j];
    if (target < 0.0) return j;
  }
  return j_max;
}

LoopConfiguration sample_free_poisson(const LoopIntensities& nu, const BoxRegion& region, std::uint64_t seed) {
  Rng rng(seed);
  LoopConfiguration c;
  for (int j = 1; j <= nu.j_max; ++j) {
    const long k = rng.poisson(nu.proposal[j]);
    for (long i = 0; i < k; ++i) {
      auto loop = propose_loop(region, j, rng);
      if (!region.periodic() && !(rng.uniform() < survival_weight(region, loop))) continue;
      c.loops.push_back(std::move(loop));
    }
  }
  return c;
}

LoopConfiguration sample_free_poisson(double z, const BoxRegion& region, std::uint64_t seed, int j_max) {
  return sample_free_poisson(LoopIntensities::make(z, region, j_max), region, seed);
}

}  // namespace bose::loops
