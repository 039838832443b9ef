#include "bose/fock_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "bose/kernels.hpp"

namespace bose::fock {

void TruncatedFock::validate(double state_budget) const {
  if (energies.empty()) throw ArgumentError("at least one mode required");
  if (n_max < 1) throw ArgumentError("n_max must be >= 1");
  for (double e : energies) {
    if (!std::isfinite(e)) throw ArgumentError("mode energies must be finite");
  }
  if (state_count() > state_budget) {
    throw ResourceError(fmt::format("{:.3g} Fock states exceed the budget of {:.3g}", state_count(), state_budget));
  }
}

double TruncatedFock::state_count() const {
  return std::pow(static_cast<double>(n_max + 1), static_cast<double>(energies.size()));
}

std::size_t TruncatedFock::lowest_mode() const {
  return static_cast<std::size_t>(std::min_element(energies.begin(), energies.end()) - energies.begin());
}

DiagonalInteraction DiagonalInteraction::uniform(std::size_t modes, double v, double volume) {
  DiagonalInteraction out;
  out.volume = volume;
  out.vhat0 = v;
  out.coupling.assign(modes * modes, v);
  return out;
}

void DiagonalInteraction::validate(std::size_t modes) const {
  if (!(volume > 0.0)) throw ArgumentError("interaction volume must be positive");
  if (coupling.size() != modes * modes) throw ArgumentError("coupling matrix does not match the mode count");
  for (std::size_t a = 0; a < modes; ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      if (coupling[a * modes + b] != coupling[b * modes + a]) {
        throw ArgumentError("V̂(k - k') must be symmetric");
      }
    }
  }
}

namespace {

struct Energy {
  const TruncatedFock& fock;
  double mu;
  const DiagonalInteraction* inter;

  double operator()(std::span<const int> n) const {
    const std::size_t m = n.size();
    double e = 0.0;
    long total = 0;
    for (std::size_t k = 0; k < m; ++k) {
      e += (fock.energies[k] + mu) * n[k];
      total += n[k];
    }
    if (inter == nullptr) return e;
    const double inv = 1.0 / inter->volume;
    const double N = static_cast<double>(total);
    e += 0.5 * inter->vhat0 * (N * N - N) * inv;
    double pair = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      if (n[a] == 0) continue;
      for (std::size_t b = a + 1; b < m; ++b) pair += inter->coupling[a * m + b] * n[a] * n[b];
    }
    // Σ_{k≠k'} counts each unordered pair twice.
    return e + pair * inv;
  }
};

// Visits every occupation tuple with n[0] fixed, in lexicographic order.
template <class Visit>
void for_each_state_with_leading(std::size_t modes, int n_max, int leading, Visit&& visit) {
  std::vector<int> n(modes, 0);
  n[0] = leading;
  for (;;) {
    visit(std::span<const int>(n));
    std::size_t k = modes - 1;
    while (k >= 1) {
      if (++n[k] <= n_max) break;
      n[k] = 0;
      --k;
    }
    if (k == 0) return;
  }
}

struct Partial {
  KahanSum z;
  std::vector<KahanSum> occ;
  KahanSum n1, n2;
  std::vector<KahanSum> hist;
  KahanSum boundary;

  Partial(std::size_t modes, int n_max) : occ(modes), hist(static_cast<std::size_t>(n_max) + 1) {}

  void add(std::span<const int> n, double w, std::size_t zero, int n_max) {
    z += w;
    long total = 0;
    bool edge = false;
    for (std::size_t k = 0; k < n.size(); ++k) {
      if (n[k] != 0) occ[k] += w * n[k];
      total += n[k];
      edge = edge || n[k] == n_max;
    }
    const double N = static_cast<double>(total);
    n1 += w * N;
    n2 += w * N * N;
    hist[static_cast<std::size_t>(n[zero])] += w;
    if (edge) boundary += w;
  }
};

FockResult finish(const TruncatedFock& fock, double beta, double emin, std::span<const Partial> parts,
                  const FockOptions& opt) {
  const std::size_t m = fock.energies.size();
  KahanSum z, n1, n2, boundary;
  std::vector<KahanSum> occ(m), hist(static_cast<std::size_t>(fock.n_max) + 1);
  for (const auto& p : parts) {
    z += p.z.value();
    n1 += p.n1.value();
    n2 += p.n2.value();
    boundary += p.boundary.value();
    for (std::size_t k = 0; k < m; ++k) occ[k] += p.occ[k].value();
    for (std::size_t i = 0; i < hist.size(); ++i) hist[i] += p.hist[i].value();
  }
  const double Z = z.value();
  FockResult r;
  r.logZ = std::log(Z) - beta * emin;
  r.zero_mode = fock.lowest_mode();
  for (auto& o : occ) r.occupations.push_back(o.value() / Z);
  for (auto& h : hist) r.n0_histogram.push_back(h.value() / Z);
  r.mean_N = n1.value() / Z;
  r.var_N = std::max(0.0, n2.value() / Z - r.mean_N * r.mean_N);
  r.boundary_weight = boundary.value() / Z;
  if (!opt.allow_truncation && r.boundary_weight > opt.boundary_tolerance) {
    throw TruncationError(fmt::format("occupation cutoff n_max={} too small: boundary states carry relative weight {:.3g}",
                                      fock.n_max, r.boundary_weight));
  }
  return r;
}

void check_inputs(const TruncatedFock& fock, double beta, const DiagonalInteraction* inter,
                  const FockOptions& opt) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ArgumentError("beta must be positive");
  fock.validate(opt.state_budget);
  if (inter != nullptr) inter->validate(fock.energies.size());
}

}  // namespace

FockResult enumerate(const TruncatedFock& fock, double beta, double mu, const DiagonalInteraction* inter,
                     const FockOptions& opt) {
  check_inputs(fock, beta, inter, opt);
  const std::size_t m = fock.energies.size();
  const std::size_t zero = fock.lowest_mode();
  const Energy energy{fock, mu, inter};
  const std::size_t chunks = static_cast<std::size_t>(fock.n_max) + 1;

  std::vector<double> mins(chunks, kInf);
  kernels::for_each_index(chunks, [&](std::size_t c) {
    double lo = kInf;
    for_each_state_with_leading(m, fock.n_max, static_cast<int>(c),
                                [&](std::span<const int> n) { lo = std::min(lo, energy(n)); });
    mins[c] = lo;
  });
  const double emin = *std::min_element(mins.begin(), mins.end());

  std::vector<Partial> parts(chunks, Partial(m, fock.n_max));
  kernels::for_each_index(chunks, [&](std::size_t c) {
    auto& p = parts[c];
    for_each_state_with_leading(m, fock.n_max, static_cast<int>(c), [&](std::span<const int> n) {
      p.add(n, std::exp(-beta * (energy(n) - emin)), zero, fock.n_max);
    });
  });
  return finish(fock, beta, emin, parts, opt);
}

FockResult enumerate_serial(const TruncatedFock& fock, double beta, double mu, const DiagonalInteraction* inter,
                            const FockOptions& opt) {
  check_inputs(fock, beta, inter, opt);
  const std::size_t m = fock.energies.size();
  const Energy energy{fock, mu, inter};
  std::vector<int> n(m, 0);
  auto sweep = [&](auto&& visit) {
    std::fill(n.begin(), n.end(), 0);
    for (;;) {
      visit(std::span<const int>(n));
      std::size_t k = m;
      while (k-- > 0) {
        if (++n[k] <= fock.n_max) break;
        n[k] = 0;
      }
      if (k == static_cast<std::size_t>(-1)) return;
    }
  };
  double emin = kInf;
  sweep([&](std::span<const int> s) { emin = std::min(emin, energy(s)); });
  Partial p(m, fock.n_max);
  const std::size_t zero = fock.lowest_mode();
  sweep([&](std::span<const int> s) { p.add(s, std::exp(-beta * (energy(s) - emin)), zero, fock.n_max); });
  return finish(fock, beta, emin, std::span<const Partial>(&p, 1), opt);
}

double exact_log_partition(const TruncatedFock& fock, double beta, double mu, const DiagonalInteraction* inter,
                           const FockOptions& opt) {
  return enumerate(fock, beta, mu, inter, opt).logZ;
}

double exact_partition(const TruncatedFock& fock, double beta, double mu, const DiagonalInteraction* inter,
                       const FockOptions& opt) {
  const double lz = exact_log_partition(fock, beta, mu, inter, opt);
  if (lz > std::log(std::numeric_limits<double>::max())) throw DomainError("partition function overflows; use logZ");
  return std::exp(lz);
}

std::vector<double> exact_occupations(const TruncatedFock& fock, double beta, double mu,
                                      const DiagonalInteraction* inter, const FockOptions& opt) {
  return enumerate(fock, beta, mu, inter, opt).occupations;
}

std::vector<double> exact_zero_mode_statistics(const TruncatedFock& fock, double beta, double mu,
                                               const DiagonalInteraction* inter, const FockOptions& opt) {
  return enumerate(fock, beta, mu, inter, opt).n0_histogram;
}

double solve_mu_for_mean_N(const TruncatedFock& fock, double beta, double target_N, const DiagonalInteraction* inter,
                           const FockOptions& opt) {
  const double capacity = static_cast<double>(fock.n_max) * static_cast<double>(fock.energies.size());
  if (!(target_N > 0.0) || !(target_N < capacity)) throw ArgumentError("target <N> outside (0, capacity)");
  FockOptions loose = opt;
  loose.allow_truncation = true;
  auto mean_N = [&](double mu) { return enumerate(fock, beta, mu, inter, loose).mean_N; };
  double lo = -1.0, hi = 1.0;
  while (mean_N(lo) < target_N) lo = 2.0 * lo - 1.0;
  while (mean_N(hi) > target_N) hi = 2.0 * hi + 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_N(mid) > target_N ? lo : hi) = mid;
  }
  const double mu = 0.5 * (lo + hi);
  enumerate(fock, beta, mu, inter, opt);  // re-run with the caller's truncation policy
  return mu;
}

nlohmann::json to_json(const FockResult& r) {
  nlohmann::json j;
  j["logZ"] = r.logZ;
  j["Z"] = r.logZ < 700.0 ? nlohmann::json(std::exp(r.logZ)) : nlohmann::json(nullptr);
  j["occupations"] = r.occupations;
  j["mean_N"] = r.mean_N;
  j["var_N"] = r.var_N;
  j["zero_mode"] = r.zero_mode;
  j["n0_histogram"] = r.n0_histogram;
  j["boundary_weight"] = r.boundary_weight;
  return j;
}

}  // namespace bose::fock
