#pragma once

// Estimators on streams of loop configurations: moments of (φ, f), the
// integration-by-parts identity for cylindrical functionals, reduced density
// matrices by open-bridge reweighting and windowed densities.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bose/gibbs.hpp"

namespace bose::loops {

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

struct MomentResult {
  Estimate value;               // ∫dG Π_i (φ, f_i), batch means
  std::vector<Estimate> singles;
  bool disjoint_supports = false;  // every pair of bumps disjoint
  Estimate product_of_singles;     // filled when disjoint_supports
};

MomentResult moment_estimate(std::span<const LoopConfiguration> samples, std::span<const SpaceTimeBump> fs,
                             const BoxRegion& region, std::size_t n_batches = 20);

// ---------------------------------------------------------------------------
// Cylindrical functionals F(φ) = h((φ, g)) and the IBP identity
// ---------------------------------------------------------------------------

enum class CylKind { one, linear, square, exp_neg, cosine };
std::string to_string(CylKind k);

struct Cylindrical {
  CylKind kind = CylKind::one;
  SpaceTimeBump g;

  /// h(s) for s = (φ, g).
  [[nodiscard]] double of(double s) const;
  [[nodiscard]] double pairing_of(const LoopConfiguration& c, const BoxRegion& r) const;
  [[nodiscard]] double pairing_of(const BridgeLoop& l, const BoxRegion& r) const;
};

struct IbpOptions {
  std::size_t n_samples = 4000;
  std::size_t burn_in = 300;
  std::size_t thin = 2;
  std::size_t n_batches = 40;
  std::size_t mean_mc = 20000;  // bridges per winding for the Dirichlet mean of (ω, f)
  GibbsOptions chain;
};

struct IbpResult {
  Estimate lhs;
  Estimate rhs;
  Estimate difference;  // per-sample lhs - rhs
  double mean_f = 0.0;  // E_ν (ω, f)
  bool pass = false;    // |difference| ≤ 3σ
};

/// Both sides of the integration-by-parts identity
///   E[Σ_ω (ω,f) F(φ-δ_ω) G(φ) - m_f F G] = ∫ν(dω) E[(ω,f) F(φ) (G(φ+ω) e^{-Δε} - G(φ))]
/// with m_f = ∫ν (ω,f), the Charlier-centred form of the normal-ordered
/// product. V = 0 uses exact Poisson draws, otherwise a Gibbs chain.
IbpResult integration_by_parts_check(double z, const BoxRegion& region, const PairPotential& V,
                                     const SpaceTimeBump& f, const Cylindrical& F, const Cylindrical& G,
                                     std::uint64_t seed, const IbpOptions& opt = {});

// ---------------------------------------------------------------------------
// Reduced density matrix
// ---------------------------------------------------------------------------

struct RdmResult {
  Estimate value;
  bool upper_bound = false;  // value ≤ 2σ: `bound` is the reportable number
  double bound = 0.0;
  double exact_free = 0.0;   // Σ_j z^j K_{jβ}(x, y) of the free gas, for reference
};

/// Σ_j z^j K_{jβ}(x, y): the V = 0 kernel (image sums or Dirichlet images).
double free_rdm(double z, const BoxRegion& region, const Vec& x, const Vec& y, int j_max = 0);

/// ρ(x|y) = E_G[Σ_j z^j ∫dW^{jβ}_{x|y}(ω) e^{-ΔE(ω; φ)}] by open bridges,
/// n_bridges per configuration. Empty `samples` means the V = 0 kernel is
/// estimated against the empty configuration.
RdmResult reduced_density_matrix(double z, const BoxRegion& region, const PairPotential& V,
                                 std::span<const LoopConfiguration> samples, const Vec& x, const Vec& y,
                                 std::size_t n_bridges, std::uint64_t seed, std::size_t n_batches = 20);

/// ∫_Λ ρ(x|x) dx with x drawn uniformly per bridge.
Estimate rdm_trace(double z, const BoxRegion& region, const PairPotential& V,
                   std::span<const LoopConfiguration> samples, std::size_t n_bridges, std::uint64_t seed,
                   std::size_t n_batches = 20);

/// Energy of an open path (beads at phases 0..M) with itself and with c.
/// Endpoint beads carry trapezoid weight 1/2; the (0, M) pair is excluded.
double open_path_energy(std::span<const Vec> path, const LoopConfiguration& c, const PairPotential& V,
                        const BoxRegion& region);

// ---------------------------------------------------------------------------
// Window densities
// ---------------------------------------------------------------------------

/// Mean number density in a cube window of side w: (φ, 1_W) / (β |W|).
Estimate window_density_mc(std::span<const LoopConfiguration> samples, const BoxRegion& region, double window,
                           WindowPlacement where, std::size_t n_batches = 20);

struct SigmaMcOptions {
  std::size_t n_samples = 20000;
  std::size_t burn_in = 500;
  std::size_t thin = 2;
  std::size_t chains = 4;
  GibbsOptions chain;
};

/// Same comparison as sigma_independence_exact from Gibbs runs under both
/// boundary conditions.
SigmaReport sigma_independence_mc(double z, double beta, int d, const PairPotential& V, std::span<const double> Ls,
                                  double window, WindowPlacement where, std::uint64_t seed,
                                  const SigmaMcOptions& opt = {}, double threshold = 0.01);

}  // namespace bose::loops
