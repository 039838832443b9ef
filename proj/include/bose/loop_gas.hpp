#pragma once

// The Poisson loop gas: interaction energy of loop configurations, test
// function pairings (φ, f), the characteristic functional, the V = 0 trace
// identity and exact boundary-condition comparisons.

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bose/bridge.hpp"
#include "bose/potential.hpp"

namespace bose::loops {

// ---------------------------------------------------------------------------
// Interaction energy
// ---------------------------------------------------------------------------

/// ε = Δτ Σ_phases Σ over unordered pairs of distinct beads at the same phase
/// (all loops, same-loop distinct legs included). +∞ on hard-core overlap.
double interaction_energy(const LoopConfiguration& c, const PairPotential& V, const BoxRegion& region);
double interaction_energy_serial(const LoopConfiguration& c, const PairPotential& V, const BoxRegion& region);

/// Energy between two distinct loops.
double pair_energy(const BridgeLoop& a, const BridgeLoop& b, const PairPotential& V, const BoxRegion& region);
/// Distinct-leg energy within one loop.
double self_energy(const BridgeLoop& a, const PairPotential& V, const BoxRegion& region);
/// Σ pair_energy(w, loop) over loops of c whose index is not in `skip`.
double energy_against(const LoopConfiguration& c, const BridgeLoop& w, std::span<const std::size_t> skip,
                      const PairPotential& V, const BoxRegion& region);

// ---------------------------------------------------------------------------
// Test functions and pairings
// ---------------------------------------------------------------------------

using TestFunction = std::function<double(double tau, const Vec& x)>;

/// amplitude · exp(-|x - c|²/2w²) on the cube |x_i - c_i| ≤ 4w, times the
/// indicator of the time window [t0, t1). Distances are minimum-image in
/// periodic boxes.
struct SpaceTimeBump {
  Vec center{0, 0, 0};
  double width = 0.5;
  double amplitude = 1.0;
  double t0 = 0.0;
  double t1 = 1.0;

  [[nodiscard]] double operator()(double tau, const Vec& x, const BoxRegion& region) const;
  /// ∫ over space of the spatial profile (exact, erf).
  [[nodiscard]] double spatial_integral(int d) const;
  [[nodiscard]] TestFunction bind(const BoxRegion& region) const;
  /// True when the space-time supports of the two bumps do not meet.
  [[nodiscard]] bool disjoint(const SpaceTimeBump& o, const BoxRegion& region) const;
};

/// (ω, f) = ∫_0^{jβ} f(τ, ω(τ)) dτ, trapezoid at resolution Δτ.
double pairing(const BridgeLoop& loop, const TestFunction& f, const BoxRegion& region);
/// (φ, f) = Σ_loops (ω, f).
double pairing(const LoopConfiguration& c, const TestFunction& f, const BoxRegion& region);

/// E_P(φ, f) = Σ_j ν_j E_j(ω, f) in closed form (periodic boxes only, where
/// every bead is uniformly distributed).
double free_pairing_mean(const SpaceTimeBump& f, const LoopIntensities& nu, const BoxRegion& region);
/// Same by Monte Carlo over proposal bridges (any boundary).
Estimate free_pairing_mean_mc(const TestFunction& f, const LoopIntensities& nu, const BoxRegion& region,
                              std::size_t n_per_winding, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Characteristic functional
// ---------------------------------------------------------------------------

struct CharacteristicResult {
  std::complex<double> log_explicit;  // Σ_j ν_j E_j[e^{i(ω,f)} - 1]
  Estimate explicit_re, explicit_im;  // Γ from the explicit formula
  Estimate empirical_re, empirical_im;  // mean of e^{i(φ,f)} over configurations
  int j_max = 0;
  bool agree = false;  // both components within 3 combined σ
};

CharacteristicResult characteristic_functional(double z, const BoxRegion& region, const TestFunction& f,
                                               std::size_t n_mc, std::uint64_t seed, int j_max = 0);

// ---------------------------------------------------------------------------
// Exact V = 0 identities
// ---------------------------------------------------------------------------

struct TraceIdentityResult {
  double lhs = 0.0;  // -Σ_k ln(1 - z e^{-βλ_k}) from the box spectrum
  double rhs = 0.0;  // Σ_j (z^j/j) M_j from bridge masses
  double difference = 0.0;
  int j_max = 0;
  int mode_cutoff = 0;
  std::size_t modes = 0;
};

/// μ > 0, z = e^{-βμ}. Spectrum: torus modes (periodic) or sine modes (Dirichlet).
TraceIdentityResult trace_identity_check(double mu, const BoxRegion& region);

enum class WindowPlacement { centered, wall };

/// Mean density over a cube window of side w: centered in the box or
/// touching the wall at the origin. Exact for V = 0 (Σ_j z^j p_{jβ}(x, x)
/// averaged with erf integrals of the image sum).
double window_density_exact(double z, const BoxRegion& region, double window, WindowPlacement where,
                            int j_max = 0);

struct SigmaRow {
  double L = 0.0;
  double periodic = 0.0;
  double dirichlet = 0.0;
  double periodic_error = 0.0;
  double dirichlet_error = 0.0;
  double gap = 0.0;  // |dirichlet - periodic| / periodic
  double gap_error = 0.0;
};

struct SigmaReport {
  std::vector<SigmaRow> rows;
  bool monotone = false;  // gap decreasing within error
  double final_gap = 0.0;
  bool shrinks = false;   // monotone and final gap below threshold
};

/// Centered (or wall) window density under both boundary conditions at V = 0.
SigmaReport sigma_independence_exact(double z, double beta, int d, std::span<const double> Ls, double window,
                                     WindowPlacement where, double threshold = 0.01);
/// Builds the monotonicity/threshold verdict from filled rows.
SigmaReport summarize_sigma(std::vector<SigmaRow> rows, double threshold);

}  // namespace bose::loops
