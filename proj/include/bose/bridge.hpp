#pragma once

// Brownian bridges on a box, the building blocks of the loop gas.
//
// Units follow the rest of the library: the one-particle heat kernel is
// g_t(x) = (4πt)^{-d/2} exp(-|x|²/4t). A loop of winding j is a closed path
// of duration jβ sampled at M = j·n_slices beads, bead k sitting at time kΔτ.
// The closing point at time jβ is bead 0 again and is not stored twice.
//
// Periodic boxes store wrapped coordinates in [0, L); every link is read as
// its minimum-image displacement. This drops link images of weight
// exp(-L²/16Δτ), which is below 1e-30 for the box sizes used here, and moves
// that would create a link longer than L/2 are rejected outright.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bose/common.hpp"

namespace bose::loops {

enum class Boundary { periodic, dirichlet };
std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

struct BoxRegion {
  int d = 3;
  double L = 1.0;
  Boundary boundary = Boundary::periodic;
  double beta = 1.0;
  int n_slices = 16;

  /// d in 1..3, L > 0, β > 0, n_slices ≥ 2.
  void validate() const;
  [[nodiscard]] double dtau() const { return beta / n_slices; }
  [[nodiscard]] double volume() const { return std::pow(L, d); }
  [[nodiscard]] bool periodic() const { return boundary == Boundary::periodic; }
};

struct BridgeLoop {
  int j = 1;
  std::vector<Vec> beads;  // size j * n_slices

  [[nodiscard]] std::size_t size() const { return beads.size(); }
  /// Bead k mod M.
  [[nodiscard]] const Vec& at(std::ptrdiff_t k) const;
  /// M + 1 points, the last one equal to the first.
  [[nodiscard]] std::vector<Vec> closed_path() const;
};

/// Throws ArgumentError unless the loop has j·n_slices beads inside the box
/// (strictly inside for Dirichlet, in [0, L) for periodic) and, for periodic
/// boxes, every link is shorter than L/2 per coordinate.
void validate_loop(const BridgeLoop& loop, const BoxRegion& region);

struct LoopConfiguration {
  std::vector<BridgeLoop> loops;

  [[nodiscard]] long particle_number() const;
  [[nodiscard]] std::size_t loop_count() const { return loops.size(); }
  /// Histogram of windings, index j (entry 0 unused).
  [[nodiscard]] std::vector<long> winding_counts(int j_max) const;
};

namespace heat {

/// One-dimensional free kernel (4πt)^{-1/2} e^{-u²/4t}.
double gauss1(double u, double t);
/// Σ_n g_t(u + nL).
double periodic1(double u, double t, double L);
/// Σ_n e^{-n²L²/(4t)}: the winding factor of a closed path of duration t.
double winding_factor1(double t, double L);
/// Dirichlet kernel on (0, L) by images: Σ_n [g_t(a-b+2nL) - g_t(a+b+2nL)].
double dirichlet1(double a, double b, double t, double L);
/// dirichlet1 / gauss1(a-b): survival probability of the free bridge from a
/// to b in time t (0 if an endpoint is outside (0, L)).
double survival1(double a, double b, double t, double L);
/// ∫_0^L p^D_t(x, x) dx = (L/√(4πt)) Σ_n e^{-n²L²/t} - 1/2.
double dirichlet_trace1(double t, double L);

}  // namespace heat

/// Total diagonal bridge mass M_j(Λ) = ∫_Λ p^Λ_{jβ}(x, x) dx.
double bridge_mass(const BoxRegion& region, int j);
/// Mass of the proposal family: M_j for periodic, |Λ|(4πjβ)^{-d/2} for
/// Dirichlet (free bridges later thinned by their survival weight).
double proposal_mass(const BoxRegion& region, int j);

/// Smallest J with Σ_{j>J} z^j j^{-1-d/2} < tail; ActivityError when z ∉ [0, 1)
/// or J would exceed `cap`.
int choose_j_max(double z, int d, double tail = 1e-10, int cap = 20000);

/// Minimum-image (periodic) or plain (Dirichlet) displacement b - a.
Vec displacement(const BoxRegion& region, const Vec& a, const Vec& b);
/// Squared distance under the same convention.
double distance2(const BoxRegion& region, const Vec& a, const Vec& b);
/// Maps into [0, L) for periodic boxes; identity for Dirichlet.
Vec wrap(const BoxRegion& region, Vec x);

/// Fills out[1..m-1] with a Brownian bridge from out[0] to out[m] of link
/// time dtau, by recursive midpoint refinement (unwrapped coordinates).
void fill_bridge(std::span<Vec> out, double dtau, int d, Rng& rng);

/// Periodic: image displacement D ≡ D0 (mod L) drawn ∝ Π_i g_t(D_i).
/// Dirichlet: D0 itself.
Vec sample_image_displacement(const BoxRegion& region, const Vec& D0, double t, Rng& rng);

/// Density of the endpoint pair under the bridge proposal: Π_i periodic1 for
/// periodic boxes, the free kernel for Dirichlet.
double endpoint_kernel(const BoxRegion& region, const Vec& a, const Vec& b, double t);

/// Product of per-link Dirichlet survival factors over links [first, first+count)
/// (1 for periodic boxes, 0 if a bead leaves the box).
double survival_weight(const BoxRegion& region, const BridgeLoop& loop, std::ptrdiff_t first, std::size_t count);
double survival_weight(const BoxRegion& region, const BridgeLoop& loop);

/// True when every link in [first, first+count) is shorter than L/2 per
/// coordinate (always true for Dirichlet).
bool links_resolvable(const BoxRegion& region, std::span<const Vec> unwrapped);

/// Loop drawn from the proposal family of winding j: uniform base point,
/// image winding (periodic) and a recursive-midpoint bridge.
BridgeLoop propose_loop(const BoxRegion& region, int j, Rng& rng);

/// Loop intensities ν_j = z^j M_j / j, j = 1..j_max.
struct LoopIntensities {
  double z = 0.0;
  int j_max = 0;
  std::vector<double> nu;        // index j, nu[0] = 0
  std::vector<double> proposal;  // z^j proposal_mass / j
  double total = 0.0;            // Σ nu
  double proposal_total = 0.0;   // Σ proposal

  static LoopIntensities make(double z, const BoxRegion& region, int j_max = 0);
  /// Winding drawn ∝ proposal[j].
  [[nodiscard]] int sample_winding(Rng& rng) const;
};

/// One configuration of the free Poisson loop measure: Poisson(ν_j) loops
/// of each winding (Dirichlet loops by thinning of free proposals).
LoopConfiguration sample_free_poisson(double z, const BoxRegion& region, std::uint64_t seed, int j_max = 0);
LoopConfiguration sample_free_poisson(const LoopIntensities& nu, const BoxRegion& region, std::uint64_t seed);

}  // namespace bose::loops
