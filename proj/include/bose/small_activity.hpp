#pragma once

// Small-activity expansion of the loop gas. With the pressure series
// βp = Σ_n b_n z^n and the density ρ = Σ_n n b_n z^n, b_n collects every
// connected cluster of loops whose windings add up to n:
//
//   n = 1   one 1-loop                       M₁
//   n = 2   one 2-loop                       (M₂/2) E[e^{-U}]
//           two 1-loops                      (M₁²/2) E[f]
//   n = 3   one 3-loop                       (M₃/3) E[e^{-U}]
//           a 2-loop and a 1-loop            (M₂/2) M₁ E[e^{-U} f]
//           three 1-loops                    (M₁³/6) E[f f f + f f + ...]
//
// all divided by |Λ|. U is the distinct-leg self energy, f = e^{-W} - 1 the
// loop-loop Mayer factor. Relative base points are drawn uniformly from a
// cube that holds every contributing displacement.

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "bose/bridge.hpp"
#include "bose/potential.hpp"

namespace bose::series {

using loops::BoxRegion;
using loops::PairPotential;

struct MayerOptions {
  std::size_t n_mc = 100000;
  std::uint64_t seed = 1;
  /// Zero-variance paths: each loop sits at its base point. Reproduces the
  /// classical virial coefficients; for tests.
  bool static_paths = false;
};

struct SectorValue {
  std::string sector;  // e.g. "1+1"
  Estimate value;      // contribution to b_n
};

struct MayerCoefficient {
  int n = 1;
  Estimate value;                    // b_n per volume
  double free_value = 0.0;           // M_n / (n |Λ|)
  std::vector<SectorValue> sectors;
  std::string warning;               // set when the MC error is not under control
};

/// Distance beyond which |V| < 1e-12 (the hard-core radius for pure hard cores).
double effective_range(const PairPotential& V);

MayerCoefficient mayer_coefficient(int n, const PairPotential& V, const BoxRegion& region,
                                   const MayerOptions& opt = {});

/// b_1..b_order.
std::vector<MayerCoefficient> mayer_coefficients(int order, const PairPotential& V, const BoxRegion& region,
                                                 const MayerOptions& opt = {});

struct ConvergenceEstimate {
  double radius_lower_bound = 0.0;  // in z, capped at the free radius 1
  double kirkwood_salsburg = 0.0;   // e^{-2βB-1}/(C + 2σ_C) before the cap
  double stability_constant = 0.0;
  Estimate C;                       // C(β, V)
  double beta = 1.0;
};

/// e^{-2βB-1}/C with C = (4πβ)^{-d/2} ∫dx E|f| over 1-loop pairs; the MC error
/// is added to C before dividing (2σ), and the result is capped at the free
/// radius 1.
ConvergenceEstimate convergence_radius(const PairPotential& V, const BoxRegion& region, std::size_t n_mc = 100000,
                                       std::uint64_t seed = 1);

struct SeriesDensity {
  Estimate value;            // error combines MC and truncation
  double truncation = 0.0;   // |N b_N z^N| of the last retained order
  int order = 0;
};

/// Σ n b_n z^n. ActivityError (with the bound in the message) when z exceeds
/// `radius` (pass the radius from convergence_radius).
SeriesDensity series_density(double z, const std::vector<MayerCoefficient>& coeffs, double radius);

struct PartitionShift {
  Estimate monte_carlo;  // log E_P[e^{-ε}] from free Poisson draws
  Estimate series;       // |Λ| Σ_n (b_n - b_n^free) z^n
  bool agree = false;
};

/// The interacting branch of the trace identity, compared order by order.
PartitionShift log_partition_shift(double z, const PairPotential& V, const BoxRegion& region,
                                   const std::vector<MayerCoefficient>& coeffs, std::size_t n_draws,
                                   std::uint64_t seed);

std::string coefficients_csv(const std::vector<MayerCoefficient>& coeffs);
nlohmann::json radius_json(const ConvergenceEstimate& c);

}  // namespace bose::series
