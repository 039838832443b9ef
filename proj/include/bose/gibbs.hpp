#pragma once

// Metropolis-Hastings-Green sampler for the loop gas with Gibbs factor
// exp(-ε_V) relative to the free Poisson loop measure.
//
// Loops are treated as cycles: the j rotations of a winding-j path by
// multiples of β carry identical weight, so the state density per loop is
// z^j Π_links p_Δτ(link) with no 1/j. Every move ratio below is derived in
// that representation.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bose/bridge.hpp"
#include "bose/loop_gas.hpp"
#include "bose/potential.hpp"

namespace bose::loops {

enum class Move : int { birth = 0, death, translate, stage, merge, cut };
inline constexpr int kMoveCount = 6;
std::string to_string(Move m);

struct GibbsOptions {
  std::array<double, kMoveCount> move_probability{0.15, 0.15, 0.2, 0.3, 0.1, 0.1};
  double translate_step = 0.5;
  int stage_links = 8;   // regrown links per staging move (capped by the loop length)
  int merge_links = 8;   // regrown links per reconnection in merge/cut, ≤ n_slices
  int j_max = 0;         // 0: adaptive tail rule
  std::size_t moves_per_sweep = 10;
  std::size_t health_window = 500;  // sweeps per acceptance check
  double min_acceptance = 0.01;

  void validate(const BoxRegion& region) const;
};

struct MoveStats {
  std::array<std::uint64_t, kMoveCount> attempted{};
  std::array<std::uint64_t, kMoveCount> accepted{};
  [[nodiscard]] double rate(Move m) const;
  [[nodiscard]] double overall() const;
};

struct MergeProposal {
  std::size_t a = 0, b = 0;  // loop indices, a ≠ b
  std::ptrdiff_t p = 0;      // bead of a
  std::ptrdiff_t q = 0;      // bead of b at the same phase as p
  BridgeLoop merged;
};

struct CutProposal {
  std::size_t c = 0;         // loop index
  std::ptrdiff_t u = 0;      // first cut bead
  int k = 1;                 // winding of the piece after u
  BridgeLoop piece1;         // winding j_c - k, contains c_u
  BridgeLoop piece2;         // winding k, contains c_{u + k n_s}
  std::ptrdiff_t p1 = 0;     // index of c_u in piece1
  std::ptrdiff_t p2 = 0;     // index of c_{u + k n_s} in piece2
};

struct MoveRatio {
  double log_ratio = -kInf;
  double energy_change = 0.0;
};

/// Proposal construction and log acceptance ratios, independent of any chain
/// state. Each ratio is log[π(y) T(y→x) / (π(x) T(x→y))] for the move x→y.
class MoveKernel {
 public:
  MoveKernel(double z, BoxRegion region, PairPotential V, GibbsOptions opt);

  [[nodiscard]] const LoopIntensities& intensities() const { return nu_; }
  [[nodiscard]] const BoxRegion& region() const { return region_; }
  [[nodiscard]] const PairPotential& potential() const { return V_; }
  [[nodiscard]] const GibbsOptions& options() const { return opt_; }
  [[nodiscard]] double z() const { return nu_.z; }
  [[nodiscard]] int merge_links() const;

  [[nodiscard]] MoveRatio log_ratio_birth(const LoopConfiguration& x, const BridgeLoop& w) const;
  [[nodiscard]] MoveRatio log_ratio_death(const LoopConfiguration& x, std::size_t idx) const;
  [[nodiscard]] MoveRatio log_ratio_replace(const LoopConfiguration& x, std::size_t idx, const BridgeLoop& repl,
                                         std::ptrdiff_t first_link, std::size_t links) const;
  [[nodiscard]] MoveRatio log_ratio_merge(const LoopConfiguration& x, const MergeProposal& m) const;
  [[nodiscard]] MoveRatio log_ratio_cut(const LoopConfiguration& y, const CutProposal& c) const;

  /// Translate every bead of loop idx by δ (wrapped).
  [[nodiscard]] BridgeLoop translated(const BridgeLoop& l, const Vec& delta) const;
  /// Regrows links [first, first + links) keeping their total displacement.
  [[nodiscard]] std::optional<BridgeLoop> restaged(const BridgeLoop& l, std::ptrdiff_t first, std::size_t links,
                                                   Rng& rng) const;
  /// Bridge interior of m links from a to b with a sampled image; nullopt when
  /// a link would exceed L/2.
  [[nodiscard]] std::optional<std::vector<Vec>> bridge_interior(const Vec& a, const Vec& b, int m, Rng& rng) const;
  [[nodiscard]] BridgeLoop assemble_merge(const BridgeLoop& A, const BridgeLoop& B, std::ptrdiff_t p,
                                          std::ptrdiff_t q, const std::vector<Vec>& bridge1,
                                          const std::vector<Vec>& bridge2) const;
  [[nodiscard]] CutProposal assemble_cut(const BridgeLoop& C, std::size_t c, std::ptrdiff_t u, int k,
                                         const std::vector<Vec>& bridge1, const std::vector<Vec>& bridge2) const;
  [[nodiscard]] std::optional<MergeProposal> propose_merge(const LoopConfiguration& x, Rng& rng) const;
  [[nodiscard]] std::optional<CutProposal> propose_cut(const LoopConfiguration& y, Rng& rng) const;

  /// Δε for replacing the loops at `removed` by `added`.
  [[nodiscard]] double energy_change(const LoopConfiguration& x, std::span<const std::size_t> removed,
                                     std::span<const BridgeLoop* const> added) const;

 private:
  double log_p(Move m) const { return std::log(opt_.move_probability[static_cast<int>(m)]); }

  LoopIntensities nu_;
  BoxRegion region_;
  PairPotential V_;
  GibbsOptions opt_;
};

class GibbsChain {
 public:
  GibbsChain(double z, const BoxRegion& region, const PairPotential& V, std::uint64_t seed,
             const GibbsOptions& opt = {});

  /// Starts from a given configuration (validated; must have finite energy).
  void set_configuration(LoopConfiguration c);
  /// One attempt of move m; returns whether it was accepted.
  bool attempt(Move m);
  /// moves_per_sweep attempts with move types drawn from the move probabilities.
  void sweep();
  void run(std::size_t n_sweeps, const std::function<void(const GibbsChain&)>& observer = {});

  [[nodiscard]] const LoopConfiguration& configuration() const { return config_; }
  [[nodiscard]] double energy() const { return energy_; }
  [[nodiscard]] long particle_number() const { return config_.particle_number(); }
  [[nodiscard]] std::size_t sweeps_done() const { return sweeps_; }
  [[nodiscard]] const MoveStats& stats() const { return stats_; }
  [[nodiscard]] const MoveKernel& kernel() const { return kernel_; }
  /// Recomputes ε from scratch and replaces the running value.
  double recompute_energy();

  static std::string csv_header();
  [[nodiscard]] std::string csv_row() const;

  void save_checkpoint(const std::filesystem::path& stem) const;
  static GibbsChain load_checkpoint(const std::filesystem::path& stem, const PairPotential& V,
                                    const GibbsOptions& opt = {});

 private:
  void accept_energy(double delta);
  void health_check();

  MoveKernel kernel_;
  Rng rng_;
  LoopConfiguration config_;
  double energy_ = 0.0;
  std::size_t sweeps_ = 0;
  MoveStats stats_;
  MoveStats window_;
  std::size_t window_sweeps_ = 0;
};

/// Samples after burn-in, one per `thin` sweeps, from a chain started empty.
struct GibbsRun {
  std::vector<LoopConfiguration> samples;
  std::vector<double> particle_number;
  std::vector<double> loop_count;
  std::vector<double> energy;
  double tau_int_N = 0.0;  // integrated autocorrelation time of N, in samples
  MoveStats stats;
};

GibbsRun gibbs_sample(double z, const BoxRegion& region, const PairPotential& V, std::size_t n_samples,
                      std::uint64_t seed, const GibbsOptions& opt = {}, std::size_t burn_in = 200,
                      std::size_t thin = 1, bool keep_configurations = true);

/// n_chains independent chains (seed split per chain), concatenated in chain order.
GibbsRun gibbs_sample_chains(std::size_t n_chains, double z, const BoxRegion& region, const PairPotential& V,
                             std::size_t n_samples_per_chain, std::uint64_t seed, const GibbsOptions& opt = {},
                             std::size_t burn_in = 200, std::size_t thin = 1, bool keep_configurations = true);

}  // namespace bose::loops
