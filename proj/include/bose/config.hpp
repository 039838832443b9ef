#pragma once

// Run configuration: a flat INI file with sections. Every key is declared in
// one schema table (config.cpp) with its range check; anything else is an
// error that names the file, line and key. docs/config.md lists the schema.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bose/bridge.hpp"
#include "bose/loop_gas.hpp"
#include "bose/potential.hpp"

namespace bose::config {

enum class Experiment { ideal, gauss, loops, expand, oracle, check };
std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

struct IniEntry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

/// Entries in file order. Syntax errors and duplicate keys throw ConfigError.
std::vector<IniEntry> parse_ini(std::string_view text, const std::string& source);

struct RunConfig {
  // [run]
  Experiment experiment = Experiment::check;
  std::uint64_t seed = 1;
  std::string output = "results";
  int threads = 0;  // 0 keeps the OpenMP default

  // [physics]
  double beta = 1.0;
  std::optional<double> mu;
  std::optional<double> z;
  double c = 0.0;
  bool critical = false;
  double lambda = 0.0;

  // [geometry]
  int d = 3;
  double L = 6.0;
  loops::Boundary boundary = loops::Boundary::periodic;
  int n_x = 8;
  int n_tau = 8;
  int n_slices = 16;
  int mode_cutoff = 0;  // 0: chosen from the tail rule
  double window = 0.0;  // 0: no window densities
  loops::WindowPlacement placement = loops::WindowPlacement::centered;

  // [potential]
  std::string potential = "none";
  double radius = 0.5;
  double height = 1.0;
  double v0 = 1.0, s0 = 0.5, v1 = 0.0, s1 = 1.0;

  // [perturbation]
  std::vector<double> coeffs{0.0, 0.0, 1.0};
  double mollifier = 1.0;
  int region_lo = 0;
  int region_hi = 0;         // exclusive; 0 means the whole grid
  double kernel_width = 0.0; // > 0: nonlocal with a Gaussian kernel

  // [sampler]
  std::size_t samples = 1000;
  std::size_t burn_in = 200;
  std::size_t thin = 1;
  std::size_t chains = 1;
  std::size_t batches = 20;
  std::size_t checkpoint_every = 1000;  // sweeps between loop-chain checkpoints
  std::size_t n_mc = 100000;
  int order = 2;
  bool static_paths = false;
  int grid_r = 6;
  int grid_theta = 8;
  std::vector<int> sizes;  // ergodicity volumes (n_x per axis)
  int n_max = 6;
  double state_budget = 1e7;

  // [check]
  std::string suite = "default";
  std::vector<int> criteria;  // empty: all

  // [sweep]
  std::string sweep_axis;
  std::vector<std::string> sweep_values;
  [[nodiscard]] bool has_sweep() const { return !sweep_axis.empty(); }

  static RunConfig parse(std::string_view text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Assigns "section.key" with the same checks as the parser.
  void set(const std::string& dotted_key, const std::string& value);
  /// Cross-field requirements of the chosen experiment.
  void validate() const;

  /// Every numerics-relevant key, resolved, one "section.key = value" per line.
  /// Output path, thread count and the sweep block are excluded.
  [[nodiscard]] std::string canonical() const;
  /// 16 hex digits of a 64-bit FNV-1a hash of canonical().
  [[nodiscard]] std::string hash() const;

  [[nodiscard]] loops::PairPotential pair_potential() const;
  [[nodiscard]] loops::BoxRegion region() const;
};

/// All declared "section.key" names, in schema order.
std::vector<std::string> schema_keys();

}  // namespace bose::config
