#pragma once

// Batch driver: runs one configured experiment (or a sweep of it) and writes
// its records, tables and documents under the output directory.
//
// Layout of a single run:
//   records.csv / records.json   every emitted number, value ± error or "exact"
//   <table>.csv, <doc>.json      experiment-specific, plot-ready
//   run.json                     resolved config, hash, seed, code version
//   timing.json                  wall time (the only nondeterministic file)
// A sweep writes one such directory per point under points/NNN/, a
// manifest.json of completed points, and combined tables at the top level
// with the swept value as the leading column.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "bose/config.hpp"
#include "bose/io.hpp"

namespace bose::runner {

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<int> threads;
  bool force = false;
  /// Pause every Markov chain after this many sweeps of the current
  /// invocation; checkpoints are written and a rerun resumes them.
  std::optional<std::size_t> max_sweeps;
  std::ostream* log = nullptr;  // progress lines; null for silence
};

enum ExitCode : int { ok = 0, invariant_failure = 1, usage_error = 2, runtime_error = 3 };

struct RunSummary {
  int exit_code = ok;
  std::filesystem::path directory;
  std::size_t points_run = 0;
  std::size_t points_skipped = 0;
  bool paused = false;
};

/// Throws ResourceError when the configuration would exceed a memory or
/// enumeration budget; called for every point before any work starts.
void preflight(const config::RunConfig& c);

/// Runs the experiment in memory. `work_dir` receives checkpoints and
/// snapshots; records come back with config_hash filled in.
io::ExperimentOutput run_experiment(const config::RunConfig& c, const std::filesystem::path& work_dir,
                                    std::ostream* log = nullptr, std::optional<std::size_t> max_sweeps = {});

/// Applies the overrides, then runs a single point or the configured sweep.
RunSummary run(config::RunConfig c, const RunOptions& opt);

/// Per-point seed of a sweep: derive_seed(seed, experiment kind, index).
std::uint64_t point_seed(const config::RunConfig& c, std::size_t index);

}  // namespace bose::runner
