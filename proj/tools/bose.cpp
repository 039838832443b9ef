// bose ideal|gauss|loops|expand|oracle|check --config FILE [--seed N] [--out DIR] [--threads K] [--force]
// bose sweep --config FILE [--axis section.key --values v1,v2,...]
//
// Exit status: 0 success, 1 an invariant check failed, 2 bad configuration or
// usage, 3 runtime failure (budget, divergence, chain health).

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

#include "bose/config.hpp"
#include "bose/runner.hpp"

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  bool force = false;
  std::optional<std::size_t> max_sweeps;
  std::string axis;
  std::vector<std::string> values;
  bool values_given = false;
};

void common_flags(CLI::App* sub, Args& a, bool config_required) {
  auto* opt = sub->add_option("--config", a.config, "run configuration (INI)");
  if (config_required) opt->required();
  opt->check(CLI::ExistingFile);
  sub->add_option("--seed", a.seed, "root seed (overrides [run] seed)");
  sub->add_option("--out", a.out, "output directory (overrides [run] output)");
  sub->add_option("--threads", a.threads, "OpenMP threads")->check(CLI::Range(1, 4096));
  sub->add_flag("--force", a.force, "overwrite existing results");
  sub->add_option("--max-sweeps", a.max_sweeps, "pause Markov chains after this many sweeps (resumable)")
      ->check(CLI::PositiveNumber);
}

int execute(const std::string& command, const Args& a) {
  using bose::config::RunConfig;
  RunConfig c;
  if (!a.config.empty()) {
    c = RunConfig::load(a.config);
  } else {
    c.experiment = bose::config::Experiment::check;
  }
  if (command == "sweep") {
    if (!a.axis.empty()) {
      c.sweep_axis = a.axis;
      c.sweep_values = a.values;
      // Re-parse through the schema so bad values fail before anything runs.
      for (const auto& v : c.sweep_values) {
        RunConfig probe = c;
        probe.set(c.sweep_axis, v);
        probe.validate();
      }
    }
    if (!c.has_sweep()) throw bose::ConfigError("sweep needs [sweep] axis/values in the config or --axis/--values");
  } else if (bose::config::to_string(c.experiment) != command) {
    throw bose::ConfigError(fmt::format("{} declares experiment '{}', not '{}'", a.config,
                                        bose::config::to_string(c.experiment), command));
  }
  bose::runner::RunOptions o;
  o.seed = a.seed;
  o.output = a.out;
  o.threads = a.threads;
  o.force = a.force;
  o.max_sweeps = a.max_sweeps;
  o.log = &std::cout;
  const auto s = bose::runner::run(c, o);
  if (s.points_run + s.points_skipped > 1) {
    fmt::print("{} points run, {} resumed from the manifest\n", s.points_run, s.points_skipped);
  }
  return s.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bose gas experiments: ideal gas, thermal fields, loop gas, cluster expansion, exact oracle"};
  app.require_subcommand(1);
  Args a;
  for (const char* name : {"ideal", "gauss", "loops", "expand", "oracle"}) {
    common_flags(app.add_subcommand(name, fmt::format("run a '{}' experiment", name)), a, true);
  }
  common_flags(app.add_subcommand("check", "run the acceptance suite (all criteria without --config)"), a, false);
  auto* sweep = app.add_subcommand("sweep", "cartesian sweep of one key, resumable");
  common_flags(sweep, a, true);
  sweep->add_option("--axis", a.axis, "swept key, section.key");
  sweep->add_option("--values", a.values, "values")->delimiter(',')->expected(0, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bose::runner::usage_error;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return execute(command, a);
  } catch (const bose::ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return bose::runner::usage_error;
  } catch (const bose::io::OutputError& e) {
    fmt::print(stderr, "output error: {}\n", e.what());
    return bose::runner::usage_error;
  } catch (const bose::ArgumentError& e) {
    fmt::print(stderr, "invalid argument: {}\n", e.what());
    return bose::runner::usage_error;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return bose::runner::runtime_error;
  }
}
