#include "bose/runner.hpp"

#include <fmt/format.h>

#include <chrono>
#include <ostream>
#include <sstream>

#include "bose/acceptance.hpp"
#include "bose/fock_oracle.hpp"
#include "bose/gibbs.hpp"
#include "bose/kernels.hpp"
#include "bose/loop_observables.hpp"
#include "bose/small_activity.hpp"
#include "bose/spectral_gas.hpp"
#include "bose/thermal_field.hpp"

namespace bose::runner {

namespace fs = std::filesystem;
using config::Experiment;
using config::RunConfig;
using io::Cell;
using io::ExperimentOutput;
using io::ResultRecord;
using io::Table;
using nlohmann::json;

namespace {

constexpr double kValueBudget = 1LL << 27;  // doubles held at once by one field or chain

void say(std::ostream* log, const std::string& line) {
  if (log != nullptr) *log << line << '\n' << std::flush;
}

int torus_cutoff(const RunConfig& c) {
  return c.mode_cutoff > 0 ? c.mode_cutoff : spectral::torus_for(c.d, c.L, c.beta).mode_cutoff;
}

// ---------------------------------------------------------------------------
// ideal

ExperimentOutput run_ideal(const RunConfig& c) {
  const auto spec = spectral::build_torus_spectrum({c.d, c.L, torus_cutoff(c)});
  const auto dos = spectral::DensityOfStates::analytic(c.d);
  spectral::IdealRecord rec;
  rec.beta = c.beta;
  rec.mu = *c.mu;
  rec.L = c.L;
  rec.d = c.d;
  rec.pressure = spectral::pressure(spec, c.beta, *c.mu);
  rec.density = spectral::density(spec, c.beta, *c.mu);
  rec.rho_cr = spectral::critical_density(c.beta, dos);
  rec.condensate_fraction = spectral::condensate_fraction(c.beta, rec.density, dos);

  ExperimentOutput out;
  Table t;
  t.columns = {"beta", "mu", "L", "d", "pressure", "density", "rho_cr", "condensate_fraction"};
  t.add({rec.beta, rec.mu, rec.L, static_cast<long long>(rec.d), rec.pressure, rec.density, rec.rho_cr,
         rec.condensate_fraction});
  out.add_table("ideal", std::move(t));
  out.records = {ResultRecord::exact("pressure", rec.pressure), ResultRecord::exact("density", rec.density),
                 ResultRecord::exact("rho_cr", rec.rho_cr),
                 ResultRecord::exact("condensate_fraction", rec.condensate_fraction)};
  return out;
}

// ---------------------------------------------------------------------------
// gauss

std::vector<double> centered_bump(const thermal::FieldGrid& G) {
  std::vector<double> f(G.sites());
  const double w = G.L / 8.0;
  for (std::size_t s = 0; s < f.size(); ++s) {
    const auto x = G.coords(s);
    double r2 = 0.0;
    for (int i = 0; i < G.d; ++i) {
      const double dx = x[i] * G.spacing() - G.L / 2;
      r2 += dx * dx;
    }
    f[s] = std::exp(-r2 / (2 * w * w));
  }
  return f;
}

thermal::PolynomialPerturbation make_perturbation(const RunConfig& c) {
  const int hi = c.region_hi == 0 ? c.n_x : c.region_hi;
  thermal::SubBox box;
  for (int i = 0; i < c.d; ++i) {
    box.lo[i] = c.region_lo;
    box.hi[i] = hi;
  }
  if (c.kernel_width > 0.0) {
    const double w = c.kernel_width;
    return {c.coeffs, c.lambda, c.mollifier, box, [w](double r) { return std::exp(-r * r / (2 * w * w)); }};
  }
  return {c.coeffs, c.lambda, c.mollifier, box};
}

ExperimentOutput run_gauss(const RunConfig& c, std::uint64_t seed, const fs::path& dir) {
  thermal::ThermalFieldParams p{{c.beta, c.n_tau, c.d, c.L, c.n_x}, c.critical ? 0.0 : *c.mu, c.critical, c.c};
  p.validate();
  const thermal::FieldSampler sampler(p);
  const auto f = centered_bump(p.grid);
  ExperimentOutput out;

  // Covariance of φ(f, 0) with φ(f, τ) against the exact kernel.
  const int steps = c.n_tau / 2 + 1;
  const std::size_t B = kernels::kReduceChunks;
  std::vector<std::vector<RunningStats>> acc(B, std::vector<RunningStats>(steps));
  kernels::for_each_index(B, [&](std::size_t b) {
    const auto [lo, hi] = kernels::chunk_bounds(c.samples, b);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto s = sampler.draw(derive_seed(seed, "field", i));
      const double a = s.smear(f, 0);
      for (int t = 0; t < steps; ++t) acc[b][t].add(a * s.smear(f, t));
    }
  });
  Table cov;
  cov.columns = {"tau", "exact", "empirical", "std_error"};
  for (int t = 0; t < steps; ++t) {
    RunningStats total;
    for (const auto& batch : acc) total.merge(batch[t]);
    const double tau = t * p.grid.dtau();
    const double exact = thermal::covariance(p, f, f, tau);
    cov.add({tau, exact, total.mean(), total.std_error()});
    out.records.push_back(ResultRecord::measured(fmt::format("covariance_t{}", t), total.estimate(),
                                                 static_cast<double>(c.samples)));
    out.records.push_back(ResultRecord::exact(fmt::format("covariance_exact_t{}", t), exact));
  }
  out.add_table("covariance", std::move(cov));
  out.records.push_back(ResultRecord::exact("weyl_expectation", thermal::weyl_expectation(p, f)));
  thermal::export_snapshot(sampler.draw(derive_seed(seed, "snapshot", 0)), dir / "snapshot");

  if (!c.sizes.empty()) {
    const auto rep = thermal::ergodicity_diagnostic(p, c.samples, c.sizes, derive_seed(seed, "ergodicity", 0));
    Table t;
    t.columns = {"volume", "variance", "std_error"};
    for (std::size_t i = 0; i < rep.volume.size(); ++i) t.add({rep.volume[i], rep.variance[i], rep.variance_error[i]});
    out.add_table("ergodicity", std::move(t));
    out.records.push_back(ResultRecord::measured("ergodicity_slope", {rep.slope, rep.slope_error}));
    out.add_document("ergodicity", {{"status", thermal::to_string(rep.status)},
                                    {"slope", rep.slope},
                                    {"slope_error", rep.slope_error},
                                    {"plateau_threshold", rep.plateau_threshold}});
  }

  if (c.critical) {
    const auto pert = make_perturbation(c);
    pert.validate_for(p.grid);
    const auto mix = thermal::renormalized_mixing(p, pert, c.grid_r, c.grid_theta, c.samples,
                                                  derive_seed(seed, "mixing", 0), c.batches);
    Table t;
    t.columns = {"r", "theta", "base_weight", "ratio", "ratio_error", "weight"};
    for (const auto& n : mix.nodes) t.add({n.r, n.theta, n.base_weight, n.ratio, n.ratio_error, n.weight});
    out.add_table("mixing", std::move(t));
    out.records.push_back(ResultRecord::measured("mean_ren_r", mix.mean_r));
    out.records.push_back(ResultRecord::measured("var_ren_r", mix.var_r));
  } else if (c.lambda > 0.0) {
    const auto pert = make_perturbation(c);
    pert.validate_for(p.grid);
    thermal::ReweightOptions ro;
    ro.jackknife_blocks = c.batches;
    const auto st = thermal::reweighted_state(p, pert, f, c.samples, derive_seed(seed, "reweight", 0), ro);
    out.add_document("reweighted_state", {{"ess", st.ess}, {"diagnostic", st.diagnostic}});
    if (st.real) {
      out.records.push_back(ResultRecord::measured("weyl_perturbed_re", *st.real, st.ess));
      out.records.push_back(ResultRecord::measured("weyl_perturbed_im", *st.imag, st.ess));
    } else {
      out.message = "reweighting refused: " + st.diagnostic;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// loops

loops::GibbsOptions gibbs_options(const RunConfig& c) {
  loops::GibbsOptions o;
  o.stage_links = std::min(8, c.n_slices);
  o.merge_links = std::min(8, c.n_slices);
  return o;
}

struct ChainStream {
  std::vector<std::string> rows;
  std::vector<double> N, loops, energy;

  void add(const std::string& row) {
    rows.push_back(row);
    std::istringstream is(row);
    std::string cell;
    std::vector<double> v;
    while (std::getline(is, cell, ',')) v.push_back(std::stod(cell));
    N.push_back(v.at(1));
    loops.push_back(v.at(2));
    energy.push_back(v.at(3));
  }
};

// Runs (or resumes) chain `ch`, checkpointing its state and its observable
// stream together every checkpoint_every sweeps.
ChainStream run_chain(const RunConfig& c, std::uint64_t seed, std::size_t ch, const fs::path& dir,
                      std::optional<std::size_t> max_sweeps, bool& finished) {
  const auto region = c.region();
  const auto V = c.pair_potential();
  const auto opt = gibbs_options(c);
  const fs::path stem = dir / fmt::format("chain{}", ch);
  const fs::path stream_path = dir / fmt::format("chain{}.csv", ch);
  const fs::path progress_path = dir / fmt::format("chain{}.progress.json", ch);
  const std::size_t total = c.burn_in + c.samples * c.thin;

  std::optional<loops::GibbsChain> chain;
  ChainStream stream;
  if (fs::exists(progress_path) && fs::exists(stem.string() + ".bin")) {
    const auto prog = json::parse(io::read_file(progress_path));
    if (prog.at("config_hash") == c.hash() && prog.at("seed") == seed) {
      auto loaded = loops::GibbsChain::load_checkpoint(stem, V, opt);
      const std::string text = io::read_file(stream_path);
      std::istringstream is(text);
      std::string line;
      std::getline(is, line);  // header
      while (std::getline(is, line)) {
        if (!line.empty()) stream.add(line);
      }
      if (loaded.sweeps_done() == prog.at("sweeps").get<std::size_t>() &&
          stream.rows.size() == prog.at("rows").get<std::size_t>()) {
        chain.emplace(std::move(loaded));
      } else {
        stream = {};
      }
    }
  }
  if (!chain) chain.emplace(*c.z, region, V, derive_seed(seed, "chain", ch), opt);

  auto save = [&] {
    std::string text = loops::GibbsChain::csv_header() + '\n';
    for (const auto& r : stream.rows) text += r + '\n';
    io::write_file(stream_path, text);
    chain->save_checkpoint(stem);
    io::write_file(progress_path, json{{"config_hash", c.hash()},
                                       {"seed", seed},
                                       {"sweeps", chain->sweeps_done()},
                                       {"rows", stream.rows.size()}}
                                      .dump(2));
  };
  const std::size_t stop = max_sweeps ? std::min(total, chain->sweeps_done() + *max_sweeps) : total;
  while (chain->sweeps_done() < stop) {
    chain->sweep();
    const std::size_t s = chain->sweeps_done();
    if (s > c.burn_in && (s - c.burn_in) % c.thin == 0) stream.add(chain->csv_row());
    if (s % c.checkpoint_every == 0 || s == stop) save();
  }
  finished = chain->sweeps_done() == total;
  return stream;
}

ExperimentOutput run_loops(const RunConfig& c, std::uint64_t seed, const fs::path& dir,
                           std::optional<std::size_t> max_sweeps) {
  const auto region = c.region();
  const auto V = c.pair_potential();
  std::vector<ChainStream> streams(c.chains);
  std::vector<char> finished(c.chains, 0);
  kernels::for_each_index(c.chains, [&](std::size_t ch) {
    bool f = false;
    streams[ch] = run_chain(c, seed, ch, dir, max_sweeps, f);
    finished[ch] = f;
  });

  ExperimentOutput out;
  if (std::count(finished.begin(), finished.end(), 0) > 0) {
    out.complete = false;
    out.message = "chains paused at the sweep limit; rerun the same command to resume";
    return out;
  }
  Table t;
  t.columns = {"chain", "sweep", "N", "loop_count", "energy"};
  std::vector<double> N, loops_, energy;
  double tau = 1.0;
  for (std::size_t ch = 0; ch < c.chains; ++ch) {
    const auto& s = streams[ch];
    for (std::size_t i = 0; i < s.N.size(); ++i) {
      t.add({static_cast<long long>(ch), static_cast<long long>(c.burn_in + (i + 1) * c.thin), s.N[i], s.loops[i],
             s.energy[i]});
    }
    N.insert(N.end(), s.N.begin(), s.N.end());
    loops_.insert(loops_.end(), s.loops.begin(), s.loops.end());
    energy.insert(energy.end(), s.energy.begin(), s.energy.end());
    tau = std::max(tau, integrated_autocorrelation_time(s.N));
  }
  out.add_table("samples", std::move(t));
  const double ess = static_cast<double>(N.size()) / (2.0 * tau);
  const auto n_est = batch_means(N, c.batches);
  out.records.push_back(ResultRecord::measured("density", {n_est.value / region.volume(), n_est.error / region.volume()}, ess));
  out.records.push_back(ResultRecord::measured("particle_number", n_est, ess));
  out.records.push_back(ResultRecord::measured("loop_count", batch_means(loops_, c.batches), ess));
  out.records.push_back(ResultRecord::measured("energy", batch_means(energy, c.batches), ess));
  out.records.push_back(ResultRecord::exact("tau_int_N", tau));

  const auto nu = loops::LoopIntensities::make(*c.z, region);
  KahanSum free_n;
  for (int j = 1; j <= nu.j_max; ++j) free_n += j * nu.nu[j];
  out.records.push_back(ResultRecord::exact("free_density", free_n.value() / region.volume()));

  if (c.window > 0.0) {
    loops::SigmaMcOptions so;
    so.n_samples = c.samples;
    so.burn_in = c.burn_in;
    so.thin = c.thin;
    so.chains = c.chains;
    so.chain = gibbs_options(c);
    const std::vector<double> Ls{c.L};
    const auto rep = loops::sigma_independence_mc(*c.z, c.beta, c.d, V, Ls, c.window, c.placement,
                                                  derive_seed(seed, "sigma", 0), so);
    Table st;
    st.columns = {"L", "periodic", "periodic_error", "dirichlet", "dirichlet_error", "gap", "gap_error"};
    for (const auto& r : rep.rows) st.add({r.L, r.periodic, r.periodic_error, r.dirichlet, r.dirichlet_error, r.gap, r.gap_error});
    const auto& row = rep.rows.front();
    out.records.push_back(ResultRecord::measured("window_density_periodic", {row.periodic, row.periodic_error}));
    out.records.push_back(ResultRecord::measured("window_density_dirichlet", {row.dirichlet, row.dirichlet_error}));
    out.records.push_back(ResultRecord::measured("window_gap", {row.gap, row.gap_error}));
    if (V.is_zero()) {
      const auto ex = loops::sigma_independence_exact(*c.z, c.beta, c.d, Ls, c.window, c.placement);
      out.records.push_back(ResultRecord::exact("window_gap_exact", ex.rows.front().gap));
    }
    out.add_table("sigma", std::move(st));
  }
  return out;
}

// ---------------------------------------------------------------------------
// expand

ExperimentOutput run_expand(const RunConfig& c, std::uint64_t seed) {
  const auto region = c.region();
  const auto V = c.pair_potential();
  series::MayerOptions mo;
  mo.n_mc = c.n_mc;
  mo.seed = derive_seed(seed, "mayer", 0);
  mo.static_paths = c.static_paths;
  const auto coeffs = series::mayer_coefficients(c.order, V, region, mo);
  const auto radius = series::convergence_radius(V, region, c.n_mc, derive_seed(seed, "radius", 0));

  ExperimentOutput out;
  Table t;
  t.columns = {"n", "sector", "value", "std_error", "free_value"};
  for (const auto& b : coeffs) {
    for (const auto& s : b.sectors) {
      t.add({static_cast<long long>(b.n), s.sector, s.value.value, s.value.error, std::nan("")});
    }
    t.add({static_cast<long long>(b.n), std::string("total"), b.value.value, b.value.error, b.free_value});
    // The one-loop coefficient on a torus is computed in closed form.
    out.records.push_back(b.value.error == 0.0
                              ? ResultRecord::exact(fmt::format("b{}", b.n), b.value.value)
                              : ResultRecord::measured(fmt::format("b{}", b.n), b.value, static_cast<double>(c.n_mc)));
    out.records.push_back(ResultRecord::exact(fmt::format("b{}_free", b.n), b.free_value));
    if (!b.warning.empty()) out.message += fmt::format("b{}: {}; ", b.n, b.warning);
  }
  out.add_table("coefficients", std::move(t));
  out.add_document("radius", series::radius_json(radius));
  out.records.push_back(ResultRecord::measured("kirkwood_salsburg_C", radius.C));
  out.records.push_back(ResultRecord::exact("radius_lower_bound", radius.radius_lower_bound));
  if (c.z) {
    const auto d = series::series_density(*c.z, coeffs, radius.radius_lower_bound);
    out.records.push_back(ResultRecord::measured("series_density", d.value));
    out.records.push_back(ResultRecord::exact("series_truncation", d.truncation));
  }
  return out;
}

// ---------------------------------------------------------------------------
// oracle

std::vector<double> oracle_modes(const RunConfig& c) {
  return spectral::build_torus_spectrum({c.d, c.L, c.mode_cutoff > 0 ? c.mode_cutoff : 1}).eigenvalues;
}

ExperimentOutput run_oracle(const RunConfig& c) {
  const auto modes = oracle_modes(c);
  const double volume = std::pow(c.L, c.d);
  const fock::TruncatedFock f{modes, c.n_max};
  fock::FockOptions fo;
  fo.state_budget = c.state_budget;
  fo.allow_truncation = true;
  std::optional<fock::DiagonalInteraction> inter;
  if (c.lambda > 0.0) inter = fock::DiagonalInteraction::uniform(modes.size(), c.lambda, volume);
  const auto res = fock::enumerate(f, c.beta, *c.mu, inter ? &*inter : nullptr, fo);

  ExperimentOutput out;
  Table t;
  t.columns = {"mode", "energy", "occupation"};
  for (std::size_t k = 0; k < modes.size(); ++k) t.add({static_cast<long long>(k), modes[k], res.occupations[k]});
  out.add_table("occupations", std::move(t));
  out.add_document("oracle", fock::to_json(res));
  out.records = {ResultRecord::exact("logZ", res.logZ), ResultRecord::exact("mean_N", res.mean_N),
                 ResultRecord::exact("var_N", res.var_N), ResultRecord::exact("boundary_weight", res.boundary_weight)};
  if (!inter) {
    const double sp = spectral::pressure(spectral::make_spectrum(modes, volume), c.beta, *c.mu) * volume;
    out.records.push_back(ResultRecord::exact("logZ_spectral_untruncated", sp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// check

ExperimentOutput run_check(const RunConfig& c, std::uint64_t seed, std::ostream* log) {
  acceptance::SuiteOptions so;
  so.seed = seed;
  so.quick = c.suite == "quick";
  so.criteria = c.criteria;
  ExperimentOutput out;
  Table t;
  t.columns = {"criterion", "title", "pass", "detail"};
  int failed = 0;
  acceptance::run_suite(so, [&](const acceptance::CriterionResult& r) {
    say(log, acceptance::format_line(r));
    t.add({static_cast<long long>(r.id), r.title, std::string(r.pass ? "pass" : "fail"), r.detail});
    for (auto rec : r.records) {
      rec.observable = fmt::format("c{}_{}", r.id, rec.observable);
      out.records.push_back(std::move(rec));
    }
    failed += !r.pass;
  });
  out.add_table("acceptance", std::move(t));
  out.failed = failed > 0;
  out.message = fmt::format("{} of {} criteria failed", failed, t.rows.size());
  return out;
}

json run_document(const RunConfig& c, std::uint64_t seed) {
  return {{"experiment", config::to_string(c.experiment)},
          {"config_hash", c.hash()},
          {"seed", seed},
          {"version", io::kCodeVersion},
          {"config", c.canonical()}};
}

ExperimentOutput timed_point(const RunConfig& c, const fs::path& dir, const RunOptions& opt, double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  auto out = run_experiment(c, dir, opt.log, opt.max_sweeps);
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& r : out.records) r.wall_time = seconds;
  return out;
}

void write_point(const fs::path& dir, const RunConfig& c, const ExperimentOutput& out, double seconds) {
  io::write_output(dir, out);
  io::write_file(dir / "run.json", run_document(c, c.seed).dump(2) + '\n');
  io::write_file(dir / "timing.json",
                 json{{"wall_time_s", seconds}, {"threads", kernels::thread_count()}}.dump(2) + '\n');
}

}  // namespace

void preflight(const RunConfig& c) {
  auto fail = [](const std::string& what) { throw ResourceError("preflight: " + what); };
  switch (c.experiment) {
    case Experiment::ideal: {
      const double modes = std::pow(2.0 * torus_cutoff(c) + 1.0, c.d);
      if (modes > static_cast<double>(spectral::kDefaultModeBudget)) fail(fmt::format("{:.3g} torus modes", modes));
      break;
    }
    case Experiment::gauss: {
      double biggest = std::pow(c.n_x, c.d);
      for (int n : c.sizes) biggest = std::max(biggest, std::pow(n, c.d));
      if (biggest * c.n_tau > kValueBudget) fail(fmt::format("{:.3g} field values per sample", biggest * c.n_tau));
      break;
    }
    case Experiment::loops: {
      const auto nu = loops::LoopIntensities::make(*c.z, c.region());
      double mean_n = 0.0;
      for (int j = 1; j <= nu.j_max; ++j) mean_n += j * nu.nu[j];
      const double beads = mean_n * c.n_slices * 3.0 * static_cast<double>(c.chains);
      if (beads > kValueBudget) fail(fmt::format("{:.3g} bead coordinates in flight", beads));
      const double rows = static_cast<double>(c.samples) * static_cast<double>(c.chains);
      if (rows > kValueBudget) fail(fmt::format("{:.3g} stream rows", rows));
      break;
    }
    case Experiment::expand:
      if (c.n_mc > (std::size_t{1} << 34)) fail("n_mc above 2^34");
      break;
    case Experiment::oracle: {
      const double states = std::pow(c.n_max + 1.0, static_cast<double>(oracle_modes(c).size()));
      if (states > c.state_budget) {
        fail(fmt::format("{:.3g} Fock states exceed state_budget {:.3g}", states, c.state_budget));
      }
      break;
    }
    case Experiment::check:
      break;
  }
}

io::ExperimentOutput run_experiment(const RunConfig& c, const fs::path& work_dir, std::ostream* log,
                                    std::optional<std::size_t> max_sweeps) {
  c.validate();
  ExperimentOutput out;
  switch (c.experiment) {
    case Experiment::ideal: out = run_ideal(c); break;
    case Experiment::gauss: out = run_gauss(c, c.seed, work_dir); break;
    case Experiment::loops: out = run_loops(c, c.seed, work_dir, max_sweeps); break;
    case Experiment::expand: out = run_expand(c, c.seed); break;
    case Experiment::oracle: out = run_oracle(c); break;
    case Experiment::check: out = run_check(c, c.seed, log); break;
  }
  const auto h = c.hash();
  for (auto& r : out.records) r.config_hash = h;
  return out;
}

std::uint64_t point_seed(const RunConfig& c, std::size_t index) {
  return derive_seed(c.seed, config::to_string(c.experiment), index);
}

RunSummary run(RunConfig c, const RunOptions& opt) {
  if (opt.seed) c.seed = *opt.seed;
  if (opt.output) c.output = *opt.output;
  if (opt.threads) c.threads = *opt.threads;
  if (c.threads > 0) kernels::set_thread_count(c.threads);
  c.validate();

  RunSummary summary;
  summary.directory = io::resolve_output(c.output);
  const fs::path& dir = summary.directory;

  if (!c.has_sweep()) {
    preflight(c);
    io::claim_directory(dir, opt.force);
    say(opt.log, fmt::format("{} [{}] -> {}", config::to_string(c.experiment), c.hash(), dir.string()));
    double seconds = 0.0;
    const auto out = timed_point(c, dir, opt, seconds);
    if (!out.message.empty()) say(opt.log, out.message);
    if (!out.complete) {
      summary.paused = true;
      return summary;
    }
    write_point(dir, c, out, seconds);
    summary.points_run = 1;
    summary.exit_code = out.failed ? invariant_failure : ok;
    return summary;
  }

  if (c.sweep_values.empty()) {
    say(opt.log, "sweep has no values; nothing to do");
    return summary;
  }

  // Resolve every point and pre-flight all of them before running any.
  std::vector<RunConfig> points;
  for (std::size_t i = 0; i < c.sweep_values.size(); ++i) {
    RunConfig p = c;
    p.sweep_axis.clear();
    p.sweep_values.clear();
    p.set(c.sweep_axis, c.sweep_values[i]);
    p.seed = point_seed(c, i);
    p.validate();
    preflight(p);
    points.push_back(std::move(p));
  }

  json manifest{{"config_hash", c.hash()}, {"axis", c.sweep_axis}, {"values", c.sweep_values},
                {"completed", json::array()}};
  const fs::path manifest_path = dir / "manifest.json";
  std::vector<bool> done(points.size(), false);
  if (fs::exists(manifest_path) && !opt.force) {
    const auto old = json::parse(io::read_file(manifest_path));
    if (old.at("config_hash") != manifest.at("config_hash") || old.at("axis") != manifest.at("axis") ||
        old.at("values") != manifest.at("values")) {
      throw io::OutputError("output directory " + dir.string() +
                            " holds a different sweep; pass --force to overwrite");
    }
    for (const auto& i : old.at("completed")) {
      const auto k = i.get<std::size_t>();
      if (k < done.size() && fs::exists(dir / "points" / fmt::format("{:03d}", k) / "output.json")) done[k] = true;
    }
  } else {
    io::claim_directory(dir, opt.force);
  }

  auto record_manifest = [&] {
    json completed = json::array();
    for (std::size_t i = 0; i < done.size(); ++i)
      if (done[i]) completed.push_back(i);
    manifest["completed"] = completed;
    io::write_file(manifest_path, manifest.dump(2) + '\n');
  };
  record_manifest();

  bool any_failed = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const fs::path pdir = dir / "points" / fmt::format("{:03d}", i);
    if (done[i]) {
      ++summary.points_skipped;
      say(opt.log, fmt::format("point {} ({} = {}) already complete", i, c.sweep_axis, c.sweep_values[i]));
      continue;
    }
    say(opt.log, fmt::format("point {} ({} = {})", i, c.sweep_axis, c.sweep_values[i]));
    fs::create_directories(pdir);
    double seconds = 0.0;
    const auto out = timed_point(points[i], pdir, opt, seconds);
    if (!out.complete) {
      say(opt.log, out.message);
      summary.paused = true;
      return summary;
    }
    write_point(pdir, points[i], out, seconds);
    io::write_file(pdir / "output.json", io::to_json(out).dump() + '\n');
    done[i] = true;
    record_manifest();
    ++summary.points_run;
  }

  // Combined outputs are rebuilt from the stored points, so a resumed sweep
  // produces the same files as an uninterrupted one.
  const auto key = c.sweep_axis.substr(c.sweep_axis.find('.') + 1);
  ExperimentOutput combined;
  Table records;
  std::vector<std::pair<std::string, Table>> tables;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto out = io::output_from_json(
        json::parse(io::read_file(dir / "points" / fmt::format("{:03d}", i) / "output.json")));
    any_failed = any_failed || out.failed;
    const std::vector<Cell> lead{static_cast<long long>(i), c.sweep_values[i]};
    Table rt;
    rt.columns = {"config_hash", "observable", "value", "std_error", "ess"};
    for (const auto& r : out.records) {
      rt.add({r.config_hash, r.observable, r.value,
              r.std_error ? Cell{*r.std_error} : Cell{std::string("exact")},
              r.ess ? Cell{*r.ess} : Cell{std::string()}});
    }
    records.append(rt.prefixed({"point", key}, lead));
    for (const auto& [name, t] : out.tables) {
      auto it = std::find_if(tables.begin(), tables.end(), [&](const auto& p) { return p.first == name; });
      if (it == tables.end()) {
        tables.emplace_back(name, Table{});
        it = std::prev(tables.end());
      }
      const bool has_axis = std::find(t.columns.begin(), t.columns.end(), key) != t.columns.end();
      it->second.append(has_axis ? t.prefixed({"point"}, {lead.front()}) : t.prefixed({"point", key}, lead));
    }
  }
  io::write_file(dir / "sweep_records.csv", records.csv());
  for (const auto& [name, t] : tables) io::write_file(dir / ("sweep_" + name + ".csv"), t.csv());
  summary.exit_code = any_failed ? invariant_failure : ok;
  return summary;
}

}  // namespace bose::runner
