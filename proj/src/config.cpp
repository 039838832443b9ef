#include "bose/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <functional>
#include <map>
#include <set>

#include "bose/io.hpp"

namespace bose::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  for (const auto& item : out) {
    if (item.empty()) throw ConfigError("empty item in list");
  }
  return out;
}

double parse_real(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) throw ConfigError("'" + s + "' is not a finite number");
  return v;
}

long long parse_integer(const std::string& s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + s + "' is not an integer");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ConfigError("'" + s + "' is not a boolean (true/false)");
}

struct Range {
  double lo = -kInf, hi = kInf;
  bool lo_open = false, hi_open = false;

  void check(double v) const {
    const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
    if (!ok) {
      throw ConfigError(fmt::format("value {} outside {}{}, {}{}", io::format_number(v), lo_open ? '(' : '[',
                                    io::format_number(lo), io::format_number(hi), hi_open ? ')' : ']'));
    }
  }
};

constexpr Range positive{0.0, kInf, true, false};
constexpr Range nonnegative{0.0, kInf, false, false};
constexpr Range any{};

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool hashed = true;
};

Field real(std::string sec, std::string key, double RunConfig::*m, Range r) {
  return {std::move(sec), std::move(key),
          [m, r](RunConfig& c, const std::string& v) {
            const double x = parse_real(v);
            r.check(x);
            c.*m = x;
          },
          [m](const RunConfig& c) { return io::format_number(c.*m); }};
}

Field optional_real(std::string sec, std::string key, std::optional<double> RunConfig::*m, Range r) {
  return {std::move(sec), std::move(key),
          [m, r](RunConfig& c, const std::string& v) {
            const double x = parse_real(v);
            r.check(x);
            c.*m = x;
          },
          [m](const RunConfig& c) { return (c.*m) ? io::format_number(*(c.*m)) : std::string("unset"); }};
}

template <class T>
Field integer(std::string sec, std::string key, T RunConfig::*m, long long lo, long long hi) {
  return {std::move(sec), std::move(key),
          [m, lo, hi](RunConfig& c, const std::string& v) {
            const long long x = parse_integer(v);
            if (x < lo || x > hi) throw ConfigError(fmt::format("value {} outside [{}, {}]", x, lo, hi));
            c.*m = static_cast<T>(x);
          },
          [m](const RunConfig& c) { return std::to_string(c.*m); }};
}

Field boolean(std::string sec, std::string key, bool RunConfig::*m) {
  return {std::move(sec), std::move(key), [m](RunConfig& c, const std::string& v) { c.*m = parse_bool(v); },
          [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field choice(std::string sec, std::string key, std::string RunConfig::*m, std::vector<std::string> allowed) {
  return {std::move(sec), std::move(key),
          [m, allowed](RunConfig& c, const std::string& v) {
            if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
              std::string list;
              for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
              throw ConfigError("'" + v + "' is not one of: " + list);
            }
            c.*m = v;
          },
          [m](const RunConfig& c) { return c.*m; }};
}

Field real_list(std::string sec, std::string key, std::vector<double> RunConfig::*m, std::size_t min_size) {
  return {std::move(sec), std::move(key),
          [m, min_size](RunConfig& c, const std::string& v) {
            std::vector<double> out;
            for (const auto& s : split_list(v)) out.push_back(parse_real(s));
            if (out.size() < min_size) throw ConfigError(fmt::format("need at least {} values", min_size));
            c.*m = std::move(out);
          },
          [m](const RunConfig& c) {
            std::string s;
            for (double x : c.*m) s += (s.empty() ? "" : ", ") + io::format_number(x);
            return s;
          }};
}

Field int_list(std::string sec, std::string key, std::vector<int> RunConfig::*m, long long lo, long long hi) {
  return {std::move(sec), std::move(key),
          [m, lo, hi](RunConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& s : split_list(v)) {
              const long long x = parse_integer(s);
              if (x < lo || x > hi) throw ConfigError(fmt::format("value {} outside [{}, {}]", x, lo, hi));
              out.push_back(static_cast<int>(x));
            }
            c.*m = std::move(out);
          },
          [m](const RunConfig& c) {
            std::string s;
            for (int x : c.*m) s += (s.empty() ? "" : ", ") + std::to_string(x);
            return s;
          }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back({"run", "experiment",
                 [](RunConfig& c, const std::string& v) { c.experiment = experiment_from_string(v); },
                 [](const RunConfig& c) { return to_string(c.experiment); }});
    f.push_back({"run", "seed",
                 [](RunConfig& c, const std::string& v) {
                   std::uint64_t x = 0;
                   const auto* end = v.data() + v.size();
                   const auto [ptr, ec] = std::from_chars(v.data(), end, x);
                   if (ec != std::errc() || ptr != end) throw ConfigError("'" + v + "' is not an unsigned integer");
                   c.seed = x;
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"run", "output", [](RunConfig& c, const std::string& v) {
                   if (v.empty()) throw ConfigError("output path is empty");
                   c.output = v;
                 },
                 [](const RunConfig& c) { return c.output; }, false});
    auto threads = integer("run", "threads", &RunConfig::threads, 0, 4096);
    threads.hashed = false;
    f.push_back(threads);

    f.push_back(real("physics", "beta", &RunConfig::beta, positive));
    f.push_back(optional_real("physics", "mu", &RunConfig::mu, any));
    f.push_back(optional_real("physics", "z", &RunConfig::z, Range{0.0, 1.0, false, true}));
    f.push_back(real("physics", "c", &RunConfig::c, nonnegative));
    f.push_back(boolean("physics", "critical", &RunConfig::critical));
    f.push_back(real("physics", "lambda", &RunConfig::lambda, nonnegative));

    f.push_back(integer("geometry", "d", &RunConfig::d, 1, 3));
    f.push_back(real("geometry", "L", &RunConfig::L, positive));
    f.push_back({"geometry", "boundary",
                 [](RunConfig& c, const std::string& v) {
                   if (v != "periodic" && v != "dirichlet") throw ConfigError("boundary must be periodic or dirichlet");
                   c.boundary = loops::boundary_from_string(v);
                 },
                 [](const RunConfig& c) { return loops::to_string(c.boundary); }});
    f.push_back(integer("geometry", "n_x", &RunConfig::n_x, 2, 1 << 12));
    f.push_back(integer("geometry", "n_tau", &RunConfig::n_tau, 2, 1 << 14));
    f.push_back(integer("geometry", "n_slices", &RunConfig::n_slices, 2, 1 << 12));
    f.push_back(integer("geometry", "mode_cutoff", &RunConfig::mode_cutoff, 0, 1 << 12));
    f.push_back(real("geometry", "window", &RunConfig::window, nonnegative));
    f.push_back({"geometry", "placement",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "centered") {
                     c.placement = loops::WindowPlacement::centered;
                   } else if (v == "wall") {
                     c.placement = loops::WindowPlacement::wall;
                   } else {
                     throw ConfigError("placement must be centered or wall");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.placement == loops::WindowPlacement::centered ? "centered" : "wall");
                 }});

    f.push_back(choice("potential", "kind", &RunConfig::potential, {"none", "hard_core", "step", "gaussian"}));
    f.push_back(real("potential", "radius", &RunConfig::radius, positive));
    f.push_back(real("potential", "height", &RunConfig::height, positive));
    f.push_back(real("potential", "v0", &RunConfig::v0, any));
    f.push_back(real("potential", "s0", &RunConfig::s0, positive));
    f.push_back(real("potential", "v1", &RunConfig::v1, any));
    f.push_back(real("potential", "s1", &RunConfig::s1, positive));

    f.push_back(real_list("perturbation", "coeffs", &RunConfig::coeffs, 1));
    f.push_back(real("perturbation", "mollifier", &RunConfig::mollifier, positive));
    f.push_back(integer("perturbation", "region_lo", &RunConfig::region_lo, 0, 1 << 12));
    f.push_back(integer("perturbation", "region_hi", &RunConfig::region_hi, 0, 1 << 12));
    f.push_back(real("perturbation", "kernel_width", &RunConfig::kernel_width, nonnegative));

    constexpr long long big = 1LL << 40;
    f.push_back(integer("sampler", "samples", &RunConfig::samples, 1, big));
    f.push_back(integer("sampler", "burn_in", &RunConfig::burn_in, 0, big));
    f.push_back(integer("sampler", "thin", &RunConfig::thin, 1, big));
    f.push_back(integer("sampler", "chains", &RunConfig::chains, 1, 4096));
    f.push_back(integer("sampler", "batches", &RunConfig::batches, 2, 1 << 20));
    f.push_back(integer("sampler", "checkpoint_every", &RunConfig::checkpoint_every, 1, big));
    f.push_back(integer("sampler", "n_mc", &RunConfig::n_mc, 1, big));
    f.push_back(integer("sampler", "order", &RunConfig::order, 1, 3));
    f.push_back(boolean("sampler", "static_paths", &RunConfig::static_paths));
    f.push_back(integer("sampler", "grid_r", &RunConfig::grid_r, 1, 512));
    f.push_back(integer("sampler", "grid_theta", &RunConfig::grid_theta, 1, 4096));
    f.push_back(int_list("sampler", "sizes", &RunConfig::sizes, 2, 1 << 12));
    f.push_back(integer("sampler", "n_max", &RunConfig::n_max, 1, 1 << 16));
    f.push_back(real("sampler", "state_budget", &RunConfig::state_budget, positive));

    f.push_back(choice("check", "suite", &RunConfig::suite, {"default", "quick"}));
    f.push_back(int_list("check", "criteria", &RunConfig::criteria, 1, 13));
    return f;
  }();
  return fields;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : schema()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::ideal: return "ideal";
    case Experiment::gauss: return "gauss";
    case Experiment::loops: return "loops";
    case Experiment::expand: return "expand";
    case Experiment::oracle: return "oracle";
    case Experiment::check: return "check";
  }
  return "?";
}

Experiment experiment_from_string(const std::string& s) {
  for (auto e : {Experiment::ideal, Experiment::gauss, Experiment::loops, Experiment::expand, Experiment::oracle,
                 Experiment::check}) {
    if (to_string(e) == s) return e;
  }
  throw ConfigError("unknown experiment '" + s + "' (ideal, gauss, loops, expand, oracle, check)");
}

std::vector<IniEntry> parse_ini(std::string_view text, const std::string& source) {
  std::vector<IniEntry> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::set<std::string> sections;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    auto where = [&] { return fmt::format("{}:{}: ", source, line_no); };

    // Comments run from '#' or ';' at line start or after whitespace.
    std::string line(raw);
    for (std::size_t i = 0; i < line.size(); ++i) {
      if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where() + "empty section name");
      if (!sections.insert(section).second) throw ConfigError(where() + "section [" + section + "] repeated");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
    IniEntry e{section, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)),
               line_no};
    if (e.key.empty()) throw ConfigError(where() + "missing key before '='");
    if (section.empty()) throw ConfigError(where() + "key '" + e.key + "' outside any section");
    if (!seen.insert({e.section, e.key}).second) {
      throw ConfigError(where() + "key '" + e.key + "' repeated in [" + section + "]");
    }
    out.push_back(std::move(e));
  }
  return out;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig c;
  bool has_experiment = false;
  bool sweep_values_seen = false;
  for (const auto& e : parse_ini(text, source)) {
    const auto where = fmt::format("{}:{}: [{}] {}: ", source, e.line, e.section, e.key);
    try {
      if (e.section == "sweep") {
        if (e.key == "axis") {
          if (e.value.find('.') == std::string::npos) throw ConfigError("axis must be 'section.key'");
          c.sweep_axis = e.value;
        } else if (e.key == "values") {
          c.sweep_values = trim(e.value).empty() ? std::vector<std::string>{} : split_list(e.value);
          sweep_values_seen = true;
        } else {
          throw ConfigError("unknown key");
        }
        continue;
      }
      const Field* f = find_field(e.section, e.key);
      if (f == nullptr) {
        bool known_section = false;
        for (const auto& s : schema()) known_section |= s.section == e.section;
        throw ConfigError(known_section ? "unknown key" : "unknown section");
      }
      f->set(c, e.value);
      has_experiment |= e.section == "run" && e.key == "experiment";
    } catch (const ConfigError& err) {
      throw ConfigError(where + err.what());
    }
  }
  if (!has_experiment) throw ConfigError(source + ": [run] experiment is required");
  if (c.has_sweep()) {
    if (!sweep_values_seen) throw ConfigError(source + ": [sweep] needs both axis and values");
    const auto dot = c.sweep_axis.find('.');
    const auto sec = c.sweep_axis.substr(0, dot), key = c.sweep_axis.substr(dot + 1);
    const Field* f = find_field(sec, key);
    if (f == nullptr || !f->hashed || (sec == "run" && key == "experiment")) {
      throw ConfigError(source + ": [sweep] axis '" + c.sweep_axis + "' is not a sweepable key");
    }
    // Every sweep value must pass the same checks before anything runs.
    for (const auto& v : c.sweep_values) {
      RunConfig probe = c;
      try {
        probe.set(c.sweep_axis, v);
        probe.validate();
      } catch (const Error& err) {
        throw ConfigError(fmt::format("{}: [sweep] value '{}': {}", source, v, err.what()));
      }
    }
  } else if (sweep_values_seen) {
    throw ConfigError(source + ": [sweep] needs both axis and values");
  }
  try {
    c.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(source + ": " + err.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(io::read_file(path), path.string()); }

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("key '" + dotted_key + "' must be 'section.key'");
  const Field* f = find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  if (f == nullptr) throw ConfigError("unknown key '" + dotted_key + "'");
  f->set(*this, value);
}

void RunConfig::validate() const {
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(fmt::format("experiment '{}' {}", to_string(experiment), what));
  };
  switch (experiment) {
    case Experiment::ideal:
      need(mu.has_value(), "needs [physics] mu");
      need(*mu > 0.0, "needs mu > 0 (the torus has a zero mode)");
      break;
    case Experiment::gauss:
      if (critical) {
        need(!mu || *mu == 0.0, "with critical = true takes mu = 0 (or leaves it unset)");
      } else {
        need(mu.has_value() && *mu > 0.0, "needs [physics] mu > 0 unless critical = true");
      }
      need(region_hi == 0 || region_hi > region_lo, "needs region_hi > region_lo");
      need(region_hi <= n_x, "needs region_hi <= n_x");
      need(n_x % 2 == 0, "needs an even n_x");
      break;
    case Experiment::loops:
      need(z.has_value() && *z > 0.0, "needs [physics] z in (0, 1)");
      need(window == 0.0 || window <= L, "needs window <= L");
      break;
    case Experiment::expand:
      break;
    case Experiment::oracle:
      need(mu.has_value(), "needs [physics] mu");
      break;
    case Experiment::check:
      break;
  }
  need(potential != "hard_core" || radius < L / 2, "needs a hard-core radius below L/2");
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& f : schema()) {
    if (!f.hashed) continue;
    out += f.section + "." + f.key + " = " + f.get(*this) + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return fmt::format("{:016x}", fnv1a(canonical())); }

loops::PairPotential RunConfig::pair_potential() const {
  if (potential == "none") return loops::PairPotential::none();
  if (potential == "hard_core") return loops::PairPotential::hard_core(radius);
  if (potential == "step") return loops::PairPotential::step(height, radius);
  return loops::PairPotential::gaussian(v0, s0, v1, s1, d);
}

loops::BoxRegion RunConfig::region() const {
  loops::BoxRegion r{d, L, boundary, beta, n_slices};
  r.validate();
  return r;
}

std::vector<std::string> schema_keys() {
  std::vector<std::string> out;
  for (const auto& f : schema()) out.push_back(f.section + "." + f.key);
  out.emplace_back("sweep.axis");
  out.emplace_back("sweep.values");
  return out;
}

}  // namespace bose::config
