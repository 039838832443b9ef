#include "bose/thermal_field.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>
#include <fstream>
#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/Polynomials>

#include "bose/kernels.hpp"
#include "json.hpp"

namespace bose::thermal {

using cd = std::complex<double>;

namespace {

// In-place multi-dimensional DFT over the leading `axes` axes of a row of
// extents (axis 0 fastest). Unscaled forward, unscaled inverse.
void dft_axes(std::vector<cd>& data, std::span<const int> extents, bool inverse) {
  thread_local Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::size_t stride = 1;
  const std::size_t total = data.size();
  std::vector<cd> in, out;
  for (int n : extents) {
    const auto un = static_cast<std::size_t>(n);
    in.resize(un);
    for (std::size_t base = 0; base < total; ++base) {
      // Visit each line once: base has coordinate 0 along this axis.
      if ((base / stride) % un != 0) continue;
      for (std::size_t i = 0; i < un; ++i) in[i] = data[base + i * stride];
      if (inverse) {
        fft.inv(out, in);
      } else {
        fft.fwd(out, in);
      }
      for (std::size_t i = 0; i < un; ++i) data[base + i * stride] = out[i];
    }
    stride *= un;
  }
}

std::vector<int> spatial_extents(const FieldGrid& g) { return std::vector<int>(static_cast<std::size_t>(g.d), g.n_x); }

void require_test_vector(const FieldGrid& g, std::span<const double> f) {
  if (f.size() != g.sites()) throw ArgumentError("test vector size does not match the spatial grid");
}

bool has_pole(const ThermalFieldParams& p) { return !p.critical && p.mu == 0.0; }

}  // namespace

void FieldGrid::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ArgumentError("beta must be positive");
  if (n_tau < 2) throw ArgumentError("n_tau must be >= 2");
  if (n_x < 2) throw ArgumentError("n_x must be >= 2");
  if (d < 1 || d > 3) throw ArgumentError("dimension must be 1, 2 or 3");
  if (!(L > 0.0) || !std::isfinite(L)) throw ArgumentError("L must be positive");
}

std::size_t FieldGrid::sites() const {
  std::size_t s = 1;
  for (int i = 0; i < d; ++i) s *= static_cast<std::size_t>(n_x);
  return s;
}

std::array<int, 3> FieldGrid::coords(std::size_t s) const {
  std::array<int, 3> c{0, 0, 0};
  for (int i = 0; i < d; ++i) {
    c[i] = static_cast<int>(s % static_cast<std::size_t>(n_x));
    s /= static_cast<std::size_t>(n_x);
  }
  return c;
}

std::size_t FieldGrid::index(std::array<int, 3> c) const {
  std::size_t s = 0;
  for (int i = d - 1; i >= 0; --i) {
    const int ci = ((c[i] % n_x) + n_x) % n_x;
    s = s * static_cast<std::size_t>(n_x) + static_cast<std::size_t>(ci);
  }
  return s;
}

double FieldGrid::k_squared(std::size_t s) const {
  const auto c = coords(s);
  const double k = 2.0 * kPi / L;
  double k2 = 0.0;
  for (int i = 0; i < d; ++i) {
    const int m = c[i] < n_x / 2 ? c[i] : c[i] - n_x;
    k2 += k * k * m * m;
  }
  return k2;
}

void ThermalFieldParams::validate() const {
  grid.validate();
  if (critical) {
    if (mu != 0.0) throw ArgumentError("critical fields require mu = 0");
    if (!(c >= 0.0) || !std::isfinite(c)) throw ArgumentError("condensate weight c must be >= 0");
  } else {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw ArgumentError("mu must be >= 0");
  }
}

double FieldSample::smear(std::span<const double> f, int t) const {
  require_test_vector(grid, f);
  const std::size_t n = grid.sites();
  const double* row = values.data() + static_cast<std::size_t>(t) * n;
  KahanSum s;
  for (std::size_t x = 0; x < n; ++x) s += f[x] * row[x];
  return grid.cell_volume() * s.value();
}

std::vector<cd> momentum_coefficients(const FieldGrid& g, std::span<const double> f) {
  require_test_vector(g, f);
  std::vector<cd> data(f.begin(), f.end());
  const auto ext = spatial_extents(g);
  dft_axes(data, ext, false);
  const double norm = g.cell_volume() / std::sqrt(g.volume());
  for (auto& v : data) v *= norm;
  return data;
}

double zero_mode(const FieldGrid& g, std::span<const double> f) {
  require_test_vector(g, f);
  KahanSum s;
  for (double v : f) s += v;
  return g.cell_volume() * s.value();
}

double mode_covariance(double eps, double beta, double tau) {
  if (!(eps > 0.0)) throw PoleError("zero-energy mode in the thermal covariance");
  return (std::exp(-eps * tau) + std::exp(-eps * (beta - tau))) / (-std::expm1(-eps * beta));
}

double covariance(const ThermalFieldParams& p, std::span<const double> f, std::span<const double> g, double tau) {
  p.validate();
  if (!(tau >= 0.0 && tau <= p.grid.beta)) throw ArgumentError("tau must lie in [0, beta]");
  if (has_pole(p)) throw PoleError("noncritical covariance at mu = 0 hits the zero mode");
  const auto fk = momentum_coefficients(p.grid, f);
  const auto gk = momentum_coefficients(p.grid, g);
  KahanSum s;
  for (std::size_t k = 0; k < fk.size(); ++k) {
    if (p.critical && k == 0) continue;
    s += mode_covariance(p.grid.k_squared(k) + p.mu, p.grid.beta, tau) * std::real(std::conj(fk[k]) * gk[k]);
  }
  if (p.critical) s += p.c * zero_mode(p.grid, f) * zero_mode(p.grid, g);
  return s.value();
}

double weyl_expectation(const ThermalFieldParams& p, std::span<const double> f) {
  p.validate();
  if (has_pole(p)) throw PoleError("noncritical Weyl state at mu = 0 hits the zero mode");
  const auto fk = momentum_coefficients(p.grid, f);
  KahanSum s;
  for (std::size_t k = 0; k < fk.size(); ++k) {
    if (p.critical && k == 0) continue;
    const double eps = p.grid.k_squared(k) + p.mu;
    s += std::norm(fk[k]) / std::tanh(0.5 * p.grid.beta * eps);
  }
  double out = std::exp(-0.25 * s.value());
  if (p.critical) {
    const double f0 = zero_mode(p.grid, f);
    out *= std::exp(-p.c * f0 * f0);
  }
  return out;
}

FieldSampler::FieldSampler(const ThermalFieldParams& p) : p_(p) {
  p_.validate();
  if (has_pole(p_)) throw PoleError("noncritical sampler at mu = 0 hits the zero mode");
  const auto& g = p_.grid;
  const std::size_t n = g.sites();
  const auto nt = static_cast<std::size_t>(g.n_tau);
  amplitude_.assign(nt * n, 0.0);
  std::vector<cd> line(nt);
  const std::array<int, 1> time_extent{g.n_tau};
  for (std::size_t k = 0; k < n; ++k) {
    if (p_.critical && k == 0) continue;
    const double eps = g.k_squared(k) + p_.mu;
    for (std::size_t i = 0; i < nt; ++i) line[i] = mode_covariance(eps, g.beta, static_cast<double>(i) * g.dtau());
    dft_axes(line, time_extent, false);
    for (std::size_t l = 0; l < nt; ++l) {
      amplitude_[l * n + k] = std::sqrt(std::max(0.0, line[l].real()) / g.cell_volume());
    }
  }
}

void FieldSampler::fill(Rng& rng, std::vector<double>& out) const {
  const auto& g = p_.grid;
  const std::size_t n = g.sites();
  const std::size_t total = n * static_cast<std::size_t>(g.n_tau);
  std::vector<cd> data(total);
  for (auto& v : data) v = rng.normal();
  std::vector<int> ext = spatial_extents(g);
  ext.push_back(g.n_tau);
  dft_axes(data, ext, false);
  for (std::size_t i = 0; i < total; ++i) data[i] *= amplitude_[i];
  dft_axes(data, ext, true);
  out.resize(total);
  const double inv = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = data[i].real() * inv;
}

FieldSample FieldSampler::draw(std::uint64_t seed) const {
  Rng rng(seed);
  FieldSample s{p_.grid, {}, seed};
  fill(rng, s.values);
  if (p_.critical && p_.c > 0.0) {
    const double z = std::sqrt(p_.c) * rng.normal();
    for (auto& v : s.values) v += z;
  }
  return s;
}

FieldSample FieldSampler::draw_nonzero(std::uint64_t seed, double zero_shift) const {
  if (!p_.critical) throw ArgumentError("nonzero-mode draws need critical parameters");
  Rng rng(seed);
  FieldSample s{p_.grid, {}, seed};
  fill(rng, s.values);
  for (auto& v : s.values) v += zero_shift;
  return s;
}

FieldSample sample_field(const ThermalFieldParams& p, std::uint64_t seed) { return FieldSampler(p).draw(seed); }

PureStatePoint sample_pure_state_point(Rng& rng) {
  const double r = rng.exponential(4.0);
  const double theta = rng.uniform(0.0, 2.0 * kPi);
  return {r, theta};
}

namespace {

double condensate_shift(const ThermalFieldParams& p, PureStatePoint pt) {
  return std::sqrt(2.0 * p.c * pt.r) * std::cos(pt.theta);
}

// Free draw in the realization used for Weyl expectations: the sampler's field
// in the noncritical case, nonzero modes plus sqrt(2 c r) cos θ otherwise.
FieldSample weyl_draw(const FieldSampler& sampler, std::uint64_t seed, std::optional<PureStatePoint> pt) {
  const auto& p = sampler.params();
  if (!p.critical) return sampler.draw(seed);
  Rng rng(derive_seed(seed, "pure-state", 0));
  const PureStatePoint point = pt ? *pt : sample_pure_state_point(rng);
  return sampler.draw_nonzero(seed, condensate_shift(p, point));
}

}  // namespace

FieldSample sample_weyl_field(const ThermalFieldParams& p, PureStatePoint point, std::uint64_t seed) {
  return weyl_draw(FieldSampler(p), seed, point);
}

MixingCheck mixing_decomposition_check(double c, double f0, int n_quadrature) {
  if (!(c > 0.0)) throw ArgumentError("mixing check needs c > 0");
  if (n_quadrature < 4) throw ArgumentError("n_quadrature must be >= 4");
  const double b = std::sqrt(c) * f0;
  std::vector<double> cosines(static_cast<std::size_t>(n_quadrature));
  for (int j = 0; j < n_quadrature; ++j) cosines[j] = std::cos(2.0 * kPi * (j + 0.5) / n_quadrature);
  // r = u²: dλ₀ = ½ u e^{-u²/4} du ⊗ dθ/2π.
  auto theta_average = [&](double u, bool imag) {
    KahanSum s;
    for (double ct : cosines) s += imag ? std::sin(b * u * ct) : std::cos(b * u * ct);
    return s.value() / n_quadrature;
  };
  MixingCheck out;
  out.rhs = std::exp(-c * f0 * f0);
  double err_re = 0.0, err_im = 0.0;
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  out.lhs = GK::integrate([&](double u) { return 0.5 * u * std::exp(-0.25 * u * u) * theta_average(u, false); }, 0.0,
                          std::numeric_limits<double>::infinity(), 20, 1e-13, &err_re);
  // The symmetric θ rule makes the imaginary integrand pure roundoff, so a
  // relative tolerance would never be met; cap the bisection depth instead.
  out.lhs_imag = GK::integrate([&](double u) { return 0.5 * u * std::exp(-0.25 * u * u) * theta_average(u, true); },
                               0.0, std::numeric_limits<double>::infinity(), 3, 1e-13, &err_im);
  out.error_estimate = std::max(err_re, err_im);
  out.converged = std::isfinite(out.lhs) && out.error_estimate < 1e-8;
  return out;
}

std::string to_string(Ergodicity e) {
  switch (e) {
    case Ergodicity::ergodic:
      return "ergodic";
    case Ergodicity::non_ergodic:
      return "non-ergodic";
    default:
      return "inconclusive";
  }
}

ErgodicityReport ergodicity_diagnostic(const ThermalFieldParams& p, std::size_t n_samples, std::span<const int> sizes,
                                       std::uint64_t seed) {
  p.validate();
  if (sizes.size() < 2) throw ArgumentError("ergodicity diagnostic needs >= 2 volumes");
  ErgodicityReport rep;
  rep.plateau_threshold = p.critical ? 0.5 * p.c : 0.0;
  if (n_samples < 10) return rep;
  const double a = p.grid.spacing();
  for (std::size_t v = 0; v < sizes.size(); ++v) {
    ThermalFieldParams q = p;
    q.grid.n_x = sizes[v];
    q.grid.L = a * sizes[v];
    const FieldSampler sampler(q);
    std::vector<double> avg(n_samples);
    kernels::for_each_index(n_samples, [&](std::size_t i) {
      const auto s = sampler.draw(derive_seed(seed, fmt::format("ergodicity/{}", sizes[v]), i));
      KahanSum acc;
      for (double x : s.values) acc += x;
      avg[i] = acc.value() / static_cast<double>(s.values.size());
    });
    RunningStats st;
    for (double x : avg) st.add(x);
    const double var = st.variance();
    rep.volume.push_back(q.grid.volume());
    rep.variance.push_back(var);
    rep.variance_error.push_back(var * std::sqrt(2.0 / static_cast<double>(n_samples - 1)));
  }
  const double vmax = *std::max_element(rep.variance.begin(), rep.variance.end());
  if (vmax < 1e-20) {
    rep.status = Ergodicity::ergodic;  // nothing survives the average at all
    rep.slope = -kInf;
    return rep;
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < rep.volume.size(); ++i) {
    lx.push_back(std::log(rep.volume[i]));
    ly.push_back(std::log(std::max(rep.variance[i], 1e-300)));
  }
  const auto fit = fit_line(lx, ly);
  rep.slope = fit.slope;
  rep.slope_error = fit.slope_error;
  const bool above = std::all_of(rep.variance.begin(), rep.variance.end(),
                                 [&](double v) { return v > rep.plateau_threshold; });
  if (p.critical && p.c > 0.0 && above && std::abs(fit.slope) < 0.2) {
    rep.status = Ergodicity::non_ergodic;
  } else if (fit.slope >= -1.2 && fit.slope <= -0.8) {
    rep.status = Ergodicity::ergodic;
  }
  return rep;
}

bool SubBox::contains(std::array<int, 3> c, int d) const {
  for (int i = 0; i < d; ++i) {
    if (c[i] < lo[i] || c[i] >= hi[i]) return false;
  }
  return true;
}

PolynomialPerturbation::PolynomialPerturbation(std::vector<double> coeffs, double lambda, double mollifier_width,
                                               SubBox region)
    : coeffs_(std::move(coeffs)), lambda_(lambda), eps_(mollifier_width), region_(region) {
  while (coeffs_.size() > 1 && coeffs_.back() == 0.0) coeffs_.pop_back();
  if (coeffs_.empty()) throw ArgumentError("P needs at least one coefficient");
  if ((coeffs_.size() - 1) % 2 != 0 || !(coeffs_.back() > 0.0)) {
    throw ArgumentError("P must have even degree and a positive leading coefficient");
  }
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) throw ArgumentError("lambda must be >= 0");
  if (!(eps_ > 0.0)) throw ArgumentError("mollifier width must be positive");
}

PolynomialPerturbation::PolynomialPerturbation(std::vector<double> coeffs, double lambda, double mollifier_width,
                                               SubBox region, Kernel kernel)
    : PolynomialPerturbation(std::move(coeffs), lambda, mollifier_width, region) {
  kernel_ = std::move(kernel);
  if (!kernel_) throw ArgumentError("nonlocal perturbation needs a kernel");
  if (min_value() < 0.0) throw ArgumentError("nonlocal perturbation requires P >= 0");
}

double PolynomialPerturbation::eval(double x) const {
  double v = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) v = v * x + *it;
  return v;
}

double PolynomialPerturbation::min_value() const {
  if (coeffs_.size() == 1) return coeffs_[0];
  // Critical points are the real roots of P'.
  Eigen::VectorXd dp(static_cast<Eigen::Index>(coeffs_.size() - 1));
  for (std::size_t i = 1; i < coeffs_.size(); ++i) dp[static_cast<Eigen::Index>(i - 1)] = coeffs_[i] * static_cast<double>(i);
  double best = kInf;
  if (dp.size() == 1) {
    best = eval(0.0);
  } else {
    Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(dp);
    for (const auto& root : solver.roots()) {
      if (std::abs(root.imag()) < 1e-8 * std::max(1.0, std::abs(root.real()))) best = std::min(best, eval(root.real()));
    }
  }
  return best;
}

namespace {

std::vector<std::size_t> region_sites(const FieldGrid& g, const SubBox& r) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < g.sites(); ++s) {
    if (r.contains(g.coords(s), g.d)) out.push_back(s);
  }
  return out;
}

// F at the minimal-image displacement of every site from the origin.
std::vector<double> kernel_table(const FieldGrid& g, const PolynomialPerturbation::Kernel& F) {
  std::vector<double> t(g.sites());
  const double a = g.spacing();
  for (std::size_t s = 0; s < g.sites(); ++s) {
    const auto c = g.coords(s);
    double r2 = 0.0;
    for (int i = 0; i < g.d; ++i) {
      const int m = c[i] <= g.n_x / 2 ? c[i] : c[i] - g.n_x;
      r2 += (m * a) * (m * a);
    }
    t[s] = F(std::sqrt(r2));
  }
  return t;
}

std::size_t displacement_index(const FieldGrid& g, std::size_t x, std::size_t y) {
  auto cx = g.coords(x), cy = g.coords(y);
  std::array<int, 3> diff{0, 0, 0};
  for (int i = 0; i < g.d; ++i) diff[i] = cx[i] - cy[i];
  return g.index(diff);
}

// Action on already mollified values, with an added constant zero mode.
double action_on(const FieldGrid& g, const PolynomialPerturbation& pert, std::span<const double> phi_eps,
                 double shift, std::span<const std::size_t> sites, std::span<const double> ktab, bool parallel) {
  if (pert.lambda() == 0.0) return 0.0;
  const std::size_t n = g.sites();
  auto slice = [&](std::size_t t) {
    const double* row = phi_eps.data() + t * n;
    if (!pert.nonlocal()) {
      KahanSum s;
      for (std::size_t x : sites) s += pert.eval(row[x] + shift);
      return s.value();
    }
    std::vector<double> P(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) P[i] = pert.eval(row[sites[i]] + shift);
    KahanSum s;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      for (std::size_t j = 0; j < sites.size(); ++j) s += P[i] * ktab[displacement_index(g, sites[i], sites[j])] * P[j];
    }
    return s.value();
  };
  const auto nt = static_cast<std::size_t>(g.n_tau);
  const double total = parallel ? kernels::sum(nt, slice) : kernels::serial::sum(nt, slice);
  const double measure = g.dtau() * g.cell_volume() * (pert.nonlocal() ? g.cell_volume() : 1.0);
  return -pert.lambda() * measure * total;
}

struct ActionContext {
  std::vector<std::size_t> sites;
  std::vector<double> ktab;

  ActionContext(const FieldGrid& g, const PolynomialPerturbation& pert) {
    pert.validate_for(g);
    sites = region_sites(g, pert.region());
    if (pert.nonlocal()) ktab = kernel_table(g, pert.kernel());
  }
};

}  // namespace

void PolynomialPerturbation::validate_for(const FieldGrid& g) const {
  g.validate();
  for (int i = 0; i < g.d; ++i) {
    if (region_.lo[i] < 0 || region_.hi[i] > g.n_x || region_.lo[i] >= region_.hi[i]) {
      throw ArgumentError("perturbation region must be a nonempty sub-box of the grid");
    }
  }
  if (eps_ < 2.0 * g.spacing() * (1.0 - 1e-12)) throw ArgumentError("mollifier width must be >= 2 grid spacings");
  if (nonlocal()) {
    const auto t = kernel_table(g, kernel_);
    std::vector<cd> data(t.begin(), t.end());
    const auto ext = spatial_extents(g);
    dft_axes(data, ext, false);
    double mx = 0.0, mn = kInf;
    for (const auto& v : data) {
      mx = std::max(mx, v.real());
      mn = std::min(mn, v.real());
    }
    if (mn < -1e-12 * mx) throw ArgumentError("kernel F is not positive definite on this grid");
  }
}

std::vector<double> mollify(const FieldSample& s, double eps) {
  const auto& g = s.grid;
  const std::size_t n = g.sites();
  std::vector<double> out(s.values.size());
  std::vector<double> filter(n);
  for (std::size_t k = 0; k < n; ++k) filter[k] = std::exp(-0.5 * eps * eps * g.k_squared(k));
  const auto ext = spatial_extents(g);
  std::vector<cd> row(n);
  for (int t = 0; t < g.n_tau; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * n;
    for (std::size_t x = 0; x < n; ++x) row[x] = s.values[off + x];
    dft_axes(row, ext, false);
    for (std::size_t k = 0; k < n; ++k) row[k] *= filter[k];
    dft_axes(row, ext, true);
    for (std::size_t x = 0; x < n; ++x) out[off + x] = row[x].real() / static_cast<double>(n);
  }
  return out;
}

double perturbation_action(const FieldSample& s, const PolynomialPerturbation& pert) {
  const ActionContext ctx(s.grid, pert);
  const auto phi = mollify(s, pert.mollifier_width());
  return action_on(s.grid, pert, phi, 0.0, ctx.sites, ctx.ktab, true);
}

double perturbation_action_serial(const FieldSample& s, const PolynomialPerturbation& pert) {
  const ActionContext ctx(s.grid, pert);
  const auto phi = mollify(s, pert.mollifier_width());
  return action_on(s.grid, pert, phi, 0.0, ctx.sites, ctx.ktab, false);
}

namespace {

// Ratio Σ o w / Σ w with a jackknife over strided blocks.
Estimate jackknife_ratio(std::span<const double> o, std::span<const double> w, std::size_t blocks) {
  const std::size_t n = o.size();
  blocks = std::max<std::size_t>(2, std::min(blocks, n));
  std::vector<KahanSum> num(blocks), den(blocks);
  KahanSum tn, td;
  for (std::size_t i = 0; i < n; ++i) {
    num[i % blocks] += o[i] * w[i];
    den[i % blocks] += w[i];
    tn += o[i] * w[i];
    td += w[i];
  }
  const double full = tn.value() / td.value();
  RunningStats loo;
  std::vector<double> est(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    est[b] = (tn.value() - num[b].value()) / (td.value() - den[b].value());
  }
  double mean = 0.0;
  for (double e : est) mean += e / static_cast<double>(blocks);
  double var = 0.0;
  for (double e : est) var += (e - mean) * (e - mean);
  var *= static_cast<double>(blocks - 1) / static_cast<double>(blocks);
  return {full, std::sqrt(var)};
}

std::vector<double> normalized_weights(std::span<const double> log_w) {
  const double m = *std::max_element(log_w.begin(), log_w.end());
  std::vector<double> w(log_w.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_w[i] - m);
  return w;
}

double effective_sample_size(std::span<const double> w) {
  KahanSum s, s2;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s.value() * s.value() / s2.value();
}

using ComplexObservable = std::function<std::pair<double, double>(const FieldSample&)>;

ReweightResult reweight(const ThermalFieldParams& p, const PolynomialPerturbation& pert, const ComplexObservable& obs,
                        std::size_t n_samples, std::uint64_t seed, const ReweightOptions& opt) {
  p.validate();
  if (n_samples < 2) throw ArgumentError("reweighting needs >= 2 samples");
  const FieldSampler sampler(p);
  const ActionContext ctx(p.grid, pert);
  std::vector<double> re(n_samples), im(n_samples), log_w(n_samples);
  kernels::for_each_index(n_samples, [&](std::size_t i) {
    const std::uint64_t s = derive_seed(seed, "reweight", i);
    std::optional<PureStatePoint> pt;
    if (p.critical && opt.stratified) {
      Rng rng(derive_seed(s, "stratum", 0));
      const double u = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(n_samples);
      pt = PureStatePoint{-4.0 * std::log1p(-u), rng.uniform(0.0, 2.0 * kPi)};
    }
    const auto field = weyl_draw(sampler, s, pt);
    const auto [a, b] = obs(field);
    re[i] = a;
    im[i] = b;
    const auto phi = mollify(field, pert.mollifier_width());
    log_w[i] = action_on(p.grid, pert, phi, 0.0, ctx.sites, ctx.ktab, false);
  });
  const auto w = normalized_weights(log_w);
  ReweightResult out;
  out.n_samples = n_samples;
  out.ess = effective_sample_size(w);
  if (out.ess < opt.min_ess) {
    out.diagnostic = fmt::format("effective sample size {:.1f} below {:.0f}; increase samples or reduce lambda",
                                 out.ess, opt.min_ess);
    return out;
  }
  out.real = jackknife_ratio(re, w, opt.jackknife_blocks);
  out.imag = jackknife_ratio(im, w, opt.jackknife_blocks);
  return out;
}

}  // namespace

ReweightResult reweighted_mean(const ThermalFieldParams& p, const PolynomialPerturbation& pert,
                               const std::function<double(const FieldSample&)>& observable, std::size_t n_samples,
                               std::uint64_t seed, const ReweightOptions& opt) {
  return reweight(
      p, pert, [&](const FieldSample& s) { return std::pair{observable(s), 0.0}; }, n_samples, seed, opt);
}

ReweightResult reweighted_state(const ThermalFieldParams& p, const PolynomialPerturbation& pert,
                                std::span<const double> f, std::size_t n_samples, std::uint64_t seed,
                                const ReweightOptions& opt) {
  require_test_vector(p.grid, f);
  std::vector<double> fv(f.begin(), f.end());
  return reweight(
      p, pert,
      [&](const FieldSample& s) {
        const double x = s.smear(fv, 0) / std::sqrt(2.0);
        return std::pair{std::cos(x), std::sin(x)};
      },
      n_samples, seed, opt);
}

double first_order_square_shift(const ThermalFieldParams& p, const PolynomialPerturbation& pert,
                                std::span<const double> f) {
  p.validate();
  if (p.critical) throw ArgumentError("first-order oracle is defined for noncritical fields");
  if (pert.nonlocal() || pert.coeffs() != std::vector<double>{0.0, 0.0, 1.0}) {
    throw ArgumentError("first-order oracle needs the local P(x) = x^2");
  }
  const auto& g = p.grid;
  const ActionContext ctx(g, pert);
  const auto fk = momentum_coefficients(g, f);
  const std::size_t n = g.sites();
  const double eps = pert.mollifier_width();
  const double sqrt_vol = std::sqrt(g.volume());
  KahanSum total;
  for (int t = 0; t < g.n_tau; ++t) {
    const double tau = t * g.dtau();
    // Cov(φ(f,0), φ_ε(τ,x)) = |Λ|^{-1/2} Σ_k C_k(τ) e^{-ε²k²/2} conj(f̃_k) e^{-ik·x}
    std::vector<cd> h(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double k2 = g.k_squared(k);
      h[k] = mode_covariance(k2 + p.mu, g.beta, tau) * std::exp(-0.5 * eps * eps * k2) * std::conj(fk[k]);
    }
    const auto ext = spatial_extents(g);
    dft_axes(h, ext, false);
    for (std::size_t x : ctx.sites) {
      const double cov = h[x].real() / sqrt_vol;
      total += cov * cov;
    }
  }
  return -2.0 * pert.lambda() * g.dtau() * g.cell_volume() * total.value();
}

std::pair<std::vector<double>, std::vector<double>> gauss_laguerre(int n) {
  if (n < 1) throw ArgumentError("Gauss-Laguerre order must be >= 1");
  // Golub-Welsch: Jacobi matrix with diagonal 2i+1 and off-diagonal i+1.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    J(i, i) = 2.0 * i + 1.0;
    if (i + 1 < n) J(i, i + 1) = J(i + 1, i) = i + 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    x[i] = es.eigenvalues()[i];
    const double v = es.eigenvectors()(0, i);
    w[i] = v * v;
  }
  return {x, w};
}

MixingTable renormalized_mixing(const ThermalFieldParams& p, const PolynomialPerturbation& pert, int n_grid_r,
                                int n_grid_theta, std::size_t n_samples, std::uint64_t seed,
                                std::size_t jackknife_blocks) {
  p.validate();
  if (!p.critical) throw ArgumentError("renormalized mixing needs critical parameters");
  if (n_grid_r < 1 || n_grid_theta < 1) throw ArgumentError("mixing grid must be nonempty");
  if (n_samples < 2) throw ArgumentError("renormalized mixing needs >= 2 samples");
  const FieldSampler sampler(p);
  const ActionContext ctx(p.grid, pert);

  MixingTable table;
  const auto [s_nodes, s_weights] = gauss_laguerre(n_grid_r);
  for (int i = 0; i < n_grid_r; ++i) {
    for (int j = 0; j < n_grid_theta; ++j) {
      MixingNode node;
      node.r = 4.0 * s_nodes[i];
      node.theta = 2.0 * kPi * j / n_grid_theta;
      node.base_weight = s_weights[i] / n_grid_theta;
      table.nodes.push_back(node);
    }
  }
  const std::size_t n_nodes = table.nodes.size();

  // log weights [node][sample]; each sample is an antithetic pair ±φ_nz.
  std::vector<double> log_plus(n_nodes * n_samples), log_minus(n_nodes * n_samples);
  kernels::for_each_index(n_samples, [&](std::size_t i) {
    const auto field = sampler.draw_nonzero(derive_seed(seed, "mixing", i), 0.0);
    const auto phi = mollify(field, pert.mollifier_width());
    std::vector<double> neg(phi.size());
    for (std::size_t q = 0; q < phi.size(); ++q) neg[q] = -phi[q];
    for (std::size_t a = 0; a < n_nodes; ++a) {
      const double shift = condensate_shift(p, {table.nodes[a].r, table.nodes[a].theta});
      log_plus[a * n_samples + i] = action_on(p.grid, pert, phi, shift, ctx.sites, ctx.ktab, false);
      log_minus[a * n_samples + i] = action_on(p.grid, pert, neg, shift, ctx.sites, ctx.ktab, false);
    }
  });
  double m = -kInf;
  for (double v : log_plus) m = std::max(m, v);
  for (double v : log_minus) m = std::max(m, v);

  const std::size_t blocks = std::max<std::size_t>(2, std::min(jackknife_blocks, n_samples));
  // Per node and block: Σ over the block's samples of the pair-averaged weight.
  std::vector<double> block_sum(n_nodes * blocks, 0.0);
  for (std::size_t a = 0; a < n_nodes; ++a) {
    std::vector<KahanSum> acc(blocks);
    for (std::size_t i = 0; i < n_samples; ++i) {
      acc[i % blocks] +=
          0.5 * (std::exp(log_plus[a * n_samples + i] - m) + std::exp(log_minus[a * n_samples + i] - m));
    }
    for (std::size_t b = 0; b < blocks; ++b) block_sum[a * blocks + b] = acc[b].value();
  }

  struct Summary {
    std::vector<double> ratio;
    double mean_r = 0.0;
    double var_r = 0.0;
  };
  auto summarize = [&](std::optional<std::size_t> skip) {
    Summary s;
    std::vector<double> z(n_nodes);
    for (std::size_t a = 0; a < n_nodes; ++a) {
      KahanSum acc;
      for (std::size_t b = 0; b < blocks; ++b)
        if (!skip || *skip != b) acc += block_sum[a * blocks + b];
      z[a] = acc.value();
    }
    KahanSum zw, w0;
    for (std::size_t a = 0; a < n_nodes; ++a) {
      zw += table.nodes[a].base_weight * z[a];
      w0 += table.nodes[a].base_weight;
    }
    const double zbar = zw.value() / w0.value();
    KahanSum r1, r2;
    for (std::size_t a = 0; a < n_nodes; ++a) {
      const double ratio = z[a] / zbar;
      s.ratio.push_back(ratio);
      const double w = table.nodes[a].base_weight * ratio / w0.value();
      r1 += w * table.nodes[a].r;
      r2 += w * table.nodes[a].r * table.nodes[a].r;
    }
    s.mean_r = r1.value();
    s.var_r = r2.value() - s.mean_r * s.mean_r;
    return s;
  };

  const Summary full = summarize(std::nullopt);
  std::vector<Summary> loo;
  for (std::size_t b = 0; b < blocks; ++b) loo.push_back(summarize(b));
  auto jk_error = [&](auto&& pick) {
    double mean = 0.0;
    for (const auto& s : loo) mean += pick(s) / static_cast<double>(blocks);
    double v = 0.0;
    for (const auto& s : loo) v += (pick(s) - mean) * (pick(s) - mean);
    return std::sqrt(v * static_cast<double>(blocks - 1) / static_cast<double>(blocks));
  };
  KahanSum w0;
  for (const auto& node : table.nodes) w0 += node.base_weight;
  for (std::size_t a = 0; a < n_nodes; ++a) {
    auto& node = table.nodes[a];
    node.ratio = full.ratio[a];
    node.ratio_error = jk_error([a](const Summary& s) { return s.ratio[a]; });
    node.weight = node.base_weight * node.ratio / w0.value();
  }
  table.mean_r = {full.mean_r, jk_error([](const Summary& s) { return s.mean_r; })};
  table.var_r = {full.var_r, jk_error([](const Summary& s) { return s.var_r; })};
  return table;
}

Estimate log_exponential_moment(const ThermalFieldParams& p, std::span<const double> f, std::size_t n_samples,
                                std::uint64_t seed) {
  require_test_vector(p.grid, f);
  if (n_samples < 2) throw ArgumentError("exponential moment needs >= 2 samples");
  const FieldSampler sampler(p);
  std::vector<double> x(n_samples);
  kernels::for_each_index(n_samples, [&](std::size_t i) {
    x[i] = sampler.draw(derive_seed(seed, "expmoment", i)).smear(f, 0);
  });
  const double m = *std::max_element(x.begin(), x.end());
  RunningStats st;
  for (double v : x) st.add(std::exp(v - m));
  return {m + std::log(st.mean()), st.std_error() / st.mean()};
}

void export_snapshot(const FieldSample& s, const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto side = stem;
  side += ".json";
  {
    std::ofstream os(bin, std::ios::binary);
    if (!os) throw ArgumentError("cannot open " + bin.string());
    os.write(reinterpret_cast<const char*>(s.values.data()),
             static_cast<std::streamsize>(s.values.size() * sizeof(double)));
  }
  nlohmann::json j;
  j["format"] = "float64-le";
  j["shape"] = {s.grid.n_tau, s.grid.sites()};
  j["layout"] = "[tau][site], site index has axis 0 fastest";
  j["grid"] = {{"beta", s.grid.beta}, {"n_tau", s.grid.n_tau}, {"d", s.grid.d}, {"L", s.grid.L}, {"n_x", s.grid.n_x}};
  j["seed"] = s.seed;
  j["data"] = bin.filename().string();
  std::ofstream(side) << j.dump(2) << '\n';
}

FieldSample import_snapshot(const std::filesystem::path& stem) {
  auto side = stem;
  side += ".json";
  std::ifstream is(side);
  if (!is) throw ArgumentError("cannot open " + side.string());
  const auto j = nlohmann::json::parse(is);
  FieldSample s;
  const auto& g = j.at("grid");
  s.grid = {g.at("beta"), g.at("n_tau"), g.at("d"), g.at("L"), g.at("n_x")};
  s.grid.validate();
  s.seed = j.at("seed");
  s.values.resize(s.grid.sites() * static_cast<std::size_t>(s.grid.n_tau));
  std::ifstream bin(stem.parent_path() / j.at("data").get<std::string>(), std::ios::binary);
  bin.read(reinterpret_cast<char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * sizeof(double)));
  if (!bin) throw ArgumentError("snapshot data truncated");
  return s;
}

}  // namespace bose::thermal
