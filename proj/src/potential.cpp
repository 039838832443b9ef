#include "bose/potential.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <fmt/format.h>

namespace bose::loops {

PairPotential PairPotential::none() { return {}; }

PairPotential PairPotential::hard_core(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw ArgumentError("hard-core radius must be positive");
  PairPotential p;
  p.kind_ = Kind::hard_core;
  p.core_ = a;
  p.r0_ = a;
  p.range_ = a;
  p.name_ = fmt::format("hard_core(a={})", a);
  return p;
}

PairPotential PairPotential::step(double v0, double a) {
  if (!(a > 0.0) || !(v0 >= 0.0) || !std::isfinite(v0)) throw ArgumentError("step potential needs v0 >= 0, a > 0");
  PairPotential p;
  p.kind_ = Kind::step;
  p.v0_ = v0;
  p.a_ = a;
  p.range_ = a;
  p.name_ = fmt::format("step(v0={}, a={})", v0, a);
  return p;
}

PairPotential PairPotential::gaussian(double v0, double s0, double v1, double s1, int d) {
  if (!(s0 > 0.0) || !(s1 > 0.0) || !(v0 >= 0.0) || !(v1 >= 0.0)) {
    throw ArgumentError("gaussian potential needs v0, v1 >= 0 and positive widths");
  }
  if (v1 > 0.0 && (s1 < s0 || v0 * std::pow(s0, d) < v1 * std::pow(s1, d) * (1 + 1e-12))) {
    throw ArgumentError("gaussian potential is not positive definite (need s1 >= s0, v0 s0^d >= v1 s1^d)");
  }
  PairPotential p;
  p.kind_ = Kind::gaussian;
  p.v0_ = v0;
  p.s0_ = s0;
  p.v1_ = v1;
  p.s1_ = s1;
  p.B_ = v1 > 0.0 ? std::max(0.0, 0.5 * (v0 - v1)) : 0.0;
  const double s = std::max(s0, v1 > 0.0 ? s1 : s0);
  p.range_ = s * std::sqrt(2.0 * 700.0);
  p.name_ = v1 > 0.0 ? fmt::format("gaussian(v0={}, s0={}, v1={}, s1={})", v0, s0, v1, s1)
                     : fmt::format("gaussian(v0={}, s0={})", v0, s0);
  return p;
}

double PairPotential::of_squared(double r2) const {
  switch (kind_) {
    case Kind::none:
      return 0.0;
    case Kind::hard_core:
      return r2 < core_ * core_ ? kInf : 0.0;
    case Kind::step:
      return r2 < a_ * a_ ? v0_ : 0.0;
    case Kind::gaussian: {
      double v = v0_ * std::exp(-0.5 * r2 / (s0_ * s0_));
      if (v1_ > 0.0) v -= v1_ * std::exp(-0.5 * r2 / (s1_ * s1_));
      return v;
    }
  }
  return 0.0;
}

double PairPotential::operator()(double r) const { return of_squared(r * r); }

PairPotential PairPotential::scaled(double s) const {
  if (!(s >= 0.0)) throw ArgumentError("potential scale must be >= 0");
  PairPotential p = *this;
  p.v0_ *= s;
  p.v1_ *= s;
  p.B_ *= s;
  if (kind_ != Kind::none && kind_ != Kind::hard_core) p.name_ = fmt::format("{}*{}", s, name_);
  return p;
}

double PairPotential::integrability_integral(int d) const {
  if (d < 1 || d > 3) throw ArgumentError("dimension must be 1, 2 or 3");
  switch (kind_) {
    case Kind::none:
    case Kind::hard_core:
      return 0.0;
    case Kind::step: {
      boost::math::quadrature::tanh_sinh<double> ts;
      return ts.integrate([&](double r) { return std::abs((*this)(r)) * std::pow(r, d - 1); }, r0_, a_);
    }
    case Kind::gaussian: {
      boost::math::quadrature::exp_sinh<double> es;
      return es.integrate([&](double r) {
        const double v = std::abs((*this)(r)) * std::pow(r, d - 1);
        return std::isfinite(v) ? v : 0.0;
      });
    }
  }
  return 0.0;
}

PairPotential::StabilityReport PairPotential::check_stability(int d, std::size_t n_sets, std::uint64_t seed) const {
  StabilityReport rep;
  const double scale = std::max({range_ > 10.0 ? 3.0 * s1_ : range_, core_, 0.5});
  for (std::size_t s = 0; s < n_sets; ++s) {
    Rng rng(derive_seed(seed, "stability", s));
    const std::size_t n = 2 + rng.index(39);
    // Cubes from very dense to dilute; dense sets probe the attractive lobe.
    const double side = scale * std::pow(static_cast<double>(n), 1.0 / d) * rng.uniform(0.05, 2.0);
    std::vector<Vec> pts(n, Vec{0, 0, 0});
    for (auto& p : pts)
      for (int i = 0; i < d; ++i) p[i] = rng.uniform(0.0, side);
    KahanSum e;
    bool infinite = false;
    for (std::size_t a = 0; a < n && !infinite; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        double r2 = 0.0;
        for (int i = 0; i < d; ++i) r2 += (pts[a][i] - pts[b][i]) * (pts[a][i] - pts[b][i]);
        const double v = of_squared(r2);
        if (std::isinf(v)) {
          infinite = true;
          break;
        }
        e += v;
      }
    }
    ++rep.sets_tested;
    if (infinite) continue;
    const double margin = e.value() + B_ * static_cast<double>(n);
    rep.worst_margin = std::min(rep.worst_margin, margin);
    if (margin < -1e-12 * std::max(1.0, std::abs(e.value()))) rep.stable = false;
  }
  return rep;
}

}  // namespace bose::loops
