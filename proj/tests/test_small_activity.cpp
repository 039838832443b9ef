#include <cmath>
#include <vector>

#include "bose/kernels.hpp"
#include "bose/small_activity.hpp"
#include "bose/spectral_gas.hpp"
#include "doctest.h"

using namespace bose;
using namespace bose::series;
using bose::loops::Boundary;

namespace {

BoxRegion box(double L, Boundary b = Boundary::periodic) { return BoxRegion{3, L, b, 1.0, 16}; }

MayerOptions mc(std::size_t n, std::uint64_t seed = 1, bool fixed = false) {
  MayerOptions o;
  o.n_mc = n;
  o.seed = seed;
  o.static_paths = fixed;
  return o;
}

}  // namespace

TEST_CASE("first coefficient is the one-loop mass density") {
  const auto b1 = mayer_coefficient(1, PairPotential::hard_core(0.5), box(12.0));
  CHECK(b1.value.value == doctest::Approx(std::pow(4.0 * kPi, -1.5)).epsilon(1e-9));
  CHECK(b1.value.error == 0.0);
  CHECK_THROWS_AS((void)mayer_coefficient(4, PairPotential::none(), box(6.0)), ArgumentError);
}

TEST_CASE("V = 0 gives the free permutation coefficients") {
  const auto per = mayer_coefficients(3, PairPotential::none(), box(6.0), mc(2000));
  for (const auto& b : per) {
    CHECK(b.value.value == doctest::Approx(b.free_value).epsilon(1e-12));
    CHECK(b.free_value == doctest::Approx(loops::bridge_mass(box(6.0), b.n) / b.n / 216.0).epsilon(1e-14));
  }
  const auto dir = mayer_coefficients(2, PairPotential::none(), box(4.0, Boundary::dirichlet), mc(40000));
  for (const auto& b : dir) CHECK(std::abs(b.value.value - b.free_value) <= 3.0 * b.value.error);
}

TEST_CASE("static hard-core pair sector reproduces the classical second virial coefficient") {
  const double a = 0.8;
  const auto b2 = mayer_coefficient(2, PairPotential::hard_core(a), box(12.0), mc(400000, 3, true));
  const double b1 = loops::bridge_mass(box(12.0), 1) / std::pow(12.0, 3);
  const double classical = -(2.0 * kPi * std::pow(a, 3) / 3.0) * b1 * b1;
  REQUIRE(b2.sectors.size() == 2);
  CHECK(b2.sectors[1].sector == "1+1");
  CHECK(std::abs(b2.sectors[1].value.value - classical) <= 3.0 * b2.sectors[1].value.error);
  CHECK(b2.sectors[1].value.error < 0.02 * std::abs(classical));
}

TEST_CASE("repulsive corrections are negative") {
  const auto V = PairPotential::hard_core(0.5);
  const auto b = mayer_coefficients(3, V, box(8.0), mc(100000, 5));
  CHECK(b[1].sectors[1].value.value + 3.0 * b[1].sectors[1].value.error < 0.0);
  CHECK(b[1].value.value < b[1].free_value);
  CHECK(b[1].sectors[0].value.value <= b[1].free_value);  // self-avoidance of the 2-loop
  for (const auto& c : b) CHECK(c.warning.empty());
  CHECK(coefficients_csv(b).rfind("n,sector,value,error\n1,1,", 0) == 0);
}

TEST_CASE("coefficient Monte Carlo is independent of the thread count") {
  const auto V = PairPotential::gaussian(1.0, 0.5);
  const int saved = kernels::thread_count();
  kernels::set_thread_count(1);
  const auto a = mayer_coefficient(3, V, box(6.0), mc(3000, 9));
  kernels::set_thread_count(4);
  const auto b = mayer_coefficient(3, V, box(6.0), mc(3000, 9));
  kernels::set_thread_count(saved);
  CHECK(a.value.value == b.value.value);
  CHECK(a.value.error == b.value.error);
}

TEST_CASE("series density at V = 0 matches the spectral density") {
  const auto spec = spectral::build_torus_spectrum(spectral::torus_for(3, 16.0, 1.0, 1e-14));
  const auto b = mayer_coefficients(3, PairPotential::none(), box(16.0), mc(100));
  for (double z : {0.05, 0.1, 0.2}) {
    const auto s = series_density(z, b, 1.0);
    const double exact = spectral::density(spec, 1.0, -std::log(z));
    CHECK(std::abs(s.value.value - exact) <= s.truncation);
    CHECK(s.value.value < exact);
  }
  const auto tiny = series_density(1e-6, b, 1.0);
  CHECK(tiny.value.value == doctest::Approx(1e-6 * b[0].value.value).epsilon(1e-5));
  CHECK_THROWS_AS((void)series_density(0.5, b, 0.3), ActivityError);
}

TEST_CASE("convergence radius") {
  CHECK(convergence_radius(PairPotential::none(), box(8.0)).radius_lower_bound == 1.0);

  const auto hc1 = convergence_radius(PairPotential::hard_core(1.5), box(8.0), 50000, 3);
  const auto hc2 = convergence_radius(PairPotential::hard_core(1.5), box(8.0), 50000, 3);
  CHECK(hc1.radius_lower_bound > 0.0);
  CHECK(hc1.radius_lower_bound < 1.0);
  CHECK(hc1.radius_lower_bound == hc2.radius_lower_bound);
  const auto hc3 = convergence_radius(PairPotential::hard_core(1.5), box(8.0), 50000, 4);
  CHECK(std::abs(hc3.C.value - hc1.C.value) <= 3.0 * std::hypot(hc1.C.error, hc3.C.error));

  const auto V = PairPotential::gaussian(2.0, 0.5, 1.0, 0.6);
  const auto one = convergence_radius(V, box(8.0), 50000, 5);
  const auto two = convergence_radius(V.scaled(2.0), box(8.0), 50000, 5);
  CHECK(V.scaled(2.0).stability_constant() == doctest::Approx(2.0 * V.stability_constant()));
  CHECK(two.C.value > one.C.value);
  CHECK(two.kirkwood_salsburg < one.kirkwood_salsburg);
  CHECK(two.radius_lower_bound <= one.radius_lower_bound);
  const auto js = radius_json(one);
  CHECK(js.at("radius_lower_bound").get<double>() == one.radius_lower_bound);
}

TEST_CASE("interacting log-partition shift agrees with the series") {
  const auto r = BoxRegion{3, 3.0, Boundary::periodic, 1.0, 8};
  const auto V = PairPotential::gaussian(1.0, 0.5);
  const auto b = mayer_coefficients(3, V, r, mc(100000, 2));
  const auto shift = log_partition_shift(0.1, V, r, b, 100000, 3);
  CHECK(shift.series.value < 0.0);
  CHECK(shift.agree);
}
