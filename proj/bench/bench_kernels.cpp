// OpenMP kernels against their serial references. The last Arg of a parallel
// case is its thread count.

#include <benchmark/benchmark.h>

#include <cmath>

#include "bose/bridge.hpp"
#include "bose/fock_oracle.hpp"
#include "bose/kernels.hpp"
#include "bose/loop_gas.hpp"
#include "bose/potential.hpp"
#include "bose/thermal_field.hpp"

namespace {

using namespace bose;

double term(std::size_t i) { return std::exp(-1e-6 * static_cast<double>(i)) / (1.0 + static_cast<double>(i)); }

void BM_sum_parallel(benchmark::State& st) {
  kernels::set_thread_count(static_cast<int>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::sum(static_cast<std::size_t>(st.range(0)), term));
}
void BM_sum_serial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(kernels::serial::sum(static_cast<std::size_t>(st.range(0)), term));
}

const fock::TruncatedFock& fock_system() {
  static const fock::TruncatedFock f{{0.0, 0.5, 0.5, 0.9, 1.3}, 14};
  return f;
}
fock::FockOptions fock_options() {
  fock::FockOptions o;
  o.allow_truncation = true;
  return o;
}

void BM_fock_parallel(benchmark::State& st) {
  kernels::set_thread_count(static_cast<int>(st.range(0)));
  const auto opt = fock_options();
  for (auto _ : st) benchmark::DoNotOptimize(fock::enumerate(fock_system(), 1.0, -0.2, nullptr, opt).logZ);
}
void BM_fock_serial(benchmark::State& st) {
  const auto opt = fock_options();
  for (auto _ : st) benchmark::DoNotOptimize(fock::enumerate_serial(fock_system(), 1.0, -0.2, nullptr, opt).logZ);
}

struct LoopFixture {
  loops::BoxRegion region{3, 16.0, loops::Boundary::periodic, 1.0, 16};
  loops::PairPotential V = loops::PairPotential::gaussian(1.0, 0.3);
  loops::LoopConfiguration config = loops::sample_free_poisson(0.6, region, 11);
};
const LoopFixture& loop_fixture() {
  static const LoopFixture f;
  return f;
}

void BM_energy_parallel(benchmark::State& st) {
  kernels::set_thread_count(static_cast<int>(st.range(0)));
  const auto& f = loop_fixture();
  for (auto _ : st) benchmark::DoNotOptimize(loops::interaction_energy(f.config, f.V, f.region));
}
void BM_energy_serial(benchmark::State& st) {
  const auto& f = loop_fixture();
  for (auto _ : st) benchmark::DoNotOptimize(loops::interaction_energy_serial(f.config, f.V, f.region));
}

struct FieldFixture {
  thermal::ThermalFieldParams p{{1.0, 8, 1, 16.0, 64}, 0.5, false, 0.0};
  thermal::FieldSample sample = thermal::sample_field(p, 5);
  thermal::PolynomialPerturbation pert{
      {0, 0, 1}, 0.1, 1.0, thermal::SubBox{{0, 0, 0}, {64, 0, 0}}, [](double r) { return std::exp(-r * r / 2); }};
};
const FieldFixture& field_fixture() {
  static const FieldFixture f;
  return f;
}

void BM_action_parallel(benchmark::State& st) {
  kernels::set_thread_count(static_cast<int>(st.range(0)));
  const auto& f = field_fixture();
  for (auto _ : st) benchmark::DoNotOptimize(thermal::perturbation_action(f.sample, f.pert));
}
void BM_action_serial(benchmark::State& st) {
  const auto& f = field_fixture();
  for (auto _ : st) benchmark::DoNotOptimize(thermal::perturbation_action_serial(f.sample, f.pert));
}

}  // namespace

BENCHMARK(BM_sum_serial)->Arg(1 << 20)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_sum_parallel)->Args({1 << 20, 1})->Args({1 << 20, 4})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_fock_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fock_parallel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_energy_serial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_energy_parallel)->Arg(1)->Arg(4)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_action_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_action_parallel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
