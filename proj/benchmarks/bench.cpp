#include <benchmark/benchmark.h>

#include <cmath>

#include "qpcsim/bloch.hpp"
#include "qpcsim/statistics.hpp"
#include "qpcsim/trajectory.hpp"

using namespace qpcsim;

namespace {

BarrierPair barriers_from_probs(double p_l, double p_r) {
  return {std::acos(std::sqrt(p_l)), std::acos(std::sqrt(p_r))};
}

void bm_kraus_update(benchmark::State& state) {
  const KrausPair k =
      KrausPair::from_barriers(barriers_from_probs(0.8, 0.2));
  DensityMatrix2 rho{0.5, 0.5, 0.5};
  int outcome = 1;
  for (auto _ : state) {
    const KrausOutcome out = kraus_update(rho, k, outcome);
    benchmark::DoNotOptimize(out.probability);
    outcome ^= 1;  // alternate so the state cannot collapse to a fixed point
  }
}
BENCHMARK(bm_kraus_update);

void bm_bloch_evolve_1k_steps(benchmark::State& state) {
  const PolarizationVector p0{1.0, 0.0, 0.0};
  EvolutionSpec spec;
  spec.v = {0.0, 0.0, 1.0};
  spec.d = 0.3;
  spec.dt = 1e-3;
  spec.t_final = 1.0;
  for (auto _ : state) {
    const auto path = evolve(p0, spec);
    benchmark::DoNotOptimize(path.back().p.px);
  }
}
BENCHMARK(bm_bloch_evolve_1k_steps);

void bm_mixture_pmf(benchmark::State& state) {
  const BarrierPair b = barriers_from_probs(0.8, 0.2);
  const DensityMatrix2 rho{0.5, 0.5, 0.0};
  const std::int64_t n = state.range(0);
  for (auto _ : state) {
    const CountDistribution d = mixture_pmf(rho, b, n);
    benchmark::DoNotOptimize(d.pmf.data());
  }
}
BENCHMARK(bm_mixture_pmf)->Arg(100)->Arg(10000)->Arg(1000000);

void bm_brute_force_n20(benchmark::State& state) {
  const BarrierPair b = barriers_from_probs(0.8, 0.2);
  const DensityMatrix2 rho{0.5, 0.5, 0.0};
  for (auto _ : state) {
    const VarianceReport r = brute_force_variance(rho, b, 20);
    benchmark::DoNotOptimize(r.var_total);
  }
}
BENCHMARK(bm_brute_force_n20);

void bm_trajectory_1k_probings(benchmark::State& state) {
  SimPlan plan;
  plan.barriers = barriers_from_probs(0.95, 0.05);
  plan.initial = {1.0, 0.0, 0.0};
  plan.v = {0.05, 0.0, 0.0};
  plan.n = 1000;
  plan.ensemble = 1;
  plan.master_seed = 7;
  std::uint64_t stream = 0;
  for (auto _ : state) {
    const TrajectoryRecord rec = simulate_trajectory(plan, stream++);
    benchmark::DoNotOptimize(rec.bits.data());
  }
}
BENCHMARK(bm_trajectory_1k_probings);

}  // namespace

BENCHMARK_MAIN();
