#include <benchmark/benchmark.h>

#include "mfc/benchmarks.hpp"
#include "mfc/bellman.hpp"
#include "mfc/lift.hpp"
#include "mfc/measure.hpp"
#include "mfc/mollify.hpp"
#include "mfc/rng.hpp"

namespace {

using namespace mfc;

DiscreteMeasure random_cloud(int atoms, std::uint64_t seed,
                             double clip = 10.0) {
  CounterRng rng(CounterRng::derive_key(seed, StreamRole::Probe));
  Mat pts(1, atoms);
  Vec w(atoms);
  for (int k = 0; k < atoms; ++k) {
    pts(0, k) = std::clamp(2.0 * rng.normal(), -clip, clip);
    w[k] = 0.05 + rng.uniform();
  }
  w /= w.sum();
  return DiscreteMeasure(std::move(pts), std::move(w));
}

void BM_Wasserstein1d(benchmark::State& state) {
  const auto mu = random_cloud(static_cast<int>(state.range(0)), 1);
  const auto nu = random_cloud(static_cast<int>(state.range(0)), 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(wasserstein_1d(mu, nu, 1.0));
}
BENCHMARK(BM_Wasserstein1d)->Arg(10)->Arg(50)->Arg(200);

void BM_WassersteinLp(benchmark::State& state) {
  const auto mu = random_cloud(static_cast<int>(state.range(0)), 1);
  const auto nu = random_cloud(static_cast<int>(state.range(0)), 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(wasserstein_lp(mu, nu, 1.0));
}
BENCHMARK(BM_WassersteinLp)->Arg(10)->Arg(50)->Arg(200);

void BM_MollifiedDrift(benchmark::State& state) {
  const auto p = make_benchmark("mean-reverting-mf");
  const int n = static_cast<int>(state.range(0));
  MollifiedCoefficients mc(p, n, MollifierSpec::bump(16, 1, 7));
  Vec xbar = Vec::Constant(n, 0.3);
  const Vec& a = p.control_set[1];
  for (auto _ : state)
    benchmark::DoNotOptimize(mc.b_i(0, 0.4, xbar, a));
}
BENCHMARK(BM_MollifiedDrift)->Arg(1)->Arg(2)->Arg(3);

void BM_BellmanSolve1d(benchmark::State& state) {
  const auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(16, 1, 7));
  GridSpec g;
  g.nodes_per_axis = static_cast<int>(state.range(0));
  g.eps = 0.1;
  for (auto _ : state) {
    const auto vg = solve_bellman(p, mc, g);
    benchmark::DoNotOptimize(vg.at(0, 0));
  }
}
BENCHMARK(BM_BellmanSolve1d)->Arg(101)->Arg(201)->Unit(benchmark::kMillisecond);

void BM_LiftTensor(benchmark::State& state) {
  const auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients mc(p, 2, MollifierSpec::bump(8, 1, 5));
  GridSpec g;
  g.nodes_per_axis = 41;
  g.eps = 0.2;
  const auto vg = solve_bellman(p, mc, g);
  const auto mu = random_cloud(static_cast<int>(state.range(0)), 3, 2.9);
  for (auto _ : state) benchmark::DoNotOptimize(lift(vg, 0.0, mu).value);
}
BENCHMARK(BM_LiftTensor)->Arg(5)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
