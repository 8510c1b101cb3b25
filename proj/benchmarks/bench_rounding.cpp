#include <benchmark/benchmark.h>

#include "qswitch/rounding.hpp"
#include "qswitch/rng.hpp"

using namespace qswitch;

namespace {

ControlGrid random_grid(int T, int N, double t_f) {
  Rng rng(7);
  ControlGrid g = ControlGrid::filled(T, N, t_f, 0.0);
  for (int k = 0; k < T; ++k) {
    for (int j = 0; j < N; ++j) g.values(k, j) = rng.uniform();
  }
  return g;
}

// Arg: T. Energy instance on 4 qubits.
void BM_RoundObj(benchmark::State& state) {
  const Problem p = build_energy(4, CouplingMatrix::random(4, 1), 2.0);
  const FeasibleSet fs = FeasibleSet::for_system(p.system);
  const ControlGrid u = random_grid(static_cast<int>(state.range(0)), 2, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(round_obj(p.system, p.objective, u, 0.01, fs));
}
BENCHMARK(BM_RoundObj)->Arg(25)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_RoundCdiff(benchmark::State& state) {
  const FeasibleSet fs(FeasibleKind::FreeBinary, 4);
  const ControlGrid u = random_grid(static_cast<int>(state.range(0)), 4, 5.0);
  for (auto _ : state) benchmark::DoNotOptimize(round_cdiff(u, 0.02, fs));
}
BENCHMARK(BM_RoundCdiff)->Arg(100)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
