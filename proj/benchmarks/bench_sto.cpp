#include <benchmark/benchmark.h>

#include "qswitch/sto.hpp"

using namespace qswitch;

namespace {

// Alternating two-controller sequence of S intervals on a q-qubit energy
// instance.
ControllerSequence alternating(const Problem& p, int S) {
  ControllerSequence seq;
  seq.x_init = p.system.x_init;
  seq.t_f = p.system.t_f;
  for (int s = 0; s < S; ++s) {
    const RVector u = RVector::Unit(2, s % 2);
    seq.control_vectors.push_back(u);
    seq.hams.push_back(p.system.hamiltonian(u));
    seq.durations.push_back(p.system.t_f / S);
  }
  return seq;
}

// Args: qubits, cache on/off.
void BM_SolveSto(benchmark::State& state) {
  const Problem p = build_energy(static_cast<int>(state.range(0)), CouplingMatrix::random(static_cast<int>(state.range(0)), 1), 2.0);
  const ControllerSequence seq = alternating(p, 20);
  StoOptions opts;
  opts.use_cache = state.range(1) != 0;
  opts.max_iters = 5;
  for (auto _ : state) benchmark::DoNotOptimize(solve_sto(seq, p.objective, 2.0, opts));
}
BENCHMARK(BM_SolveSto)->Args({4, 1})->Args({4, 0})->Args({6, 1})->Args({6, 0})->Unit(benchmark::kMillisecond);

void BM_StoGradient(benchmark::State& state) {
  const Problem p = build_energy(4, CouplingMatrix::random(4, 2), 2.0);
  const ControllerSequence seq = alternating(p, static_cast<int>(state.range(0)));
  const SwitchingSchedule sched = initial_schedule(seq);
  EigCache cache;
  for (auto _ : state) benchmark::DoNotOptimize(sto_gradient(seq, sched, p.objective, cache));
}
BENCHMARK(BM_StoGradient)->Arg(5)->Arg(20)->Arg(80)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
