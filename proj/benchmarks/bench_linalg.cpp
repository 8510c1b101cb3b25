#include <benchmark/benchmark.h>

#include "qswitch/linalg.hpp"
#include "qswitch/rng.hpp"

using namespace qswitch;

namespace {

CMatrix random_hermitian(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  CMatrix a(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) a(i, j) = Complex(rng.normal(), rng.normal());
  }
  return 0.5 * (a + a.adjoint());
}

void BM_HermitianEig(benchmark::State& state) {
  const CMatrix h = random_hermitian(state.range(0), 1);
  for (auto _ : state) benchmark::DoNotOptimize(hermitian_eig(h));
}
BENCHMARK(BM_HermitianEig)->RangeMultiplier(2)->Range(4, 64)->Unit(benchmark::kMicrosecond);

void BM_ExpmFromEig(benchmark::State& state) {
  const HermitianEig eig = hermitian_eig(random_hermitian(state.range(0), 2));
  for (auto _ : state) benchmark::DoNotOptimize(expm_from_eig(eig, 0.3));
}
BENCHMARK(BM_ExpmFromEig)->RangeMultiplier(2)->Range(4, 64)->Unit(benchmark::kMicrosecond);

void BM_ExpmFrechet(benchmark::State& state) {
  const HermitianEig eig = hermitian_eig(random_hermitian(state.range(0), 3));
  const CMatrix dir = random_hermitian(state.range(0), 4);
  for (auto _ : state) benchmark::DoNotOptimize(expm_frechet(eig, dir, 0.3));
}
BENCHMARK(BM_ExpmFrechet)->RangeMultiplier(2)->Range(4, 64)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
