#include <benchmark/benchmark.h>

#include <vector>

#include "cmac/mmd.hpp"
#include "cmac/rng.hpp"

namespace {

std::vector<double> scores(std::size_t n, std::uint64_t seed) {
    cmac::Rng rng(seed);
    std::vector<double> out(n);
    for (double& v : out) v = rng.gaussian();
    return out;
}

void bm_mmd2_biased(benchmark::State& state) {
    const auto x = scores(static_cast<std::size_t>(state.range(0)), 1);
    const auto y = scores(static_cast<std::size_t>(state.range(0)), 2);
    const cmac::KernelConfig cfg = cmac::KernelConfig::fixed(1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cmac::mmd2(x, y, cfg));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_mmd2_biased)->RangeMultiplier(2)->Range(8, 256)->Complexity();

void bm_mmd2_grad(benchmark::State& state) {
    const auto x = scores(static_cast<std::size_t>(state.range(0)), 3);
    const auto y = scores(static_cast<std::size_t>(state.range(0)), 4);
    const cmac::KernelConfig cfg = cmac::KernelConfig::fixed(1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cmac::mmd2_grad(x, y, cfg));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_mmd2_grad)->RangeMultiplier(2)->Range(8, 256)->Complexity();

void bm_median_heuristic(benchmark::State& state) {
    const auto pooled = scores(static_cast<std::size_t>(state.range(0)), 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cmac::median_heuristic_bandwidth(pooled));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_median_heuristic)->RangeMultiplier(2)->Range(16, 512)->Complexity();

} // namespace

BENCHMARK_MAIN();
