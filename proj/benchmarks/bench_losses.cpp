#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <vector>

#include "cmac/losses.hpp"
#include "cmac/rng.hpp"

namespace {

cmac::SimilarityBatch batch_of(int n) {
    cmac::Rng rng(21);
    Eigen::MatrixXd s(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) s(i, j) = rng.gaussian();
    }
    return cmac::SimilarityBatch{s, 0.5};
}

cmac::BatchAnnotations groups_of(int n) {
    cmac::BatchAnnotations g;
    for (int i = 0; i < n; ++i) {
        g.subgroup_of.push_back(cmac::SubgroupKey{{std::string(1, static_cast<char>('a' + i % 6))}});
    }
    return g;
}

void bm_clip_loss(benchmark::State& state) {
    const auto batch = batch_of(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(cmac::clip_loss(batch));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_clip_loss)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void bm_total_loss(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto batch = batch_of(n);
    const auto groups = groups_of(n);
    cmac::LossConfig cfg;
    cfg.kernel = cmac::KernelConfig::fixed(0.5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cmac::total_loss(batch, groups, cfg));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_total_loss)->RangeMultiplier(2)->Range(8, 128)->Complexity();

} // namespace

BENCHMARK_MAIN();
