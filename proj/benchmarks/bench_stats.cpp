#include <benchmark/benchmark.h>

#include <vector>

#include "cmac/rng.hpp"
#include "cmac/stats.hpp"

namespace {

struct Fixture {
    std::vector<double> scores_a, scores_b;
    std::vector<int> labels;
    cmac::LabeledScores rows;
};

Fixture make_fixture(std::size_t n) {
    cmac::Rng rng(11);
    Fixture f;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = i % 2 == 0 ? 1 : 0;
        const double s = 0.3 * rng.gaussian() + (y == 1 ? 0.65 : 0.35);
        f.labels.push_back(y);
        f.scores_a.push_back(s);
        f.scores_b.push_back(s + 0.1 * rng.gaussian());
        cmac::ScoredRow row;
        row.id = static_cast<std::int64_t>(i);
        row.subgroup = cmac::SubgroupKey{{i % 3 == 0 ? "a" : "b"}};
        row.true_label = y;
        row.score = std::min(1.0, std::max(0.0, s));
        f.rows.push_back(row);
    }
    return f;
}

void bm_roc_auc(benchmark::State& state) {
    const Fixture f = make_fixture(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(cmac::roc_auc(f.scores_a, f.labels));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_roc_auc)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void bm_delong(benchmark::State& state) {
    const Fixture f = make_fixture(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(cmac::delong_test(f.scores_a, f.scores_b, f.labels));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_delong)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void bm_bootstrap_mean(benchmark::State& state) {
    const Fixture f = make_fixture(240);
    cmac::BootstrapConfig cfg;
    cfg.n_resamples = static_cast<int>(state.range(0));
    cfg.seed = 3;
    const auto mean_score = [](const cmac::LabeledScores& d) {
        double acc = 0.0;
        for (const auto& r : d) acc += r.score;
        return acc / static_cast<double>(d.size());
    };
    for (auto _ : state) {
        benchmark::DoNotOptimize(cmac::bootstrap_ci(mean_score, f.rows, cfg));
    }
}
BENCHMARK(bm_bootstrap_mean)->Arg(100)->Arg(1000)->Arg(10000);

} // namespace

BENCHMARK_MAIN();
