#include <benchmark/benchmark.h>

#include "maescale/corpus.hpp"
#include "maescale/mae.hpp"
#include "maescale/random.hpp"
#include "maescale/scaling_law.hpp"

using namespace maescale;

namespace {

struct ModelFixture {
    MaeModelConfig config;
    ParameterStore params;
    Matrix patches;
    MaskSet mask;

    ModelFixture(const std::string& size, int side)
        : config(size_ladder(side).at(size).config),
          params(ParameterStore::initialize(config, 1)),
          patches(static_cast<std::size_t>(config.patch_count()), static_cast<std::size_t>(config.patch_dim())),
          mask(sample_mask(config.patch_count(), kDefaultMaskRatio, 2)) {
        Rng rng(3);
        for (double& v : patches.data()) v = rng.uniform01();
    }
};

const char* kSizes[] = {"TOY-A", "TOY-B", "TOY-C", "TOY-D"};

void BM_Forward(benchmark::State& state) {
    const ModelFixture f(kSizes[state.range(0)], static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(forward(f.params, f.config, f.patches, f.mask));
    state.SetLabel(std::string(kSizes[state.range(0)]) + " params=" + std::to_string(f.params.size()));
}
BENCHMARK(BM_Forward)->ArgsProduct({{0, 1, 2, 3}, {16, 32}});

void BM_LossAndGradient(benchmark::State& state) {
    const ModelFixture f(kSizes[state.range(0)], static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(f.params, f.config, f.patches, f.mask));
    state.SetLabel(kSizes[state.range(0)]);
}
BENCHMARK(BM_LossAndGradient)->ArgsProduct({{0, 1, 2, 3}, {16, 32}});

void BM_FitTwelvePoints(benchmark::State& state) {
    std::vector<ScalingPoint> pts;
    Rng rng(4);
    for (double i : {0.1, 0.5, 2.0, 10.0}) {
        for (double ppi : {16.0, 24.0, 32.0}) {
            pts.push_back({i, ppi, predict({1.7, 2.0, 1.2}, i, ppi) + rng.uniform(-0.5, 0.5)});
        }
    }
    for (auto _ : state) benchmark::DoNotOptimize(fit(pts));
}
BENCHMARK(BM_FitTwelvePoints)->Unit(benchmark::kMillisecond);

void BM_SampleSubset(benchmark::State& state) {
    const auto m = build_synthetic_corpus(static_cast<std::size_t>(state.range(0)), reference_mixture(), 4, 8, 5);
    int rep = 0;
    for (auto _ : state) benchmark::DoNotOptimize(sample_subset(m, {0.25, 9, rep++}));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleSubset)->Arg(1000)->Arg(20000);

}  // namespace
BENCHMARK_MAIN();
