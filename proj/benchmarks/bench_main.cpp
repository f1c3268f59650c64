#include <benchmark/benchmark.h>

#include "mdb/diversity.hpp"
#include "mdb/metrics.hpp"
#include "mdb/network.hpp"
#include "mdb/rng.hpp"
#include "mdb/synthgrid.hpp"

using namespace mdb;

namespace {

Batch random_batch(const ModelConfig& c, int n) {
    Batch b;
    b.n = n;
    b.channels = c.channels;
    b.height = b.width = c.input_size;
    b.data.resize(static_cast<std::size_t>(n) * b.image_numel());
    SplitMix64 rng(1);
    for (float& v : b.data) v = static_cast<float>(rng.uniform());
    return b;
}

ModelConfig bench_model(int stem) {
    ModelConfig c;
    c.stem_width = stem;
    return c;
}

void BM_Forward(benchmark::State& state) {
    const ModelConfig cfg = bench_model(static_cast<int>(state.range(0)));
    const ParamState s = init_model(cfg, 0);
    const Batch b = random_batch(cfg, 128);
    for (auto _ : state) benchmark::DoNotOptimize(forward(s, b));
    state.SetItemsProcessed(state.iterations() * b.n);
}
BENCHMARK(BM_Forward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_LossAndGrad(benchmark::State& state) {
    const ModelConfig cfg = bench_model(static_cast<int>(state.range(0)));
    const ParamState s = init_model(cfg, 0);
    const Batch b = random_batch(cfg, 128);
    std::vector<int> labels(b.n);
    for (int i = 0; i < b.n; ++i) labels[i] = i % cfg.n_classes;
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(s, b, labels));
    state.SetItemsProcessed(state.iterations() * b.n);
}
BENCHMARK(BM_LossAndGrad)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_RenderSample(benchmark::State& state) {
    GridConfig g;
    std::size_t i = 0;
    for (auto _ : state) {
        SplitMix64 stream(render_stream(g.seed, static_cast<int>(i % 10), static_cast<int>(i % 5), Pool::Train, i));
        benchmark::DoNotOptimize(render_sample(static_cast<int>(i % 10), static_cast<int>(i % 5), stream, g));
        ++i;
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RenderSample);

void BM_SampleSplitAndOod(benchmark::State& state) {
    GridConfig g;
    g.pool_sizes = {200, 50, 0, 0};
    const DatasetGrid grid = build_grid(g);
    const CountMatrix counts = cell_counts(distribution_grid(200).back(), 10, 5);
    std::uint64_t seed = 0;
    for (auto _ : state) {
        const SplitPlan p = sample_split(grid, counts, 0.75, seed);
        benchmark::DoNotOptimize(apply_ood(p, {{4, 2}, 85}, seed++));
    }
}
BENCHMARK(BM_SampleSplitAndOod)->Unit(benchmark::kMillisecond);

void BM_PerCellRecall(benchmark::State& state) {
    const int n = 5000;
    std::vector<int> pred(n), cls(n), dom(n);
    SplitMix64 rng(3);
    for (int i = 0; i < n; ++i) {
        cls[i] = static_cast<int>(rng.below(10));
        dom[i] = static_cast<int>(rng.below(5));
        pred[i] = static_cast<int>(rng.below(10));
    }
    for (auto _ : state) benchmark::DoNotOptimize(per_cell_recall(pred, cls, dom, 10, 5));
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_PerCellRecall);

}  // namespace

BENCHMARK_MAIN();
