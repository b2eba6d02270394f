// Serial reference vs OpenMP for each parallel kernel. The second benchmark
// argument selects the path: 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include <random>

#include "fedmerge/runner.hpp"
#include "fedmerge/synthetic.hpp"

using namespace fedmerge;

namespace {

const SyntheticCollection& data()
{
    static const SyntheticCollection d = [] {
        SyntheticParams p;
        p.collections = 24;
        p.docs = 4800;
        p.topics = 20;
        return generate_synthetic(p);
    }();
    return d;
}

const CollectionSet& corpus()
{
    static const CollectionSet c = CollectionSet::from_documents(data().docs);
    return c;
}

void BM_IndexBuild(benchmark::State& state)
{
    const bool parallel = state.range(0) != 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_collection_indexes(corpus(), parallel));
    }
}
BENCHMARK(BM_IndexBuild)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Sampling(benchmark::State& state)
{
    const bool parallel = state.range(0) != 0;
    const auto indexes = build_collection_indexes(corpus(), true);
    SamplingParams p;
    p.target_size = 100;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_collections(indexes, p, 7, parallel));
    }
}
BENCHMARK(BM_Sampling)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ForestFit(benchmark::State& state)
{
    const bool parallel = state.range(0) != 0;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TrainingSet ts(8);
    for (int i = 0; i < 400; ++i) {
        std::vector<double> x(8);
        for (auto& v : x) {
            v = u(rng);
        }
        ts.add(x, x[0] * x[1] + x[2] + 0.1 * u(rng));
    }
    ForestParams p;
    p.n_trees = 100;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_forest(ts, p, 11, parallel));
    }
}
BENCHMARK(BM_ForestFit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_QueryPipeline(benchmark::State& state)
{
    ExperimentInputs in;
    in.corpus = corpus();
    in.topics = data().topics;
    in.qrels = data().qrels;
    ExperimentConfig c;
    c.parallel = state.range(0) != 0;
    c.sampling.target_size = 60;
    c.strategies = {Strategy::cori, Strategy::ssl, Strategy::mm_forest, Strategy::gm_linear};
    c.modes = {Mode::cooperative, Mode::uncooperative};
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_experiment(in, c));
    }
}
BENCHMARK(BM_QueryPipeline)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
