#include "latsched/harness.hpp"
#include "latsched/placement.hpp"
#include "latsched/runtime.hpp"

#include <benchmark/benchmark.h>

using namespace latsched;

static void BM_EnumerateCandidates(benchmark::State& state) {
    const auto cluster = make_cmp_cluster();
    ClusterState empty{&cluster, {}};
    const std::vector<AppId> apps = {0, 1, 2, 3, 4, 5, 6, 7};
    for (auto _ : state) {
        auto candidates = enumerate_candidates(apps, empty, state.range(0), 3);
        benchmark::DoNotOptimize(candidates.size());
    }
}
BENCHMARK(BM_EnumerateCandidates)->Arg(100)->Arg(500);

// End-to-end admission latency on the heterogeneous CMP; the real-time
// analog of the per-admission decision overhead the harness reports.
static void BM_StagedAdmission(benchmark::State& state) {
    const auto cluster = make_cmp_cluster();
    for (auto _ : state) {
        state.PauseTiming();
        World world(cluster, 7, 0.01);
        const auto mix = generate_mix(6, 19, cluster);
        for (const auto& spec : mix) world.add_app(spec);
        SchedulerConfig cfg;
        cfg.policy = SchedulerPolicy::staged;
        cfg.pipeline.bootstrap_rows = 32;
        Master master(world, cfg);
        state.ResumeTiming();
        for (const auto& spec : mix) master.admit(spec.id);
        benchmark::DoNotOptimize(world.assignments().size());
    }
}
BENCHMARK(BM_StagedAdmission)->Unit(benchmark::kMillisecond);

static void BM_Episode(benchmark::State& state) {
    const auto cluster = make_cmp_cluster();
    for (auto _ : state) {
        World world(cluster, 7, 0.01);
        const auto mix = generate_mix(8, 23, cluster);
        SchedulerConfig cfg;
        cfg.policy = SchedulerPolicy::staged;
        cfg.pipeline.bootstrap_rows = 32;
        auto result = run_episode(mix, world, cfg, 120.0);
        benchmark::DoNotOptimize(result.final_gmean);
    }
}
BENCHMARK(BM_Episode)->Unit(benchmark::kMillisecond);
