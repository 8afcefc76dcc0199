#include "latsched/factorization.hpp"
#include "latsched/rng.hpp"

#include <benchmark/benchmark.h>

using namespace latsched;

namespace {

UtilityMatrix synthetic_matrix(std::size_t m, std::size_t n, double density,
                               std::uint64_t seed) {
    std::vector<ColumnKind> cols;
    cols.push_back(ColumnKind::isolation());
    for (std::size_t i = 1; i < n; ++i)
        cols.push_back(ColumnKind::kernel((i - 1) / 10, 1 + static_cast<int>((i - 1) % 10)));
    UtilityMatrix matrix(m, cols);
    Rng rng(seed);
    std::vector<double> row_factor(m), col_factor(n);
    for (auto& x : row_factor) x = rng.uniform(0.5, 2.0);
    for (auto& x : col_factor) x = rng.uniform(5.0, 50.0);
    for (std::size_t u = 0; u < m; ++u)
        for (std::size_t i = 0; i < n; ++i)
            if (rng.uniform() < density) matrix.insert(u, i, row_factor[u] * col_factor[i]);
    return matrix;
}

} // namespace

// Per-epoch cost scales with the number of observed entries (the target
// mask), not with m*d.
static void BM_SgdEpochCost(benchmark::State& state) {
    const auto density = static_cast<double>(state.range(0)) / 100.0;
    const auto matrix = synthetic_matrix(200, 120, density, 11);
    const auto model = impute_and_init(matrix, RankPolicy{0.9, 8});
    SgdConfig cfg;
    cfg.max_iterations = 1; // isolate one epoch
    cfg.convergence_window = 1000;
    const auto mask = matrix.observed_mask();
    for (auto _ : state) {
        auto result = sgd_refine(matrix, model, cfg, mask);
        benchmark::DoNotOptimize(result.final_rmse);
    }
    state.counters["entries"] = static_cast<double>(mask.size());
}
BENCHMARK(BM_SgdEpochCost)->Arg(10)->Arg(25)->Arg(50)->Arg(100);

static void BM_SerialRefine(benchmark::State& state) {
    const auto matrix = synthetic_matrix(200, 120, 0.25, 11);
    const auto model = impute_and_init(matrix, RankPolicy{0.9, 8});
    SgdConfig cfg;
    cfg.max_iterations = 40;
    const auto mask = matrix.observed_mask();
    for (auto _ : state) {
        auto result = sgd_refine(matrix, model, cfg, mask);
        benchmark::DoNotOptimize(result.final_rmse);
    }
}
BENCHMARK(BM_SerialRefine);

static void BM_ParallelRefine(benchmark::State& state) {
    const auto workers = static_cast<std::size_t>(state.range(0));
    const auto matrix = synthetic_matrix(200, 120, 0.25, 11);
    const auto model = impute_and_init(matrix, RankPolicy{0.9, 8});
    SgdConfig cfg;
    cfg.max_iterations = 40;
    const auto mask = matrix.observed_mask();
    for (auto _ : state) {
        auto result = parallel_sgd_refine(matrix, model, cfg, mask, workers);
        benchmark::DoNotOptimize(result.final_rmse);
    }
}
BENCHMARK(BM_ParallelRefine)->Arg(1)->Arg(2)->Arg(4);

static void BM_JacobiInit(benchmark::State& state) {
    const auto matrix = synthetic_matrix(200, 120, 0.25, 11);
    for (auto _ : state) {
        auto model = impute_and_init(matrix, RankPolicy{0.9, 8});
        benchmark::DoNotOptimize(model.rank());
    }
}
BENCHMARK(BM_JacobiInit);
