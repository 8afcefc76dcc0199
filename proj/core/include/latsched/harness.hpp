#pragma once

#include "latsched/runtime.hpp"
#include "latsched/simworld.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace latsched {

/// Experiment description, normally loaded from a JSON file. CLI flags
/// override individual keys.
struct ExperimentConfig {
    std::string scenario = "cmp"; // cmp | cluster | cluster_dvfs
    std::vector<std::string> schedulers = {"staged", "greedy"};
    std::size_t mix_count = 10;
    std::size_t apps_per_mix = 10;
    std::vector<std::uint64_t> seeds = {1};
    int heterogeneity_degree = 4;
    std::vector<int> degrees = {2, 4, 8, 10};         // heterogeneity sweep
    std::vector<std::size_t> profiling_runs = {1, 2, 3}; // density sweep
    int freq_levels = 0; // 0 = scenario default (1, or 20 for cluster_dvfs)
    int total_servers = 40;
    double episode_duration = 300.0;
    MixConfig mix;
    SchedulerConfig runtime;
    std::string out_dir = "out";
    bool write_matrices = false;
    // Explicit platform inventory; overrides the scenario preset when set.
    std::optional<Cluster> custom_cluster;

    void validate() const;
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

/// Builds the platform inventory for the configured scenario.
Cluster make_scenario_cluster(const ExperimentConfig& config);

struct ResultRow {
    std::size_t mix_id = 0;
    std::uint64_t seed = 0;
    std::string scheduler;
    double gmean = 0.0;
    double norm_vs_greedy = 0.0;
    double decision_time = 0.0;  // simulated seconds
    double migration_time = 0.0; // simulated seconds
    std::size_t corrections = 0;
    std::size_t migrations = 0;
    std::size_t violations = 0;
    std::size_t rejected = 0;
};

struct ExperimentOutput {
    std::vector<ResultRow> rows;            // sorted by (scheduler, mix, seed)
    std::vector<std::string> files_written; // paths under out_dir
};

/// Runs every scheduler over every (mix, seed) episode and writes
/// results.csv, summary.csv and normalized_curve.csv under out_dir.
/// Deterministic: identical config and seeds give byte-identical files.
ExperimentOutput run_experiment(const ExperimentConfig& config);

struct DensityRow {
    std::size_t runs = 0;
    std::size_t mix_id = 0;
    double mean_error = 0.0; // vs the station oracle over withheld cells
};

struct DensityOutput {
    std::vector<DensityRow> rows;
    std::vector<double> mean_error_by_runs; // aligned with config.profiling_runs
    std::vector<std::string> files_written;
};

/// Reference-block estimation error as a function of profiling runs.
DensityOutput run_density_sweep(const ExperimentConfig& config);

struct HeterogeneityRow {
    int degree = 0;
    std::size_t mix_id = 0;
    double staged_gmean = 0.0;
    double greedy_gmean = 0.0;
    double improvement = 0.0; // staged/greedy - 1
};

struct HeterogeneityOutput {
    std::vector<HeterogeneityRow> rows;
    std::vector<double> mean_improvement_by_degree; // aligned with config.degrees
    std::vector<std::string> files_written;
};

/// Staged-over-greedy improvement as platform diversity grows, cluster size
/// held constant.
HeterogeneityOutput run_heterogeneity_sweep(const ExperimentConfig& config);

/// Locale-independent fixed formatting shared by all CSV writers.
std::string format_double(double value);

/// One episode as the harness runs it (exposed for tests and acceptance).
EpisodeResult run_one_episode(const ExperimentConfig& config, const std::string& scheduler,
                              std::size_t mix_id, std::uint64_t seed);

} // namespace latsched
