// latsched command-line front end: scheduler comparison experiments, the
// estimation-error density sweep, and the heterogeneity-degree sweep. All
// outputs are CSV files; reruns with the same config and seeds are
// byte-identical.

#include "latsched/errors.hpp"
#include "latsched/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct CommonFlags {
    std::string config_path;
    std::string scheduler;
    std::string scenario;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t mixes = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON experiment config file");
        cmd->add_option("--scheduler", scheduler,
                        "scheduler name (staged, staged_static, greedy, smallest_first, "
                        "hier_independent); overrides the config");
        cmd->add_option("--scenario", scenario,
                        "scenario name (cmp, cluster, cluster_dvfs); overrides the config");
        cmd->add_option("--seed", seed, "base seed; overrides the config");
        cmd->add_option("--mixes", mixes, "number of application mixes; overrides the config");
        cmd->add_option("--out", out_dir, "output directory; overrides the config");
    }

    latsched::ExperimentConfig resolve() const {
        latsched::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = latsched::load_config_file(config_path);
        if (!scenario.empty()) cfg.scenario = scenario;
        if (!scheduler.empty()) cfg.schedulers = {scheduler};
        if (seed != 0) cfg.seeds = {seed};
        if (mixes != 0) cfg.mix_count = mixes;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.validate();
        return cfg;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-factor interference-aware scheduler simulator"};
    app.require_subcommand(1);

    CommonFlags experiment_flags, density_flags, hetero_flags;
    auto* experiment =
        app.add_subcommand("experiment", "run scheduler-comparison episodes and write CSVs");
    experiment_flags.attach(experiment);
    auto* density = app.add_subcommand(
        "density-sweep", "estimation error as a function of profiling runs per application");
    density_flags.attach(density);
    auto* hetero = app.add_subcommand(
        "heterogeneity-sweep", "staged-over-greedy improvement as platform diversity grows");
    hetero_flags.attach(hetero);

    CLI11_PARSE(app, argc, argv);

    try {
        if (experiment->parsed()) {
            const auto out = latsched::run_experiment(experiment_flags.resolve());
            for (const auto& path : out.files_written) std::cout << "wrote " << path << "\n";
        } else if (density->parsed()) {
            const auto out = latsched::run_density_sweep(density_flags.resolve());
            for (const auto& path : out.files_written) std::cout << "wrote " << path << "\n";
        } else if (hetero->parsed()) {
            const auto out = latsched::run_heterogeneity_sweep(hetero_flags.resolve());
            for (const auto& path : out.files_written) std::cout << "wrote " << path << "\n";
        }
    } catch (const latsched::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
