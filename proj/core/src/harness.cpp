#include "latsched/harness.hpp"

#include "latsched/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace latsched {

using nlohmann::json;

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", value);
    return buf;
}

void ExperimentConfig::validate() const {
    if (scenario != "cmp" && scenario != "cluster" && scenario != "cluster_dvfs")
        throw config_error("config: 'scenario' must be cmp, cluster or cluster_dvfs");
    if (schedulers.empty()) throw config_error("config: 'schedulers' must be non-empty");
    for (const auto& s : schedulers) parse_policy(s); // throws with the bad name
    if (seeds.empty()) throw config_error("config: 'seeds' must be non-empty");
    if (mix_count < 1) throw config_error("config: 'mixes' must be >= 1");
    if (apps_per_mix < 1) throw config_error("config: 'apps_per_mix' must be >= 1");
    if (freq_levels < 0 || freq_levels > 20)
        throw config_error("config: 'freq_levels' must be 0..20");
    for (auto r : profiling_runs)
        if (r < 1 || r > 5) throw config_error("config: 'profiling_runs' entries must be 1..5");
    for (auto d : degrees)
        if (d != 2 && d != 4 && d != 8 && d != 10)
            throw config_error("config: 'degrees' entries must be one of 2, 4, 8, 10");
    if (episode_duration < 0.0) throw config_error("config: 'duration' must be >= 0");
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(std::string("config: bad value for key '") + key + "'");
    }
}

} // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config: JSON parse error: ") + e.what());
    }

    ExperimentConfig cfg;
    cfg.scenario = get_or<std::string>(j, "scenario", cfg.scenario);
    cfg.schedulers = get_or<std::vector<std::string>>(j, "schedulers", cfg.schedulers);
    cfg.mix_count = get_or<std::size_t>(j, "mixes", cfg.mix_count);
    cfg.apps_per_mix = get_or<std::size_t>(j, "apps_per_mix", cfg.apps_per_mix);
    cfg.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", cfg.seeds);
    cfg.heterogeneity_degree = get_or<int>(j, "heterogeneity_degree", cfg.heterogeneity_degree);
    cfg.degrees = get_or<std::vector<int>>(j, "degrees", cfg.degrees);
    cfg.profiling_runs =
        get_or<std::vector<std::size_t>>(j, "profiling_runs", cfg.profiling_runs);
    cfg.freq_levels = get_or<int>(j, "freq_levels", cfg.freq_levels);
    cfg.total_servers = get_or<int>(j, "total_servers", cfg.total_servers);
    cfg.episode_duration = get_or<double>(j, "duration", cfg.episode_duration);
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);
    cfg.write_matrices = get_or<bool>(j, "write_matrices", cfg.write_matrices);

    if (j.contains("mix")) {
        const auto& m = j.at("mix");
        cfg.mix.lc_fraction = get_or<double>(m, "lc_fraction", cfg.mix.lc_fraction);
        cfg.mix.stateless_lc_prob =
            get_or<double>(m, "stateless_lc_prob", cfg.mix.stateless_lc_prob);
        cfg.mix.stateless_batch_prob =
            get_or<double>(m, "stateless_batch_prob", cfg.mix.stateless_batch_prob);
        cfg.mix.phase_change_prob =
            get_or<double>(m, "phase_change_prob", cfg.mix.phase_change_prob);
        cfg.mix.phase_time_min = get_or<double>(m, "phase_time_min", cfg.mix.phase_time_min);
        cfg.mix.phase_time_max = get_or<double>(m, "phase_time_max", cfg.mix.phase_time_max);
        cfg.mix.peak_min = get_or<double>(m, "peak_min", cfg.mix.peak_min);
        cfg.mix.peak_max = get_or<double>(m, "peak_max", cfg.mix.peak_max);
        cfg.mix.interference_scale =
            get_or<double>(m, "interference_scale", cfg.mix.interference_scale);
    }
    if (j.contains("sgd")) {
        const auto& s = j.at("sgd");
        auto& sgd = cfg.runtime.pipeline.sgd;
        sgd.lambda = get_or<double>(s, "lambda", sgd.lambda);
        sgd.max_iterations = get_or<std::size_t>(s, "max_iterations", sgd.max_iterations);
        sgd.convergence_tol = get_or<double>(s, "tol", sgd.convergence_tol);
        sgd.convergence_window = get_or<std::size_t>(s, "window", sgd.convergence_window);
        if (sgd.lambda <= 0.0) throw config_error("config: 'sgd.lambda' must be > 0");
        if (sgd.convergence_tol <= 0.0) throw config_error("config: 'sgd.tol' must be > 0");
        if (sgd.max_iterations < 1)
            throw config_error("config: 'sgd.max_iterations' must be >= 1");
    }
    if (j.contains("pipeline")) {
        const auto& p = j.at("pipeline");
        auto& pipe = cfg.runtime.pipeline;
        pipe.n_kernels = get_or<std::size_t>(p, "n_kernels", pipe.n_kernels);
        pipe.n_levels = get_or<std::size_t>(p, "n_levels", pipe.n_levels);
        pipe.profiling_runs = get_or<std::size_t>(p, "profiling_runs", pipe.profiling_runs);
        pipe.partial_placements =
            get_or<std::size_t>(p, "partial_placements", pipe.partial_placements);
        pipe.bootstrap_rows = get_or<std::size_t>(p, "bootstrap_rows", pipe.bootstrap_rows);
        pipe.profile_seconds = get_or<double>(p, "profile_seconds", pipe.profile_seconds);
        if (pipe.n_kernels < 1 || pipe.n_kernels > kResourceDims)
            throw config_error("config: 'pipeline.n_kernels' must be 1..8");
        if (pipe.n_levels < 1 || pipe.n_levels > 10)
            throw config_error("config: 'pipeline.n_levels' must be 1..10");
    }
    if (j.contains("cluster")) {
        const auto& cl = j.at("cluster");
        Cluster cluster;
        if (!cl.contains("core_classes") || !cl.contains("servers"))
            throw config_error("config: 'cluster' needs 'core_classes' and 'servers'");
        for (const auto& cc : cl.at("core_classes")) {
            CoreClass core;
            core.name = get_or<std::string>(cc, "name", "");
            if (core.name.empty())
                throw config_error("config: 'cluster.core_classes[].name' is required");
            core.nominal_ghz = get_or<double>(cc, "nominal_ghz", 1.0);
            core.min_ghz = get_or<double>(cc, "min_ghz", 1.0);
            core.smt_threads = get_or<int>(cc, "smt_threads", 1);
            core.ipc = get_or<double>(cc, "ipc", 1.0);
            core.cache_tag = get_or<std::string>(cc, "cache_tag", "");
            cluster.core_classes.push_back(std::move(core));
        }
        for (const auto& sv : cl.at("servers")) {
            Server server;
            server.name = get_or<std::string>(sv, "name", "server");
            server.freq_levels = get_or<int>(sv, "freq_levels", 1);
            server.mem_gb = get_or<double>(sv, "mem_gb", 16.0);
            if (!sv.contains("groups"))
                throw config_error("config: 'cluster.servers[].groups' is required");
            for (const auto& group : sv.at("groups")) {
                const auto cls = get_or<std::string>(group, "core_class", "");
                const auto count = get_or<int>(group, "count", 1);
                const auto idx = cluster.core_class_index(cls);
                for (int i = 0; i < count; ++i) server.cores.push_back(idx);
            }
            const int replicas = get_or<int>(sv, "count", 1);
            for (int rep = 0; rep < replicas; ++rep) {
                Server copy = server;
                if (replicas > 1) copy.name = server.name + "#" + std::to_string(rep);
                cluster.servers.push_back(std::move(copy));
            }
        }
        if (cl.contains("profiling_core_class"))
            cluster.profiling_core_class =
                cluster.core_class_index(cl.at("profiling_core_class").get<std::string>());
        cluster.net_gbps = get_or<double>(cl, "net_gbps", 10.0);
        try {
            cluster.validate();
        } catch (const std::invalid_argument& e) {
            throw config_error(std::string("config: 'cluster' invalid: ") + e.what());
        }
        cfg.custom_cluster = std::move(cluster);
    }
    if (j.contains("runtime")) {
        const auto& r = j.at("runtime");
        cfg.runtime.monitor_period =
            get_or<double>(r, "monitor_period", cfg.runtime.monitor_period);
        cfg.runtime.violation_threshold =
            get_or<double>(r, "violation_threshold", cfg.runtime.violation_threshold);
        cfg.runtime.candidate_cap =
            get_or<std::size_t>(r, "candidate_cap", cfg.runtime.candidate_cap);
        cfg.runtime.tradeoff.amortization_horizon =
            get_or<double>(r, "amortization_horizon", cfg.runtime.tradeoff.amortization_horizon);
        cfg.runtime.rerun_sgd2_on_correction =
            get_or<bool>(r, "rerun_sgd2_on_correction", cfg.runtime.rerun_sgd2_on_correction);
        cfg.runtime.correction_cooldown =
            get_or<double>(r, "correction_cooldown", cfg.runtime.correction_cooldown);
        if (cfg.runtime.monitor_period <= 0.0)
            throw config_error("config: 'runtime.monitor_period' must be > 0");
        if (cfg.runtime.violation_threshold <= 0.0 || cfg.runtime.violation_threshold >= 1.0)
            throw config_error("config: 'runtime.violation_threshold' must be in (0, 1)");
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

Cluster make_scenario_cluster(const ExperimentConfig& config) {
    if (config.custom_cluster) return *config.custom_cluster;
    if (config.scenario == "cmp")
        return make_cmp_cluster(config.freq_levels == 0 ? 1 : config.freq_levels);
    const int levels = config.freq_levels != 0          ? config.freq_levels
                       : config.scenario == "cluster_dvfs" ? 20
                                                           : 1;
    return make_table_cluster(config.heterogeneity_degree, levels, config.total_servers);
}

namespace {

Cluster scenario_cluster_at_degree(const ExperimentConfig& config, int degree) {
    ExperimentConfig c = config;
    c.heterogeneity_degree = degree;
    c.custom_cluster.reset(); // the sweep rebuilds the inventory per degree
    if (c.scenario == "cmp") c.scenario = "cluster"; // the sweep varies servers
    return make_scenario_cluster(c);
}

EpisodeResult run_episode_on(const ExperimentConfig& config, const Cluster& cluster,
                             const std::string& scheduler, std::size_t mix_id,
                             std::uint64_t seed) {
    const std::uint64_t mix_seed = Rng::derive(seed, 0x300 + mix_id);
    World world(cluster, mix_seed);
    const auto mix = generate_mix(config.apps_per_mix, mix_seed, cluster, config.mix);
    SchedulerConfig rc = config.runtime;
    rc.policy = parse_policy(scheduler);
    rc.seed = mix_seed;
    return run_episode(mix, world, rc, config.episode_duration);
}

void write_file(const std::string& dir, const std::string& name, const std::string& body,
                std::vector<std::string>& files) {
    std::filesystem::create_directories(dir);
    const auto path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write output file " + path);
    out << body;
    files.push_back(path);
}

} // namespace

EpisodeResult run_one_episode(const ExperimentConfig& config, const std::string& scheduler,
                              std::size_t mix_id, std::uint64_t seed) {
    return run_episode_on(config, make_scenario_cluster(config), scheduler, mix_id, seed);
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
    config.validate();
    const Cluster cluster = make_scenario_cluster(config);

    ExperimentOutput out;
    std::map<std::pair<std::size_t, std::uint64_t>, double> greedy_gmean;

    // Greedy runs first on every (mix, seed): it is the normalization basis.
    for (std::size_t mix = 0; mix < config.mix_count; ++mix)
        for (auto seed : config.seeds) {
            const auto result = run_episode_on(config, cluster, "greedy", mix, seed);
            greedy_gmean[{mix, seed}] = result.final_gmean;
            ResultRow row;
            row.mix_id = mix;
            row.seed = seed;
            row.scheduler = "greedy";
            row.gmean = result.final_gmean;
            row.norm_vs_greedy = 1.0;
            row.decision_time = result.decision_sim_seconds;
            row.migration_time = result.migration_sim_seconds;
            row.corrections = result.corrections;
            row.migrations = result.migrations;
            row.violations = result.violations;
            row.rejected = result.rejected;
            out.rows.push_back(std::move(row));
        }

    for (const auto& scheduler : config.schedulers) {
        if (scheduler == "greedy") continue; // already run
        for (std::size_t mix = 0; mix < config.mix_count; ++mix)
            for (auto seed : config.seeds) {
                const auto result = run_episode_on(config, cluster, scheduler, mix, seed);
                ResultRow row;
                row.mix_id = mix;
                row.seed = seed;
                row.scheduler = scheduler;
                row.gmean = result.final_gmean;
                const double base = greedy_gmean.at({mix, seed});
                row.norm_vs_greedy = base > 0.0 ? result.final_gmean / base : 0.0;
                row.decision_time = result.decision_sim_seconds;
                row.migration_time = result.migration_sim_seconds;
                row.corrections = result.corrections;
                row.migrations = result.migrations;
                row.violations = result.violations;
                row.rejected = result.rejected;
                out.rows.push_back(std::move(row));
            }
    }

    // Drop greedy rows when greedy was not requested: it only served as base.
    const bool greedy_requested =
        std::find(config.schedulers.begin(), config.schedulers.end(), "greedy") !=
        config.schedulers.end();
    if (!greedy_requested) {
        out.rows.erase(std::remove_if(out.rows.begin(), out.rows.end(),
                                      [](const ResultRow& r) { return r.scheduler == "greedy"; }),
                       out.rows.end());
    }

    std::sort(out.rows.begin(), out.rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tie(a.scheduler, a.mix_id, a.seed) < std::tie(b.scheduler, b.mix_id, b.seed);
    });

    std::ostringstream results;
    results << "mix_id,seed,scheduler,gmean,norm_vs_greedy,decision_time,migration_time,"
               "corrections,migrations,violations,rejected\n";
    for (const auto& r : out.rows) {
        results << r.mix_id << "," << r.seed << "," << r.scheduler << ","
                << format_double(r.gmean) << "," << format_double(r.norm_vs_greedy) << ","
                << format_double(r.decision_time) << "," << format_double(r.migration_time)
                << "," << r.corrections << "," << r.migrations << "," << r.violations << ","
                << r.rejected << "\n";
    }

    std::ostringstream summary;
    summary << "scheduler,mean_gmean,mean_norm_vs_greedy,mean_decision_time,"
               "mean_migration_time,total_corrections,total_migrations\n";
    std::vector<std::string> order;
    for (const auto& r : out.rows)
        if (std::find(order.begin(), order.end(), r.scheduler) == order.end())
            order.push_back(r.scheduler);
    for (const auto& name : order) {
        double g = 0, n = 0, d = 0, m = 0;
        std::size_t corr = 0, migr = 0, count = 0;
        for (const auto& r : out.rows) {
            if (r.scheduler != name) continue;
            g += r.gmean;
            n += r.norm_vs_greedy;
            d += r.decision_time;
            m += r.migration_time;
            corr += r.corrections;
            migr += r.migrations;
            ++count;
        }
        const auto c = static_cast<double>(count);
        summary << name << "," << format_double(g / c) << "," << format_double(n / c) << ","
                << format_double(d / c) << "," << format_double(m / c) << "," << corr << ","
                << migr << "\n";
    }

    // Sorted normalized series per scheduler (worst to best mix).
    std::ostringstream curve;
    curve << "scheduler,rank,norm_vs_greedy\n";
    for (const auto& name : order) {
        std::vector<double> series;
        for (const auto& r : out.rows)
            if (r.scheduler == name) series.push_back(r.norm_vs_greedy);
        std::sort(series.begin(), series.end());
        for (std::size_t i = 0; i < series.size(); ++i)
            curve << name << "," << i << "," << format_double(series[i]) << "\n";
    }

    write_file(config.out_dir, "results.csv", results.str(), out.files_written);
    write_file(config.out_dir, "summary.csv", summary.str(), out.files_written);
    write_file(config.out_dir, "normalized_curve.csv", curve.str(), out.files_written);
    return out;
}

DensityOutput run_density_sweep(const ExperimentConfig& config) {
    config.validate();
    const Cluster cluster = make_scenario_cluster(config);

    DensityOutput out;
    for (std::size_t runs : config.profiling_runs) {
        double total = 0.0;
        for (std::size_t mix_id = 0; mix_id < config.mix_count; ++mix_id) {
            const std::uint64_t seed = Rng::derive(config.seeds.front(), 0x77D + mix_id);
            World world(cluster, seed);
            const auto mix = generate_mix(config.apps_per_mix, seed, cluster, config.mix);

            PipelineConfig pc = config.runtime.pipeline;
            pc.seed = seed;
            pc.profiling_runs = runs;
            StagedPipeline pipeline(pc, cluster);
            for (const auto& spec : mix) {
                world.add_app(spec);
                pipeline.attach_app(spec.id);
                pipeline.profile_reference(spec.id, world, runs);
            }
            pipeline.run_sgd1();

            // Error against the station oracle over withheld reference cells,
            // in units of the app's isolation throughput (deep-contention
            // cells sit near zero and would dominate a truth-relative ratio).
            double err_sum = 0.0;
            std::size_t err_n = 0;
            const auto& matrix = pipeline.matrix();
            for (const auto& spec : mix) {
                const auto row = pipeline.row_of(spec.id);
                const double iso_truth = world.station_truth(spec, nullptr);
                if (iso_truth <= 0.0) continue;
                for (std::size_t col = 0; col < matrix.reference_width(); ++col) {
                    if (matrix.is_observed(*row, col)) continue;
                    const auto& kind = matrix.column(col);
                    double truth;
                    if (kind.tag == ColumnKind::Tag::isolation) {
                        truth = world.station_truth(spec, nullptr);
                    } else {
                        const auto kernel =
                            make_kernel_app(kind.kernel_id, kind.intensity_level, cluster);
                        truth = world.station_truth(spec, &kernel);
                    }
                    err_sum += std::abs(pipeline.estimate(*row, col) - truth) / iso_truth;
                    ++err_n;
                }
            }
            const double mix_error = err_n > 0 ? err_sum / static_cast<double>(err_n) : 0.0;
            out.rows.push_back({runs, mix_id, mix_error});
            total += mix_error;

            if (config.write_matrices) {
                std::ostringstream body;
                matrix.save(body);
                std::ostringstream name;
                name << "matrix_runs" << runs << "_mix" << mix_id << ".txt";
                write_file(config.out_dir, name.str(), body.str(), out.files_written);
            }
        }
        out.mean_error_by_runs.push_back(total / static_cast<double>(config.mix_count));
    }

    std::ostringstream csv;
    csv << "runs,mix_id,mean_error\n";
    for (const auto& r : out.rows)
        csv << r.runs << "," << r.mix_id << "," << format_double(r.mean_error) << "\n";
    std::ostringstream summary;
    summary << "runs,mean_error\n";
    for (std::size_t i = 0; i < config.profiling_runs.size(); ++i)
        summary << config.profiling_runs[i] << ","
                << format_double(out.mean_error_by_runs[i]) << "\n";
    write_file(config.out_dir, "density.csv", csv.str(), out.files_written);
    write_file(config.out_dir, "density_summary.csv", summary.str(), out.files_written);
    return out;
}

HeterogeneityOutput run_heterogeneity_sweep(const ExperimentConfig& config) {
    config.validate();
    HeterogeneityOutput out;
    for (int degree : config.degrees) {
        const Cluster cluster = scenario_cluster_at_degree(config, degree);
        double total = 0.0;
        for (std::size_t mix = 0; mix < config.mix_count; ++mix) {
            const auto seed = config.seeds.front();
            const auto staged = run_episode_on(config, cluster, "staged", mix, seed);
            const auto greedy = run_episode_on(config, cluster, "greedy", mix, seed);
            HeterogeneityRow row;
            row.degree = degree;
            row.mix_id = mix;
            row.staged_gmean = staged.final_gmean;
            row.greedy_gmean = greedy.final_gmean;
            row.improvement =
                greedy.final_gmean > 0.0 ? staged.final_gmean / greedy.final_gmean - 1.0 : 0.0;
            total += row.improvement;
            out.rows.push_back(row);
        }
        out.mean_improvement_by_degree.push_back(total /
                                                 static_cast<double>(config.mix_count));
    }

    std::ostringstream csv;
    csv << "degree,mix_id,staged_gmean,greedy_gmean,improvement\n";
    for (const auto& r : out.rows)
        csv << r.degree << "," << r.mix_id << "," << format_double(r.staged_gmean) << ","
            << format_double(r.greedy_gmean) << "," << format_double(r.improvement) << "\n";
    std::ostringstream summary;
    summary << "degree,mean_improvement\n";
    for (std::size_t i = 0; i < config.degrees.size(); ++i)
        summary << config.degrees[i] << ","
                << format_double(out.mean_improvement_by_degree[i]) << "\n";
    write_file(config.out_dir, "heterogeneity.csv", csv.str(), out.files_written);
    write_file(config.out_dir, "heterogeneity_summary.csv", summary.str(), out.files_written);
    return out;
}

} // namespace latsched
