#pragma once

#include "latsched/rng.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace latsched {

/// Shared-resource dimensions of the interference model. Dimension 0 is
/// core-private (SMT siblings contend); all others are server-scoped.
inline constexpr std::size_t kResourceDims = 8;
inline constexpr std::size_t kDimCpu = 0;
inline constexpr std::size_t kDimLlc = 1;
inline constexpr std::size_t kDimMemCapacity = 2;
inline constexpr std::size_t kDimMemBandwidth = 3;
inline constexpr std::size_t kDimNetBandwidth = 4;
inline constexpr std::size_t kDimStorageCapacity = 5;
inline constexpr std::size_t kDimStorageBandwidth = 6;
inline constexpr std::size_t kDimLlcThrash = 7;

using ResourceVector = std::array<double, kResourceDims>;
using AppId = std::uint32_t;

struct CoreClass {
    std::string name;
    double nominal_ghz = 1.0;
    double min_ghz = 1.0; // DVFS floor
    int smt_threads = 1;
    double ipc = 1.0; // microarchitectural weight; in-order designs < 1
    std::string cache_tag;

    /// Single scalar used to order core classes by delivered speed.
    double effective_speed() const { return nominal_ghz * ipc; }
};

struct ServerClass {
    std::string name;
    std::size_t core_class = 0; // index into Cluster::core_classes
    int core_count = 1;
    double mem_gb = 16.0;
    int freq_levels = 1; // uniformly spaced min_ghz..nominal_ghz, <= 20
    int count = 1;       // servers of this class in the cluster
};

struct Server {
    std::string name;
    std::vector<std::size_t> cores; // per-core core-class index
    int freq_levels = 1;
    double mem_gb = 16.0;
};

struct Cluster {
    std::vector<CoreClass> core_classes;
    std::vector<ServerClass> server_classes;
    std::vector<Server> servers;
    std::size_t profiling_core_class = 0; // canonical profiling platform
    double net_gbps = 10.0;

    std::size_t core_class_index(const std::string& name) const;
    /// Frequency in GHz of a 1-based level on the given core class.
    double level_ghz(std::size_t core_class_idx, int freq_levels, int level) const;
    void validate() const;
};

/// A schedulable position: a hardware thread on a core plus a DVFS level.
struct Slot {
    std::size_t server = 0;
    std::size_t core = 0;
    int freq_level = 1; // 1..freq_levels of the server

    auto operator<=>(const Slot&) const = default;
};

enum class AppKind { latency_critical, batch, best_effort };
enum class LoadTraceKind { uniform, exponential, power_law, diurnal };

/// Scheduled change of an application's interference characteristics.
struct PhaseChange {
    double at_time = 0.0;
    ResourceVector sensitivity{};
    ResourceVector pressure{};
};

struct AppSpec {
    AppId id = 0;
    std::string name;
    AppKind kind = AppKind::batch;
    bool stateless = true;
    double state_bytes = 200e6;
    std::vector<double> base_throughput; // per core-class isolated throughput at nominal
    double freq_sensitivity = 1.0;       // phi
    ResourceVector sensitivity{};
    ResourceVector pressure{};
    double qos_target = 0.0;
    LoadTraceKind load = LoadTraceKind::uniform;
    double load_period = 60.0;
    std::vector<PhaseChange> phases;
};

struct MixConfig {
    double lc_fraction = 0.4; // latency-critical : batch ratio 40:60
    double stateless_lc_prob = 0.5;
    double stateless_batch_prob = 0.25;
    double phase_change_prob = 0.35;
    double phase_time_min = 20.0;
    double phase_time_max = 120.0;
    double peak_min = 20.0;
    double peak_max = 100.0;
    double interference_scale = 1.0; // scales sensitivity/pressure priors
};

/// Contentious kernel targeting one resource at intensity level/10.
AppSpec make_kernel_app(std::size_t kernel_id, int intensity_level,
                        const Cluster& cluster);

/// Seed-deterministic 40:60 latency-critical/batch mix with per-kind priors.
std::vector<AppSpec> generate_mix(std::size_t n_apps, std::uint64_t seed,
                                  const Cluster& cluster, const MixConfig& config = {});

struct IntervalSample {
    double true_perf = 0.0; // availability-weighted ground truth
    double measured = 0.0;  // true_perf with multiplicative lognormal noise
};

/// Work record of an app that left the world (terminated).
struct FinishedApp {
    double work = 0.0;
    double start = 0.0;
    double end = 0.0;
};

/// Deterministic discrete-time world: platform inventory, current
/// assignments, the multiplicative interference oracle, and measurement
/// noise. Whole trajectories are a pure function of (config, seed, calls).
class World {
public:
    World(Cluster cluster, std::uint64_t seed, double noise_sigma = 0.01);

    const Cluster& cluster() const { return cluster_; }
    double clock() const { return clock_; }
    double noise_sigma() const { return noise_sigma_; }
    void set_noise_sigma(double sigma) { noise_sigma_ = sigma; }

    void add_app(const AppSpec& spec);
    bool has_app(AppId id) const { return apps_.count(id) != 0; }
    const AppSpec& app(AppId id) const;
    std::vector<AppId> known_apps() const;

    void assign(AppId id, const Slot& slot);
    void unassign(AppId id);
    void remove_app(AppId id); // terminate
    const std::map<AppId, Slot>& assignments() const { return assignments_; }
    std::optional<Slot> slot_of(AppId id) const;

    /// Remaining SMT capacity of (server, core) given current assignments.
    int free_threads(std::size_t server, std::size_t core) const;
    bool slot_feasible(const Slot& slot, std::optional<AppId> ignore = {}) const;
    std::vector<Slot> free_slots() const; // at every available frequency level

    void set_throttle(AppId id, double factor);
    double throttle(AppId id) const;
    /// App produces nothing until this sim-time (migration / switch downtime).
    void set_unavailable_until(AppId id, double t);
    double unavailable_until(AppId id) const;

    /// Ground-truth throughput of `app` on `slot` against the given
    /// co-runners, at the current clock:
    ///   base[class] * (f/nominal)^phi * prod_r max(0.05, 1 - s[r]*min(1, sum p))
    double true_perf(AppId id, const Slot& slot, const std::vector<AppId>& co_runners) const;
    /// As placed now, co-runners from the current assignment table.
    double true_perf_current(AppId id) const;

    /// Advances the clock by dt and samples every assigned app.
    std::map<AppId, IntervalSample> run_interval(double dt);

    /// Profiling station: canonical core class at nominal frequency, with the
    /// optional kernel co-located so that every resource dimension is shared.
    /// Advances the clock by `duration`. Throws busy_error while occupied.
    double measure_profile(const AppSpec& app, const AppSpec* kernel, double duration);
    void set_station_busy(bool busy) { station_busy_ = busy; }

    /// Ground truth the profiling station would measure, noise-free. This is
    /// the per-reference-cell oracle for estimation-error experiments.
    double station_truth(const AppSpec& app, const AppSpec* kernel) const;

    /// Sim-seconds of lost work when moving an app: near-zero within a
    /// server, container setup plus state transfer across servers.
    double migration_cost(AppId id, std::size_t src_server, std::size_t dst_server) const;

    /// Load multiplier of an app at time t (deterministic).
    double load_factor(AppId id, double t) const;
    /// Sensitivity/pressure after phase changes up to time t.
    ResourceVector effective_sensitivity(AppId id, double t) const;
    ResourceVector effective_pressure(AppId id, double t) const;

    /// Total ground-truth work accrued while assigned (integral of true perf
    /// over time, including downtime as zero).
    double accumulated_work(AppId id) const;
    /// Sim-time of the app's first assignment, if any.
    std::optional<double> assigned_since(AppId id) const;
    const std::map<AppId, FinishedApp>& finished() const { return finished_; }

private:
    Cluster cluster_;
    std::map<AppId, AppSpec> apps_;
    std::map<AppId, Slot> assignments_;
    std::map<AppId, double> throttle_;
    std::map<AppId, double> unavailable_until_;
    std::map<AppId, double> work_;
    std::map<AppId, double> assigned_since_;
    std::map<AppId, FinishedApp> finished_;
    double clock_ = 0.0;
    std::uint64_t seed_;
    double noise_sigma_;
    std::uint64_t noise_counter_ = 0;
    bool station_busy_ = false;

    double perf_at(AppId id, const Slot& slot, const std::vector<AppId>& co, double t) const;
    /// Advances the clock, accruing work; returns per-app true average rates.
    std::map<AppId, double> advance(double dt);
    double noise_factor();
};

/// Table-style presets (shipped as JSON config files as well).
Cluster make_cmp_cluster(int freq_levels = 1);
Cluster make_table_cluster(int heterogeneity_degree = 4, int freq_levels = 1,
                           int total_servers = 40);

} // namespace latsched
