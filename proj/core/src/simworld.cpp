#include "latsched/simworld.hpp"

#include "latsched/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latsched {

namespace {

constexpr double kDegradationFloor = 0.05;
constexpr double kContainerSetupSeconds = 0.5;
constexpr double kContextSwitchSeconds = 0.01;

double hash01(std::uint64_t seed, std::uint64_t key) {
    Rng r(Rng::derive(seed, key));
    return r.uniform();
}

} // namespace

std::size_t Cluster::core_class_index(const std::string& name) const {
    for (std::size_t i = 0; i < core_classes.size(); ++i)
        if (core_classes[i].name == name) return i;
    throw std::invalid_argument("unknown core class: " + name);
}

double Cluster::level_ghz(std::size_t core_class_idx, int freq_levels, int level) const {
    const auto& cc = core_classes.at(core_class_idx);
    if (level < 1 || level > freq_levels)
        throw std::invalid_argument("frequency level out of range");
    if (freq_levels == 1) return cc.nominal_ghz;
    const double step = (cc.nominal_ghz - cc.min_ghz) / static_cast<double>(freq_levels - 1);
    return cc.min_ghz + step * static_cast<double>(level - 1);
}

void Cluster::validate() const {
    if (core_classes.empty()) throw std::invalid_argument("cluster has no core classes");
    if (servers.empty()) throw std::invalid_argument("cluster has no servers");
    for (const auto& cc : core_classes) {
        if (cc.nominal_ghz < cc.min_ghz)
            throw std::invalid_argument("core class " + cc.name + ": nominal below min GHz");
        if (cc.smt_threads < 1)
            throw std::invalid_argument("core class " + cc.name + ": smt_threads < 1");
    }
    for (const auto& s : servers) {
        if (s.cores.empty()) throw std::invalid_argument("server " + s.name + " has no cores");
        if (s.freq_levels < 1 || s.freq_levels > 20)
            throw std::invalid_argument("server " + s.name + ": freq_levels must be 1..20");
        for (auto c : s.cores)
            if (c >= core_classes.size())
                throw std::invalid_argument("server " + s.name + ": bad core class index");
    }
    if (profiling_core_class >= core_classes.size())
        throw std::invalid_argument("profiling_core_class out of range");
}

AppSpec make_kernel_app(std::size_t kernel_id, int intensity_level, const Cluster& cluster) {
    if (kernel_id >= kResourceDims)
        throw std::invalid_argument("kernel_id out of range");
    if (intensity_level < 1 || intensity_level > 10)
        throw std::invalid_argument("intensity_level must be 1..10");
    AppSpec spec;
    spec.name = "kernel" + std::to_string(kernel_id) + "@" + std::to_string(intensity_level * 10);
    spec.kind = AppKind::best_effort;
    spec.stateless = true;
    spec.state_bytes = 50e6;
    spec.base_throughput.assign(cluster.core_classes.size(), 1.0);
    spec.freq_sensitivity = 0.0;
    spec.sensitivity.fill(0.0);
    spec.pressure.fill(0.0);
    spec.pressure[kernel_id] = static_cast<double>(intensity_level) / 10.0;
    return spec;
}

std::vector<AppSpec> generate_mix(std::size_t n_apps, std::uint64_t seed,
                                  const Cluster& cluster, const MixConfig& config) {
    if (n_apps < 1) throw std::invalid_argument("generate_mix requires n_apps >= 1");
    Rng rng(Rng::derive(seed, 0xA11CE));

    const auto n_lc = static_cast<std::size_t>(
        std::llround(config.lc_fraction * static_cast<double>(n_apps)));

    // Reference speed for the per-class base table; the profiling platform
    // at nominal frequency defines 1.0x.
    const double ref_speed =
        cluster.core_classes.at(cluster.profiling_core_class).effective_speed();

    auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };

    std::vector<AppSpec> mix;
    mix.reserve(n_apps);
    for (std::size_t i = 0; i < n_apps; ++i) {
        AppSpec spec;
        spec.id = static_cast<AppId>(i);
        const bool lc = i < n_lc;
        spec.kind = lc ? AppKind::latency_critical : AppKind::batch;
        spec.name = (lc ? "lc" : "batch") + std::to_string(i);

        // Sensitivity = per-app global intensity x an archetype pattern plus
        // per-dimension noise. The shared intensity is what a couple of
        // kernel co-runs can reveal about the dimensions never profiled.
        static constexpr ResourceVector kLcPattern = {0.75, 0.55, 0.25, 0.60,
                                                      0.45, 0.08, 0.08, 0.40};
        static constexpr ResourceVector kBatchPatterns[5] = {
            {0.85, 0.20, 0.10, 0.15, 0.05, 0.05, 0.05, 0.10}, // compute bound
            {0.30, 0.80, 0.20, 0.35, 0.05, 0.05, 0.05, 0.75}, // cache heavy
            {0.35, 0.45, 0.50, 0.85, 0.10, 0.05, 0.10, 0.30}, // memory bandwidth
            {0.20, 0.15, 0.20, 0.25, 0.30, 0.55, 0.80, 0.10}, // storage / io
            {0.45, 0.40, 0.30, 0.45, 0.25, 0.15, 0.20, 0.30}, // balanced
        };
        const ResourceVector& pattern =
            lc ? kLcPattern : kBatchPatterns[rng.uniform_index(5)];
        const double intensity = rng.uniform(0.30, 1.25);

        ResourceVector s{};
        for (std::size_t r = 0; r < kResourceDims; ++r) {
            const double noise = rng.uniform(-0.06, 0.06);
            s[r] = clamp01((intensity * pattern[r] + noise) * config.interference_scale);
        }
        spec.sensitivity = s;

        // Exerted pressure tracks sensitivity: workloads that depend on a
        // resource are also the ones loading it.
        for (std::size_t r = 0; r < kResourceDims; ++r)
            spec.pressure[r] = clamp01(s[r] * rng.uniform(0.7, 1.05) + rng.uniform(0.0, 0.03));

        // Frequency scaling follows compute-boundness.
        spec.freq_sensitivity = s[kDimCpu];

        const double peak = rng.uniform(config.peak_min, config.peak_max);
        spec.base_throughput.resize(cluster.core_classes.size());
        for (std::size_t c = 0; c < cluster.core_classes.size(); ++c) {
            const double speed = cluster.core_classes[c].effective_speed();
            spec.base_throughput[c] =
                peak * std::pow(speed / ref_speed, spec.freq_sensitivity);
        }
        spec.qos_target = peak * rng.uniform(0.6, 0.8);

        const double stateless_prob =
            lc ? config.stateless_lc_prob : config.stateless_batch_prob;
        spec.stateless = rng.uniform() < stateless_prob;
        spec.state_bytes = spec.stateless ? rng.uniform(100e6, 400e6) : rng.uniform(1e9, 8e9);

        if (lc) {
            spec.load = rng.uniform() < 0.5 ? LoadTraceKind::diurnal : LoadTraceKind::exponential;
            spec.load_period = rng.uniform(40.0, 120.0);
        } else {
            spec.load = LoadTraceKind::uniform;
        }

        if (rng.uniform() < config.phase_change_prob) {
            PhaseChange phase;
            phase.at_time = rng.uniform(config.phase_time_min, config.phase_time_max);
            phase.sensitivity = spec.sensitivity;
            phase.pressure = spec.pressure;
            // Shift two random dimensions; behavior change, not a new app.
            for (int n = 0; n < 2; ++n) {
                const auto r = static_cast<std::size_t>(rng.uniform_index(kResourceDims));
                phase.sensitivity[r] = clamp01(rng.uniform(0.0, 1.0) * config.interference_scale);
                phase.pressure[r] = clamp01(phase.sensitivity[r] * rng.uniform(0.6, 1.1));
            }
            spec.phases.push_back(phase);
        }
        mix.push_back(std::move(spec));
    }
    return mix;
}

World::World(Cluster cluster, std::uint64_t seed, double noise_sigma)
    : cluster_(std::move(cluster)), seed_(seed), noise_sigma_(noise_sigma) {
    cluster_.validate();
}

void World::add_app(const AppSpec& spec) {
    if (spec.base_throughput.size() != cluster_.core_classes.size())
        throw std::invalid_argument("app base_throughput table does not match core classes");
    if (!apps_.emplace(spec.id, spec).second)
        throw conflict_error("app id already registered: " + std::to_string(spec.id));
}

const AppSpec& World::app(AppId id) const {
    auto it = apps_.find(id);
    if (it == apps_.end()) throw std::out_of_range("unknown app id");
    return it->second;
}

std::vector<AppId> World::known_apps() const {
    std::vector<AppId> ids;
    ids.reserve(apps_.size());
    for (const auto& [id, _] : apps_) ids.push_back(id);
    return ids;
}

int World::free_threads(std::size_t server, std::size_t core) const {
    const auto& srv = cluster_.servers.at(server);
    const auto& cc = cluster_.core_classes.at(srv.cores.at(core));
    int used = 0;
    for (const auto& [_, slot] : assignments_)
        if (slot.server == server && slot.core == core) ++used;
    return cc.smt_threads - used;
}

bool World::slot_feasible(const Slot& slot, std::optional<AppId> ignore) const {
    if (slot.server >= cluster_.servers.size()) return false;
    const auto& srv = cluster_.servers[slot.server];
    if (slot.core >= srv.cores.size()) return false;
    if (slot.freq_level < 1 || slot.freq_level > srv.freq_levels) return false;
    const auto& cc = cluster_.core_classes[srv.cores[slot.core]];
    int used = 0;
    for (const auto& [id, s] : assignments_) {
        if (ignore && id == *ignore) continue;
        if (s.server == slot.server && s.core == slot.core) ++used;
    }
    return used < cc.smt_threads;
}

std::vector<Slot> World::free_slots() const {
    std::vector<Slot> slots;
    for (std::size_t sv = 0; sv < cluster_.servers.size(); ++sv) {
        const auto& srv = cluster_.servers[sv];
        for (std::size_t c = 0; c < srv.cores.size(); ++c) {
            if (free_threads(sv, c) <= 0) continue;
            for (int lvl = 1; lvl <= srv.freq_levels; ++lvl)
                slots.push_back(Slot{sv, c, lvl});
        }
    }
    return slots;
}

void World::assign(AppId id, const Slot& slot) {
    if (!apps_.count(id)) throw std::out_of_range("unknown app id");
    if (!slot_feasible(slot, id)) throw infeasible_error("slot not feasible");
    assignments_[id] = slot;
    assigned_since_.try_emplace(id, clock_);
}

void World::unassign(AppId id) { assignments_.erase(id); }

void World::remove_app(AppId id) {
    if (assigned_since_.count(id))
        finished_[id] = FinishedApp{accumulated_work(id), assigned_since_.at(id), clock_};
    assignments_.erase(id);
    throttle_.erase(id);
    unavailable_until_.erase(id);
    apps_.erase(id);
    work_.erase(id);
    assigned_since_.erase(id);
}

std::optional<Slot> World::slot_of(AppId id) const {
    auto it = assignments_.find(id);
    if (it == assignments_.end()) return std::nullopt;
    return it->second;
}

void World::set_throttle(AppId id, double factor) {
    throttle_[id] = std::clamp(factor, 0.0, 1.0);
}

double World::throttle(AppId id) const {
    auto it = throttle_.find(id);
    return it == throttle_.end() ? 1.0 : it->second;
}

void World::set_unavailable_until(AppId id, double t) {
    unavailable_until_[id] = std::max(t, unavailable_until(id));
}

double World::unavailable_until(AppId id) const {
    auto it = unavailable_until_.find(id);
    return it == unavailable_until_.end() ? 0.0 : it->second;
}

double World::load_factor(AppId id, double t) const {
    const auto& spec = app(id);
    switch (spec.load) {
    case LoadTraceKind::uniform:
        return 1.0;
    case LoadTraceKind::diurnal: {
        const double phase0 = hash01(seed_ ^ spec.id, 0xD1) * 6.283185307179586;
        return 1.0 + 0.5 * std::sin(6.283185307179586 * t / spec.load_period + phase0);
    }
    case LoadTraceKind::exponential: {
        const auto window = static_cast<std::uint64_t>(t / 15.0);
        const double u = std::max(hash01(seed_ ^ spec.id, 0xE0 + window), 1e-12);
        return std::min(3.0, -std::log(u));
    }
    case LoadTraceKind::power_law: {
        const auto window = static_cast<std::uint64_t>(t / 15.0);
        const double u = std::max(hash01(seed_ ^ spec.id, 0xF0 + window), 1e-12);
        return std::min(4.0, 0.5 * std::pow(u, -1.0 / 2.5));
    }
    }
    return 1.0;
}

ResourceVector World::effective_sensitivity(AppId id, double t) const {
    const auto& spec = app(id);
    ResourceVector s = spec.sensitivity;
    for (const auto& phase : spec.phases)
        if (phase.at_time <= t) s = phase.sensitivity;
    return s;
}

ResourceVector World::effective_pressure(AppId id, double t) const {
    const auto& spec = app(id);
    ResourceVector p = spec.pressure;
    for (const auto& phase : spec.phases)
        if (phase.at_time <= t) p = phase.pressure;
    return p;
}

double World::perf_at(AppId id, const Slot& slot, const std::vector<AppId>& co,
                      double t) const {
    const auto& spec = app(id);
    const auto& srv = cluster_.servers.at(slot.server);
    const std::size_t cls = srv.cores.at(slot.core);
    const auto& cc = cluster_.core_classes[cls];
    const double freq = cluster_.level_ghz(cls, srv.freq_levels, slot.freq_level);

    double perf = spec.base_throughput.at(cls) *
                  std::pow(freq / cc.nominal_ghz, spec.freq_sensitivity);

    const ResourceVector s = effective_sensitivity(id, t);
    ResourceVector total_pressure{};
    for (AppId other : co) {
        if (other == id) continue;
        const auto other_slot = slot_of(other);
        if (!other_slot) continue;
        if (other_slot->server != slot.server) continue;
        const ResourceVector p = effective_pressure(other, t);
        const double scale = load_factor(other, t) * throttle(other);
        const bool same_core = other_slot->core == slot.core;
        for (std::size_t r = 0; r < kResourceDims; ++r) {
            if (r == kDimCpu && !same_core) continue; // core-private dimension
            total_pressure[r] += p[r] * scale;
        }
    }
    for (std::size_t r = 0; r < kResourceDims; ++r) {
        const double d = 1.0 - s[r] * std::min(1.0, total_pressure[r]);
        perf *= std::max(kDegradationFloor, d);
    }
    return perf * throttle(id);
}

double World::true_perf(AppId id, const Slot& slot, const std::vector<AppId>& co) const {
    if (!slot_feasible(slot, id)) throw std::invalid_argument("true_perf: infeasible slot");
    return perf_at(id, slot, co, clock_);
}

double World::true_perf_current(AppId id) const {
    const auto slot = slot_of(id);
    if (!slot) throw std::invalid_argument("app is not assigned");
    std::vector<AppId> co;
    for (const auto& [other, s] : assignments_)
        if (other != id && s.server == slot->server) co.push_back(other);
    return perf_at(id, *slot, co, clock_);
}

double World::noise_factor() {
    if (noise_sigma_ <= 0.0) return 1.0;
    Rng rng(Rng::derive(seed_ ^ 0xA0A0A0A0ULL, ++noise_counter_));
    return rng.lognormal_factor(noise_sigma_);
}

std::map<AppId, double> World::advance(double dt) {
    const double t0 = clock_;
    const double t1 = clock_ + dt;
    std::map<AppId, double> rates;
    for (const auto& [id, slot] : assignments_) {
        const double available_from = std::min(std::max(unavailable_until(id), t0), t1);
        const double frac = (t1 - available_from) / dt;
        std::vector<AppId> co;
        for (const auto& [other, s] : assignments_)
            if (other != id && s.server == slot.server) co.push_back(other);
        // Sampled at the interval end so a mid-interval change shows up in
        // the period it happened; fine for 1-2 s monitoring periods.
        const double base = perf_at(id, slot, co, t1);
        const double rate = base * frac;
        rates[id] = rate;
        work_[id] += rate * dt;
    }
    clock_ = t1;
    return rates;
}

std::map<AppId, IntervalSample> World::run_interval(double dt) {
    if (dt <= 0.0) throw std::invalid_argument("run_interval requires dt > 0");
    std::map<AppId, IntervalSample> out;
    for (const auto& [id, rate] : advance(dt)) {
        IntervalSample sample;
        sample.true_perf = rate;
        sample.measured = rate * noise_factor();
        out[id] = sample;
    }
    return out;
}

double World::station_truth(const AppSpec& app, const AppSpec* kernel) const {
    const std::size_t cls = cluster_.profiling_core_class;
    const auto& cc = cluster_.core_classes.at(cls);
    double perf = app.base_throughput.at(cls); // nominal frequency
    if (kernel) {
        // The station co-locates the kernel so every dimension is shared.
        for (std::size_t r = 0; r < kResourceDims; ++r) {
            const double d = 1.0 - app.sensitivity[r] * std::min(1.0, kernel->pressure[r]);
            perf *= std::max(kDegradationFloor, d);
        }
    }
    (void)cc;
    return perf;
}

double World::measure_profile(const AppSpec& app, const AppSpec* kernel, double duration) {
    if (duration <= 0.0) throw std::invalid_argument("profiling duration must be > 0");
    if (station_busy_) throw busy_error("profiling station busy");
    advance(duration); // residents keep running and accruing work
    return station_truth(app, kernel) * noise_factor();
}

double World::accumulated_work(AppId id) const {
    auto it = work_.find(id);
    return it == work_.end() ? 0.0 : it->second;
}

std::optional<double> World::assigned_since(AppId id) const {
    auto it = assigned_since_.find(id);
    if (it == assigned_since_.end()) return std::nullopt;
    return it->second;
}

double World::migration_cost(AppId id, std::size_t src_server, std::size_t dst_server) const {
    if (src_server == dst_server) return kContextSwitchSeconds;
    const auto& spec = app(id);
    const double bytes_per_second = cluster_.net_gbps * 1e9 / 8.0;
    return kContainerSetupSeconds + spec.state_bytes / bytes_per_second;
}

Cluster make_cmp_cluster(int freq_levels) {
    Cluster cluster;
    cluster.core_classes = {
        {"ooo1", 2.4, 1.0, 1, 1.0, "L1 32KB / L2 256KB private"},
        {"ooo2", 2.0, 1.0, 1, 1.0, "L1 32KB / L2 128KB private"},
        {"ooo3", 1.44, 1.0, 1, 0.7, "L1 128KB / L2 12MB shared"},
        {"inorder1", 1.6, 1.0, 1, 0.45, "L1 16KB / L2 128KB private"},
    };
    Server cmp;
    cmp.name = "cmp0";
    cmp.freq_levels = freq_levels;
    cmp.mem_gb = 64.0;
    for (std::size_t cls = 0; cls < 4; ++cls)
        for (int i = 0; i < 4; ++i) cmp.cores.push_back(cls);
    cluster.servers.push_back(std::move(cmp));
    cluster.profiling_core_class = 0;
    cluster.validate();
    return cluster;
}

Cluster make_table_cluster(int heterogeneity_degree, int freq_levels, int total_servers) {
    struct ClassDef {
        CoreClass core;
        int core_count;
        double mem_gb;
    };
    // First four rows follow the heterogeneous 40-server inventory; the rest
    // extend the range from two-socket high-end parts to low-power designs.
    const std::vector<ClassDef> defs = {
        {{"srv1-ooo", 2.0, 1.0, 1, 0.9, "L2 4MB shared"}, 8, 16.0},
        {{"srv2-ooo", 2.3, 1.0, 2, 1.0, "L3 16MB shared"}, 24, 64.0},
        {{"srv3-ooo", 3.1, 1.0, 4, 1.1, "L3 8MB shared"}, 4, 32.0},
        {{"srv4-ooo", 1.8, 1.0, 2, 0.8, "L2 4MB shared"}, 4, 32.0},
        {{"srv5-hi", 2.2, 1.0, 2, 1.15, "L3 55MB shared"}, 22, 128.0},
        {{"srv6-hi", 2.6, 1.0, 2, 1.05, "L3 25MB shared"}, 10, 64.0},
        {{"srv7-arm", 2.0, 1.0, 1, 0.5, "L2 16MB shared"}, 24, 64.0},
        {{"srv8-mid", 2.1, 1.0, 2, 0.95, "L3 12MB shared"}, 12, 48.0},
        {{"srv9-low", 1.5, 1.0, 1, 0.7, "L2 2MB shared"}, 8, 16.0},
        {{"srv10-mid", 2.8, 1.0, 2, 0.9, "L3 10MB shared"}, 6, 32.0},
    };

    std::vector<std::size_t> pick;
    std::vector<int> counts;
    switch (heterogeneity_degree) {
    case 2:
        pick = {1, 3}; // one high-end, one low-end platform
        counts = {total_servers / 2, total_servers - total_servers / 2};
        break;
    case 4: {
        pick = {0, 1, 2, 3};
        // Default 10/10/8/12 split scaled to the requested total.
        const double unit = static_cast<double>(total_servers) / 40.0;
        counts = {static_cast<int>(std::llround(10 * unit)),
                  static_cast<int>(std::llround(10 * unit)),
                  static_cast<int>(std::llround(8 * unit)), 0};
        counts[3] = total_servers - counts[0] - counts[1] - counts[2];
        break;
    }
    case 8:
        pick = {0, 1, 2, 3, 4, 5, 6, 7};
        break;
    case 10:
        pick = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        break;
    default:
        throw std::invalid_argument("heterogeneity_degree must be one of 2, 4, 8, 10");
    }
    if (counts.empty()) {
        counts.assign(pick.size(), total_servers / static_cast<int>(pick.size()));
        int rem = total_servers - counts[0] * static_cast<int>(pick.size());
        for (int i = 0; rem > 0; ++i, --rem) counts[static_cast<std::size_t>(i)] += 1;
    }

    Cluster cluster;
    for (std::size_t i = 0; i < pick.size(); ++i) {
        const auto& def = defs[pick[i]];
        cluster.core_classes.push_back(def.core);
        ServerClass sc;
        sc.name = def.core.name;
        sc.core_class = i;
        sc.core_count = def.core_count;
        sc.mem_gb = def.mem_gb;
        sc.freq_levels = freq_levels;
        sc.count = counts[i];
        cluster.server_classes.push_back(sc);
        for (int k = 0; k < counts[i]; ++k) {
            Server srv;
            srv.name = sc.name + "#" + std::to_string(k);
            srv.freq_levels = freq_levels;
            srv.mem_gb = def.mem_gb;
            srv.cores.assign(static_cast<std::size_t>(def.core_count), i);
            cluster.servers.push_back(std::move(srv));
        }
    }
    // Profile on the most common platform class.
    cluster.profiling_core_class = 0;
    cluster.validate();
    return cluster;
}

} // namespace latsched
