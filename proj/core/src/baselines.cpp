#include "latsched/baselines.hpp"

#include "latsched/errors.hpp"

#include <stdexcept>

namespace latsched {

SchedulerPolicy parse_policy(const std::string& name) {
    if (name == "staged") return SchedulerPolicy::staged;
    if (name == "staged_static") return SchedulerPolicy::staged_static;
    if (name == "greedy") return SchedulerPolicy::greedy;
    if (name == "smallest_first") return SchedulerPolicy::smallest_first;
    if (name == "hier_independent") return SchedulerPolicy::hier_independent;
    throw config_error("unknown scheduler policy: " + name);
}

std::string policy_name(SchedulerPolicy policy) {
    switch (policy) {
    case SchedulerPolicy::staged: return "staged";
    case SchedulerPolicy::staged_static: return "staged_static";
    case SchedulerPolicy::greedy: return "greedy";
    case SchedulerPolicy::smallest_first: return "smallest_first";
    case SchedulerPolicy::hier_independent: return "hier_independent";
    }
    return "unknown";
}

Slot greedy_place(const ClusterState& state) {
    const auto slot = greedy_slot(state);
    if (!slot) throw infeasible_error("greedy_place: no free slot");
    return *slot;
}

Slot smallest_first_place(const ClusterState& state) {
    const auto slot = smallest_first_slot(state);
    if (!slot) throw infeasible_error("smallest_first_place: no free slot");
    return *slot;
}

PlacementMapping hier_independent_place(AppId app, const ClusterState& state,
                                        const ModelEstimateProvider& estimates) {
    // Server tier: identical to the tiered stage 1.
    std::optional<std::size_t> best_server;
    double best_estimate = -1.0;
    for (std::size_t sv = 0; sv < state.cluster->servers.size(); ++sv) {
        if (!state.server_has_capacity(sv)) continue;
        const auto& srv = state.cluster->servers[sv];
        double server_best = -1.0;
        for (std::size_t c = 0; c < srv.cores.size(); ++c) {
            if (state.free_threads(sv, c) <= 0) continue;
            PlacementMapping trial{state.residents};
            trial.assignments[app] = Slot{sv, c, srv.freq_levels};
            server_best = std::max(server_best, estimates.mapping_estimate(app, trial));
        }
        if (server_best > best_estimate + 1e-15) {
            best_estimate = server_best;
            best_server = sv;
        }
    }
    if (!best_server) throw infeasible_error("hier_independent_place: no server with capacity");

    // Core tier: isolation-only argmax, blind to co-runners.
    const auto& srv = state.cluster->servers[*best_server];
    std::optional<Slot> best_slot;
    double best_iso = -1.0;
    for (std::size_t c = 0; c < srv.cores.size(); ++c) {
        if (state.free_threads(*best_server, c) <= 0) continue;
        for (int lvl = 1; lvl <= srv.freq_levels; ++lvl) {
            const Slot slot{*best_server, c, lvl};
            const double iso = estimates.isolation_only_estimate(app, slot);
            if (iso > best_iso + 1e-15) {
                best_iso = iso;
                best_slot = slot;
            }
        }
    }
    PlacementMapping mapping{state.residents};
    mapping.assignments[app] = *best_slot;
    return mapping;
}

} // namespace latsched
