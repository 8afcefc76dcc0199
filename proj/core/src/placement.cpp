#include "latsched/placement.hpp"

#include "latsched/errors.hpp"
#include "latsched/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace latsched {

std::string canonical_mapping_id(const std::map<AppId, Slot>& assignments) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [app, slot] : assignments) { // std::map iterates in app order
        if (!first) os << "+";
        first = false;
        os << "a" << app << ":s" << slot.server << "c" << slot.core << "f" << slot.freq_level;
    }
    return os.str();
}

std::string PlacementMapping::mapping_id() const { return canonical_mapping_id(assignments); }

std::map<AppId, Slot> parse_mapping_id(const std::string& mapping_id) {
    std::map<AppId, Slot> out;
    std::size_t pos = 0;
    while (pos < mapping_id.size()) {
        std::size_t end = mapping_id.find('+', pos);
        if (end == std::string::npos) end = mapping_id.size();
        const std::string part = mapping_id.substr(pos, end - pos);
        AppId app;
        unsigned long server, core;
        int level;
        if (std::sscanf(part.c_str(), "a%u:s%luc%luf%d", &app, &server, &core, &level) != 4)
            throw std::invalid_argument("malformed mapping id: " + mapping_id);
        out[app] = Slot{server, core, level};
        pos = end + 1;
    }
    return out;
}

int ClusterState::free_threads(std::size_t server, std::size_t core) const {
    const auto& srv = cluster->servers.at(server);
    const auto& cc = cluster->core_classes.at(srv.cores.at(core));
    int used = 0;
    for (const auto& [_, slot] : residents)
        if (slot.server == server && slot.core == core) ++used;
    return cc.smt_threads - used;
}

bool ClusterState::server_has_capacity(std::size_t server) const {
    const auto& srv = cluster->servers.at(server);
    for (std::size_t c = 0; c < srv.cores.size(); ++c)
        if (free_threads(server, c) > 0) return true;
    return false;
}

namespace {

struct FreeCore {
    std::size_t server;
    std::size_t core;
    int capacity;
    int freq_levels;
};

std::vector<FreeCore> free_cores(const ClusterState& state) {
    std::vector<FreeCore> out;
    for (std::size_t sv = 0; sv < state.cluster->servers.size(); ++sv) {
        const auto& srv = state.cluster->servers[sv];
        for (std::size_t c = 0; c < srv.cores.size(); ++c) {
            const int cap = state.free_threads(sv, c);
            if (cap > 0) out.push_back({sv, c, cap, srv.freq_levels});
        }
    }
    return out;
}

// Enumerates the full assignment space depth-first up to `limit` mappings.
// Returns nullopt when the space is larger than the limit.
std::optional<std::vector<PlacementMapping>> enumerate_exhaustive(
    const std::vector<AppId>& apps, const ClusterState& state, std::size_t limit) {
    std::vector<PlacementMapping> out;
    std::map<AppId, Slot> partial = state.residents;
    std::map<std::pair<std::size_t, std::size_t>, int> extra_load;

    std::function<bool(std::size_t)> visit = [&](std::size_t idx) -> bool {
        if (idx == apps.size()) {
            if (out.size() >= limit) return false;
            out.push_back(PlacementMapping{partial});
            return true;
        }
        for (std::size_t sv = 0; sv < state.cluster->servers.size(); ++sv) {
            const auto& srv = state.cluster->servers[sv];
            for (std::size_t c = 0; c < srv.cores.size(); ++c) {
                const int cap = state.free_threads(sv, c) - extra_load[{sv, c}];
                if (cap <= 0) continue;
                for (int lvl = 1; lvl <= srv.freq_levels; ++lvl) {
                    partial[apps[idx]] = Slot{sv, c, lvl};
                    extra_load[{sv, c}] += 1;
                    const bool ok = visit(idx + 1);
                    extra_load[{sv, c}] -= 1;
                    partial.erase(apps[idx]);
                    if (!ok) return false;
                }
            }
        }
        return true;
    };
    if (!visit(0)) return std::nullopt;
    return out;
}

// Sequentially fills slots by a preference order; used for the greedy and
// smallest-first seed candidates.
std::optional<PlacementMapping> ordered_fill(
    const std::vector<AppId>& apps, const ClusterState& state,
    const std::function<std::optional<Slot>(const ClusterState&)>& pick) {
    ClusterState scratch = state;
    std::map<AppId, Slot> placed = state.residents;
    for (AppId app : apps) {
        auto slot = pick(scratch);
        if (!slot) return std::nullopt;
        placed[app] = *slot;
        scratch.residents[app] = *slot;
    }
    return PlacementMapping{placed};
}

} // namespace

std::optional<Slot> greedy_slot(const ClusterState& state) {
    std::optional<Slot> best;
    double best_speed = -1.0;
    for (const auto& fc : free_cores(state)) {
        const auto& srv = state.cluster->servers[fc.server];
        const auto& cc = state.cluster->core_classes[srv.cores[fc.core]];
        // Fastest class at the highest level; ties resolve to the lowest slot id.
        if (cc.effective_speed() > best_speed + 1e-12) {
            best_speed = cc.effective_speed();
            best = Slot{fc.server, fc.core, fc.freq_levels};
        }
    }
    return best;
}

std::optional<Slot> smallest_first_slot(const ClusterState& state) {
    std::optional<Slot> best;
    double best_speed = 0.0;
    for (const auto& fc : free_cores(state)) {
        const auto& srv = state.cluster->servers[fc.server];
        const auto& cc = state.cluster->core_classes[srv.cores[fc.core]];
        if (!best || cc.effective_speed() < best_speed - 1e-12) {
            best_speed = cc.effective_speed();
            best = Slot{fc.server, fc.core, 1}; // minimum frequency level
        }
    }
    return best;
}

std::vector<PlacementMapping> enumerate_candidates(const std::vector<AppId>& apps,
                                                   const ClusterState& state,
                                                   std::size_t cap, std::uint64_t seed) {
    if (cap < 1) throw std::invalid_argument("enumerate_candidates requires cap >= 1");
    if (apps.empty()) throw std::invalid_argument("enumerate_candidates requires apps");

    int total_free = 0;
    for (const auto& fc : free_cores(state)) total_free += fc.capacity;
    if (static_cast<std::size_t>(total_free) < apps.size())
        throw infeasible_error("cluster capacity exceeded");

    if (auto all = enumerate_exhaustive(apps, state, cap)) return std::move(*all);

    // Space larger than cap: sample, always keeping the baseline seeds.
    std::vector<PlacementMapping> out;
    std::set<std::string> seen;
    auto add = [&](const PlacementMapping& m) {
        if (seen.insert(m.mapping_id()).second) out.push_back(m);
    };
    if (auto g = ordered_fill(apps, state, greedy_slot)) add(*g);
    if (auto s = ordered_fill(apps, state, smallest_first_slot)) add(*s);

    Rng rng(Rng::derive(seed, 0xCA2D1D));
    const std::size_t max_attempts = cap * 64;
    for (std::size_t attempt = 0; attempt < max_attempts && out.size() < cap; ++attempt) {
        std::map<AppId, Slot> placed = state.residents;
        std::map<std::pair<std::size_t, std::size_t>, int> extra;
        bool ok = true;
        for (AppId app : apps) {
            std::vector<Slot> options;
            for (const auto& fc : free_cores(state)) {
                if (fc.capacity - extra[{fc.server, fc.core}] <= 0) continue;
                for (int lvl = 1; lvl <= fc.freq_levels; ++lvl)
                    options.push_back(Slot{fc.server, fc.core, lvl});
            }
            if (options.empty()) {
                ok = false;
                break;
            }
            const auto& slot = options[rng.uniform_index(options.size())];
            placed[app] = slot;
            extra[{slot.server, slot.core}] += 1;
        }
        if (ok) add(PlacementMapping{placed});
    }
    if (out.empty()) throw infeasible_error("no feasible assignment found");
    return out;
}

PlacementScore score_column(const std::string& mapping_id,
                            const std::map<AppId, double>& per_app_estimates) {
    if (per_app_estimates.empty())
        throw std::invalid_argument("score_column requires at least one estimate");
    PlacementScore score;
    score.mapping_id = mapping_id;
    double log_sum = 0.0;
    for (const auto& [app, value] : per_app_estimates) {
        if (!std::isfinite(value))
            throw std::invalid_argument("score_column: non-finite estimate");
        const double floored = std::max(value, kPerfFloor);
        score.per_app[app] = floored;
        log_sum += std::log(floored);
    }
    score.gmean = std::exp(log_sum / static_cast<double>(per_app_estimates.size()));
    return score;
}

const ScoredMapping& select_best(const std::vector<ScoredMapping>& scores) {
    if (scores.empty()) throw std::invalid_argument("select_best requires candidates");
    const ScoredMapping* best = &scores.front();
    for (const auto& sm : scores) {
        if (sm.score.gmean > best->score.gmean + 1e-15 ||
            (std::abs(sm.score.gmean - best->score.gmean) <= 1e-15 &&
             sm.score.mapping_id < best->score.mapping_id))
            best = &sm;
    }
    return *best;
}

std::vector<ScoredMapping> score_candidates(const std::vector<PlacementMapping>& candidates,
                                            const std::vector<AppId>& scheduled_apps,
                                            const EstimateProvider& estimates) {
    std::vector<ScoredMapping> scored;
    scored.reserve(candidates.size());
    for (const auto& mapping : candidates) {
        std::map<AppId, double> per_app;
        bool feasible = true;
        for (AppId app : scheduled_apps) {
            if (!mapping.assignments.count(app)) {
                feasible = false; // a mapping must place every scheduled app
                break;
            }
            per_app[app] = estimates.mapping_estimate(app, mapping);
        }
        if (!feasible) continue;
        scored.push_back({mapping, score_column(mapping.mapping_id(), per_app)});
    }
    if (scored.empty()) throw infeasible_error("no candidate places every scheduled app");
    return scored;
}

std::optional<std::size_t> rank_best_server(AppId app, const ClusterState& state,
                                            const EstimateProvider& estimates) {
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
    return best_server;
}

std::vector<PlacementMapping> stage2_candidates(AppId app, const ClusterState& state,
                                                std::size_t server, std::size_t cap,
                                                std::uint64_t seed) {
    const auto& srv = state.cluster->servers.at(server);

    // No-move candidates first: residents stay put, the app takes a free slot.
    std::vector<PlacementMapping> candidates;
    std::set<std::string> seen;
    for (std::size_t c = 0; c < srv.cores.size(); ++c) {
        if (state.free_threads(server, c) <= 0) continue;
        for (int lvl = 1; lvl <= srv.freq_levels; ++lvl) {
            PlacementMapping m{state.residents};
            m.assignments[app] = Slot{server, c, lvl};
            seen.insert(m.mapping_id());
            candidates.push_back(std::move(m));
            if (candidates.size() >= cap) return candidates;
        }
    }

    // Residents of this server may context switch between its cores; their
    // frequency levels stay pinned.
    std::vector<AppId> apps;
    std::map<AppId, int> pinned;
    ClusterState without = state;
    for (const auto& [id, slot] : state.residents) {
        if (slot.server != server) continue;
        apps.push_back(id);
        pinned[id] = slot.freq_level;
        without.residents.erase(id);
    }
    if (apps.empty()) return candidates;
    apps.push_back(app);

    const auto rearranged =
        enumerate_intra_server(apps, without, server, cap, seed, pinned);
    for (const auto& m : rearranged) {
        if (candidates.size() >= cap) break;
        if (seen.insert(m.mapping_id()).second) candidates.push_back(m);
    }
    return candidates;
}

PlacementMapping tiered_select(AppId app, const ClusterState& state,
                               const EstimateProvider& estimates,
                               std::size_t stage2_cap, std::uint64_t seed) {
    const auto best_server = rank_best_server(app, state, estimates);
    if (!best_server) throw infeasible_error("no server with capacity");
    const auto candidates = stage2_candidates(app, state, *best_server, stage2_cap, seed);

    std::vector<AppId> scheduled;
    for (const auto& [id, _] : state.residents) scheduled.push_back(id);
    scheduled.push_back(app);
    std::sort(scheduled.begin(), scheduled.end());
    return select_best(score_candidates(candidates, scheduled, estimates)).mapping;
}

std::vector<PlacementMapping> enumerate_intra_server(
    const std::vector<AppId>& apps, const ClusterState& state_without_apps,
    std::size_t server, std::size_t cap, std::uint64_t seed,
    const std::map<AppId, int>& pinned_levels) {
    if (apps.empty()) throw std::invalid_argument("enumerate_intra_server requires apps");
    const auto& srv = state_without_apps.cluster->servers.at(server);

    auto levels_for = [&](AppId app) -> std::pair<int, int> {
        auto it = pinned_levels.find(app);
        if (it != pinned_levels.end()) return {it->second, it->second};
        return {1, srv.freq_levels};
    };

    // Depth-first over the server's slots only.
    std::vector<PlacementMapping> out;
    std::map<AppId, Slot> partial = state_without_apps.residents;
    std::map<std::size_t, int> extra_load; // per core
    bool truncated = false;

    std::function<bool(std::size_t)> visit = [&](std::size_t idx) -> bool {
        if (idx == apps.size()) {
            if (out.size() >= cap) return false;
            out.push_back(PlacementMapping{partial});
            return true;
        }
        const auto [lvl_lo, lvl_hi] = levels_for(apps[idx]);
        for (std::size_t c = 0; c < srv.cores.size(); ++c) {
            const int free = state_without_apps.free_threads(server, c) - extra_load[c];
            if (free <= 0) continue;
            for (int lvl = lvl_lo; lvl <= lvl_hi; ++lvl) {
                partial[apps[idx]] = Slot{server, c, lvl};
                extra_load[c] += 1;
                const bool ok = visit(idx + 1);
                extra_load[c] -= 1;
                partial.erase(apps[idx]);
                if (!ok) return false;
            }
        }
        return true;
    };
    if (!visit(0)) truncated = true;

    if (!truncated) return out;

    // Space exceeded the cap: sample instead.
    out.clear();
    std::set<std::string> seen;
    Rng rng(Rng::derive(seed, 0x1A7BA));
    const std::size_t max_attempts = cap * 64;
    for (std::size_t attempt = 0; attempt < max_attempts && out.size() < cap; ++attempt) {
        std::map<AppId, Slot> placed = state_without_apps.residents;
        std::map<std::size_t, int> extra;
        bool ok = true;
        for (AppId app : apps) {
            const auto [lvl_lo, lvl_hi] = levels_for(app);
            std::vector<Slot> options;
            for (std::size_t c = 0; c < srv.cores.size(); ++c) {
                if (state_without_apps.free_threads(server, c) - extra[c] <= 0) continue;
                for (int lvl = lvl_lo; lvl <= lvl_hi; ++lvl)
                    options.push_back(Slot{server, c, lvl});
            }
            if (options.empty()) {
                ok = false;
                break;
            }
            const auto& slot = options[rng.uniform_index(options.size())];
            placed[app] = slot;
            extra[slot.core] += 1;
        }
        if (!ok) continue;
        PlacementMapping m{placed};
        if (seen.insert(m.mapping_id()).second) out.push_back(std::move(m));
    }
    return out;
}

std::optional<PlacementMapping> evaluate_tradeoff(
    AppId app, const PlacementMapping& current, const ClusterState& state,
    const EstimateProvider& estimates,
    const std::function<double(std::size_t dst_server)>& migration_cost_units,
    const TradeoffConfig& config,
    const std::function<bool(std::size_t dst_server)>& server_allowed) {
    auto cur_it = current.assignments.find(app);
    if (cur_it == current.assignments.end())
        throw std::invalid_argument("evaluate_tradeoff: app not in current mapping");
    const Slot cur_slot = cur_it->second;

    std::vector<AppId> scheduled;
    for (const auto& [id, _] : current.assignments) scheduled.push_back(id);

    const double current_gmean =
        score_candidates({current}, scheduled, estimates).front().score.gmean;

    // Occupancy without the app under evaluation.
    ClusterState without = state;
    without.residents.erase(app);

    std::optional<PlacementMapping> best;
    double best_net = 0.0;
    const auto& cluster = *state.cluster;
    for (std::size_t sv = 0; sv < cluster.servers.size(); ++sv) {
        if (server_allowed && !server_allowed(sv)) continue;
        const auto& srv = cluster.servers[sv];
        for (std::size_t c = 0; c < srv.cores.size(); ++c) {
            if (without.free_threads(sv, c) <= 0) continue;
            for (int lvl = 1; lvl <= srv.freq_levels; ++lvl) {
                const Slot slot{sv, c, lvl};
                if (slot == cur_slot) continue;
                PlacementMapping alt = current;
                alt.assignments[app] = slot;
                const double gmean =
                    score_candidates({alt}, scheduled, estimates).front().score.gmean;
                const double gain = (gmean - current_gmean) * config.amortization_horizon;
                const double cost = migration_cost_units(sv);
                const double net = gain - cost;
                if (gain > cost && net > best_net + 1e-12) {
                    best_net = net;
                    best = std::move(alt);
                }
            }
        }
    }
    return best;
}

} // namespace latsched
