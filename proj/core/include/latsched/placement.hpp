#pragma once

#include "latsched/simworld.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace latsched {

/// Floor applied to estimates before log-space geometric means.
inline constexpr double kPerfFloor = 1e-6;

/// Full assignment of applications to (server, core, freq-level) slots.
/// The canonical id is a deterministic function of the sorted assignments.
struct PlacementMapping {
    std::map<AppId, Slot> assignments;

    std::string mapping_id() const;
    bool operator==(const PlacementMapping&) const = default;
};

std::string canonical_mapping_id(const std::map<AppId, Slot>& assignments);
/// Inverse of canonical_mapping_id. Throws on malformed ids.
std::map<AppId, Slot> parse_mapping_id(const std::string& mapping_id);

struct PlacementScore {
    std::string mapping_id;
    double gmean = 0.0;
    std::map<AppId, double> per_app;
};

struct ScoredMapping {
    PlacementMapping mapping;
    PlacementScore score;
};

/// Per-application performance estimates for hypothetical mappings. Backed by
/// the completed utility matrix in production; tests may back it with the
/// world oracle or fixtures.
class EstimateProvider {
public:
    virtual ~EstimateProvider() = default;
    /// Estimated throughput of `app` if `mapping` were applied.
    virtual double mapping_estimate(AppId app, const PlacementMapping& mapping) const = 0;
};

/// Cluster occupancy snapshot placement decisions are made against: the
/// platform inventory plus residents whose slots are fixed.
struct ClusterState {
    const Cluster* cluster = nullptr;
    std::map<AppId, Slot> residents;

    int free_threads(std::size_t server, std::size_t core) const;
    bool server_has_capacity(std::size_t server) const;
};

/// Candidate mappings placing `apps` onto free slots with residents fixed.
/// Exhaustive when the assignment space fits under `cap`; otherwise a
/// seed-deterministic uniform sample of `cap` unique mappings that always
/// includes the greedy and smallest-first assignments.
std::vector<PlacementMapping> enumerate_candidates(const std::vector<AppId>& apps,
                                                   const ClusterState& state,
                                                   std::size_t cap, std::uint64_t seed);

/// Log-space geometric mean of per-application estimates.
PlacementScore score_column(const std::string& mapping_id,
                            const std::map<AppId, double>& per_app_estimates);

/// Argmax by gmean; ties broken by lexicographically smallest mapping_id.
const ScoredMapping& select_best(const std::vector<ScoredMapping>& scores);

/// Scores each candidate by querying the provider for every placed app.
std::vector<ScoredMapping> score_candidates(const std::vector<PlacementMapping>& candidates,
                                            const std::vector<AppId>& scheduled_apps,
                                            const EstimateProvider& estimates);

/// Stage 1 of the tiered scheduler: the server with capacity whose best free
/// slot maximizes the app's estimated performance (isolation estimate
/// discounted by resident pressure).
std::optional<std::size_t> rank_best_server(AppId app, const ClusterState& state,
                                            const EstimateProvider& estimates);

/// Stage 2 candidate mappings within one server: the new app on any free
/// core/frequency slot, and the server's residents free to context switch
/// between its cores with their frequency levels pinned (admission never
/// adjusts a resident's frequency). Always includes the no-move candidates.
std::vector<PlacementMapping> stage2_candidates(AppId app, const ClusterState& state,
                                                std::size_t server,
                                                std::size_t cap = 500,
                                                std::uint64_t seed = 0);

/// Two-stage selection: pick the server whose best free slot maximizes the
/// app's estimated performance (isolation estimate discounted by resident
/// pressure), then enumerate core/frequency assignments within that server
/// only. Residents never move and keep their frequency levels.
PlacementMapping tiered_select(AppId app, const ClusterState& state,
                               const EstimateProvider& estimates,
                               std::size_t stage2_cap = 500, std::uint64_t seed = 0);

/// Re-placements of `apps` within `server` only; other residents fixed.
/// Exhaustive under `cap`, sampled above it. Apps present in `pinned_levels`
/// only take that frequency level.
std::vector<PlacementMapping> enumerate_intra_server(
    const std::vector<AppId>& apps, const ClusterState& state_without_apps,
    std::size_t server, std::size_t cap, std::uint64_t seed,
    const std::map<AppId, int>& pinned_levels = {});

/// Returns an alternative mapping moving `app` only when the estimated gmean
/// gain over the amortization horizon exceeds the migration cost in lost
/// work (unit-seconds). `migration_cost_units` is evaluated per candidate
/// destination server by the callback.
struct TradeoffConfig {
    double amortization_horizon = 60.0; // sim-seconds
    std::size_t candidate_cap = 500;
    std::uint64_t seed = 0;
};

std::optional<PlacementMapping> evaluate_tradeoff(
    AppId app, const PlacementMapping& current, const ClusterState& state,
    const EstimateProvider& estimates,
    const std::function<double(std::size_t dst_server)>& migration_cost_units,
    const TradeoffConfig& config = {},
    const std::function<bool(std::size_t dst_server)>& server_allowed = {});

/// Free-slot pickers shared with the baseline schedulers. Greedy prefers the
/// fastest core class at the highest frequency; smallest-first the inverse.
std::optional<Slot> greedy_slot(const ClusterState& state);
std::optional<Slot> smallest_first_slot(const ClusterState& state);

} // namespace latsched
