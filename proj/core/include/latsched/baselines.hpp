#pragma once

#include "latsched/inference.hpp"
#include "latsched/placement.hpp"
#include "latsched/simworld.hpp"

#include <optional>
#include <string>

namespace latsched {

/// Scheduler policies compared by the harness. `staged` is the full
/// monitor/correct runtime; `staged_static` makes the identical admission
/// decisions but never revisits them.
enum class SchedulerPolicy {
    staged,
    staged_static,
    greedy,
    smallest_first,
    hier_independent,
};

SchedulerPolicy parse_policy(const std::string& name);
std::string policy_name(SchedulerPolicy policy);

/// Fastest available core (by class speed and frequency) at the maximum
/// frequency level; heterogeneity- and interference-agnostic.
Slot greedy_place(const ClusterState& state);

/// Most energy-efficient core first, at the minimum frequency level.
Slot smallest_first_place(const ClusterState& state);

/// Hierarchical-independent baseline: the server tier is interference-aware
/// (same as the tiered stage 1), but the core tier picks by the app's
/// isolation estimate per core class only, with no information exchange.
PlacementMapping hier_independent_place(AppId app, const ClusterState& state,
                                        const ModelEstimateProvider& estimates);

} // namespace latsched
