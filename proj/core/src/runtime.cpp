#include "latsched/runtime.hpp"

#include "latsched/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace latsched {

using nlohmann::json;

std::string action_kind_name(CorrectionAction::Kind kind) {
    switch (kind) {
    case CorrectionAction::Kind::none: return "none";
    case CorrectionAction::Kind::context_switch: return "context_switch";
    case CorrectionAction::Kind::migrate_used_server: return "migrate_used_server";
    case CorrectionAction::Kind::migrate_idle_server: return "migrate_idle_server";
    case CorrectionAction::Kind::throttle_best_effort: return "throttle_best_effort";
    case CorrectionAction::Kind::terminate: return "terminate";
    }
    return "none";
}

std::string action_to_json(const CorrectionAction& action) {
    json j;
    j["kind"] = action_kind_name(action.kind);
    switch (action.kind) {
    case CorrectionAction::Kind::context_switch: {
        json moves = json::array();
        for (const auto& [app, slot] : action.new_mapping.assignments) {
            moves.push_back({{"app", app},
                             {"server", slot.server},
                             {"core", slot.core},
                             {"freq_level", slot.freq_level}});
        }
        j["moves"] = std::move(moves);
        break;
    }
    case CorrectionAction::Kind::migrate_used_server:
    case CorrectionAction::Kind::migrate_idle_server:
        j["app"] = action.subject;
        j["dst_server"] = action.dst_server;
        break;
    case CorrectionAction::Kind::throttle_best_effort:
        j["app"] = action.subject;
        j["factor"] = action.throttle_factor;
        break;
    case CorrectionAction::Kind::terminate:
        j["app"] = action.subject;
        break;
    case CorrectionAction::Kind::none:
        break;
    }
    return j.dump();
}

namespace {

double wall_ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

// Correction-time estimates. Candidates whose mapping was actually observed
// answer from the matrix. Otherwise an app's fresh measurement anchors the
// estimate and the composed model only contributes the relative change
// between the candidate and the current placement. Raw composed estimates
// would make every unmeasured alternative of a degraded app look like a
// gain, even when nothing about its contention changes.
class ContextAwareProvider : public EstimateProvider {
public:
    ContextAwareProvider(const ModelEstimateProvider& inner,
                         const std::map<AppId, Slot>& current,
                         const std::map<AppId, double>& measured)
        : inner_(&inner), current_(&current), measured_(&measured) {}

    double mapping_estimate(AppId app, const PlacementMapping& mapping) const override {
        if (auto v = inner_->column_backed_estimate(app, mapping)) return *v;
        auto m = measured_->find(app);
        if (m != measured_->end()) {
            const PlacementMapping current{*current_};
            const double base = inner_->composed_estimate(app, current);
            const double cand = inner_->composed_estimate(app, mapping);
            const double ratio =
                base > 0.0 ? std::clamp(cand / base, 0.05, 20.0) : 1.0;
            return std::max(m->second * ratio, kPerfFloor);
        }
        return inner_->mapping_estimate(app, mapping);
    }

private:
    const ModelEstimateProvider* inner_;
    const std::map<AppId, Slot>* current_;
    const std::map<AppId, double>* measured_;
};

} // namespace

Master::Master(World& world, SchedulerConfig config)
    : world_(&world), config_(std::move(config)) {
    if (config_.uses_pipeline()) {
        PipelineConfig pc = config_.pipeline;
        pc.seed = Rng::derive(config_.seed, 0x9A57E2);
        pipeline_ = std::make_unique<StagedPipeline>(pc, world_->cluster());
        provider_ = std::make_unique<ModelEstimateProvider>(*pipeline_, world_->cluster());
    }
}

ClusterState Master::snapshot() const {
    return ClusterState{&world_->cluster(), world_->assignments()};
}

void Master::refresh_expectations() {
    if (!pipeline_) return;
    const PlacementMapping current{world_->assignments()};
    for (const auto& [id, _] : world_->assignments())
        expectations_[id] = provider_->mapping_estimate(id, current);
}

void Master::charge_decision(std::uint64_t visits_before, double wall_ms) {
    stats_.wall_ms += wall_ms;
    if (!pipeline_) return;
    const std::uint64_t visits = pipeline_->entries_visited_total() - visits_before;
    const double sim_s = config_.decision_seconds_base +
                         config_.decision_seconds_per_visit * static_cast<double>(visits);
    stats_.decision_sim_seconds += sim_s;
    world_->run_interval(sim_s); // scheduling latency passes in the world too
}

void Master::note_message(const wire::Message& message) {
    ++stats_.wire_messages;
    const std::string encoded = wire::encode(message);
    if (config_.log_wire) stats_.wire_log.push_back(encoded);
}

PlacementMapping Master::admit(AppId id) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t visits0 = pipeline_ ? pipeline_->entries_visited_total() : 0;
    const double at = world_->clock();

    PlacementMapping applied;
    switch (config_.policy) {
    case SchedulerPolicy::greedy: {
        const Slot slot = greedy_place(snapshot());
        world_->assign(id, slot);
        applied.assignments = world_->assignments();
        break;
    }
    case SchedulerPolicy::smallest_first: {
        const Slot slot = smallest_first_place(snapshot());
        world_->assign(id, slot);
        applied.assignments = world_->assignments();
        break;
    }
    case SchedulerPolicy::hier_independent:
        applied = admit_hier(id);
        break;
    case SchedulerPolicy::staged:
    case SchedulerPolicy::staged_static:
        applied = admit_staged(id);
        break;
    }

    const double wall = wall_ms_since(t0);
    charge_decision(visits0, wall);
    refresh_expectations();

    AdmissionRecord record;
    record.app = id;
    record.at = at;
    record.wall_ms = wall;
    record.mapping_id = applied.mapping_id();
    if (pipeline_) {
        const std::uint64_t visits = pipeline_->entries_visited_total() - visits0;
        record.decision_sim_seconds =
            config_.decision_seconds_base +
            config_.decision_seconds_per_visit * static_cast<double>(visits);
    }
    stats_.admissions.push_back(record);
    return applied;
}

PlacementMapping Master::admit_staged(AppId id) {
    // Stale candidate columns from the previous admission carry no data;
    // drop them before the stages rebuild.
    pipeline_->prune_unobserved_candidates();
    pipeline_->attach_app(id);
    pipeline_->profile_reference(id, *world_);
    pipeline_->run_sgd1();
    pipeline_->profile_partial_placements(id, *world_);

    const ClusterState state = snapshot();
    const auto server = rank_best_server(id, state, *provider_);
    if (!server) throw infeasible_error("no server with capacity");

    // Candidate mappings become matrix columns ahead of the online stages
    // (bounded; stage 3 reconstructs them, scoring covers the full set).
    const auto candidates =
        stage2_candidates(id, state, *server, config_.candidate_cap, config_.seed);
    std::vector<std::string> ids;
    ids.reserve(std::min(candidates.size(), config_.pipeline.concat_cap));
    for (const auto& c : candidates) {
        if (ids.size() >= config_.pipeline.concat_cap) break;
        ids.push_back(c.mapping_id());
    }
    pipeline_->concat_candidates(ids);

    pipeline_->run_sgd2();
    pipeline_->run_sgd3();

    const PlacementMapping mapping =
        tiered_select(id, state, *provider_, config_.candidate_cap, config_.seed);

    // The selected column may context switch residents of the chosen server;
    // their frequency levels are untouched by construction.
    const auto before = world_->assignments();
    std::vector<std::pair<AppId, Slot>> moves;
    for (const auto& [b, slot] : mapping.assignments)
        if (b != id && before.count(b) && before.at(b) != slot) moves.emplace_back(b, slot);
    for (const auto& [b, _] : moves) world_->unassign(b);
    for (const auto& [b, slot] : moves) {
        world_->assign(b, slot);
        world_->set_unavailable_until(b, world_->clock() + 0.01);
        stats_.migration_sim_seconds += 0.01;
    }
    world_->assign(id, mapping.assignments.at(id));
    return mapping;
}

PlacementMapping Master::admit_hier(AppId id) {
    pipeline_->attach_app(id);
    pipeline_->profile_reference(id, *world_);
    pipeline_->run_sgd1();
    const PlacementMapping mapping = hier_independent_place(id, snapshot(), *provider_);
    world_->assign(id, mapping.assignments.at(id));
    return mapping;
}

std::vector<QoSEvent> Master::monitor_tick(double dt) {
    const double t0 = world_->clock();
    const auto samples = world_->run_interval(dt);
    std::vector<QoSEvent> events;
    for (const auto& [id, sample] : samples) {
        note_message(wire::Report{id, sample.measured, world_->clock()});
        if (world_->unavailable_until(id) > t0) continue; // migration in flight
        auto it = expectations_.find(id);
        if (it == expectations_.end() || it->second <= 0.0) continue; // skipped, logged
        const double ratio = sample.measured / it->second;
        if (ratio < 1.0 - config_.violation_threshold) {
            QoSEvent event{id, it->second, sample.measured, ratio, world_->clock()};
            events.push_back(event);
            ++stats_.violations;
            if (config_.agent_side_detection)
                note_message(wire::Violation{id, ratio, world_->clock()});
        }
    }
    return events;
}

void Master::rerun_online_stages() {
    if (pipeline_->stage() < 1) pipeline_->run_sgd1();
    if (config_.rerun_sgd2_on_correction || pipeline_->stage() < 2) pipeline_->run_sgd2();
    pipeline_->run_sgd3();
}

CorrectionAction Master::correct(const QoSEvent& event) {
    CorrectionAction action;
    if (!config_.corrections_enabled()) return action;
    const auto slot = world_->slot_of(event.app);
    if (!slot) return action; // already gone

    auto cool = last_correction_.find(event.app);
    if (cool != last_correction_.end() &&
        world_->clock() < cool->second + config_.correction_cooldown)
        return action;

    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t visits0 = pipeline_->entries_visited_total();
    ++stats_.corrections;
    last_correction_[event.app] = world_->clock();

    // Reprofile the current placement and replace its column.
    const std::string mapping_id = canonical_mapping_id(world_->assignments());
    const auto samples = world_->run_interval(config_.reprofile_seconds);
    stats_.decision_sim_seconds += config_.reprofile_seconds;
    std::map<AppId, double> measurements;
    for (const auto& [id, sample] : samples) {
        const auto s = world_->slot_of(id);
        if (s && s->server == slot->server) measurements[id] = sample.measured;
    }
    pipeline_->expire_columns_older_than(world_->clock() - config_.column_stale_horizon);
    pipeline_->replace_column(mapping_id, measurements, world_->clock());
    rerun_online_stages();

    CorrectionRecord record;
    record.t = world_->clock();
    record.trigger = event.app;
    action = decide_correction(event, record, measurements);
    record.kind = action.kind;
    record.subject = action.subject;
    if (action.kind == CorrectionAction::Kind::migrate_used_server ||
        action.kind == CorrectionAction::Kind::migrate_idle_server)
        record.subject_stateless = world_->app(action.subject).stateless;
    apply_action(action);
    stats_.correction_log.push_back(std::move(record));
    note_message(wire::Command{action_to_json(action)});

    charge_decision(visits0, wall_ms_since(t0));
    refresh_expectations();
    return action;
}

CorrectionAction Master::decide_correction(const QoSEvent& event, CorrectionRecord& record,
                                           const std::map<AppId, double>& measured) {
    CorrectionAction action;
    const ClusterState state = snapshot();
    const std::size_t src = world_->slot_of(event.app)->server;
    const PlacementMapping current{world_->assignments()};
    const ContextAwareProvider scoring(*provider_, world_->assignments(), measured);

    std::vector<AppId> scheduled;
    for (const auto& [id, _] : current.assignments) scheduled.push_back(id);
    const double current_gmean =
        score_candidates({current}, scheduled, scoring).front().score.gmean;

    std::vector<AppId> server_apps;
    for (const auto& [id, s] : current.assignments)
        if (s.server == src) server_apps.push_back(id);

    const double horizon = config_.tradeoff.amortization_horizon;
    auto expected_of = [&](AppId id) {
        auto it = expectations_.find(id);
        return it == expectations_.end() ? kPerfFloor : std::max(it->second, kPerfFloor);
    };

    // Outcome 1: a better placement within the server (context switch).
    {
        ClusterState without = state;
        for (AppId b : server_apps) without.residents.erase(b);
        const auto cands = enumerate_intra_server(
            server_apps, without, src, config_.candidate_cap,
            Rng::derive(config_.seed, 0xC0 + stats_.corrections));
        const auto scored = score_candidates(cands, scheduled, scoring);
        const auto& best = select_best(scored);
        std::size_t moved = 0;
        for (const auto& [id, s] : best.mapping.assignments)
            if (current.assignments.at(id) != s) ++moved;
        double switch_cost = 0.0;
        for (const auto& [id, s] : best.mapping.assignments)
            if (current.assignments.at(id) != s) switch_cost += 0.01 * expected_of(id);
        const double gain = (best.score.gmean - current_gmean) * horizon;
        const bool material =
            best.score.gmean > current_gmean * (1.0 + config_.min_switch_gain);
        if (moved > 0 && material && gain > switch_cost) {
            action.kind = CorrectionAction::Kind::context_switch;
            action.new_mapping = best.mapping;
            return action;
        }
    }

    // Outcome 2: migrate to an already-used server; stateless preferred,
    // stateful only when no stateless candidate clears the gain bar.
    {
        auto used = [&](std::size_t sv) {
            if (sv == src) return false;
            for (const auto& [_, s] : current.assignments)
                if (s.server == sv) return true;
            return false;
        };
        std::optional<PlacementMapping> best_stateless, best_stateful;
        AppId best_stateless_app = 0, best_stateful_app = 0;
        for (AppId b : server_apps) {
            const bool stateless = world_->app(b).stateless;
            auto cost_units = [&](std::size_t dst) {
                return world_->migration_cost(b, src, dst) * expected_of(b);
            };
            const auto alt = evaluate_tradeoff(b, current, state, scoring, cost_units,
                                               config_.tradeoff, used);
            MigrationCandidateLog log;
            log.app = b;
            log.stateless = stateless;
            log.approved = alt.has_value();
            if (alt) {
                const auto dst = alt->assignments.at(b).server;
                log.cost_units = cost_units(dst);
                log.gain_units =
                    (score_candidates({*alt}, scheduled, scoring).front().score.gmean -
                     current_gmean) *
                    horizon;
                if (stateless && !best_stateless) {
                    best_stateless = alt;
                    best_stateless_app = b;
                } else if (!stateless && !best_stateful) {
                    best_stateful = alt;
                    best_stateful_app = b;
                }
            }
            record.migration_candidates.push_back(log);
        }
        if (best_stateless || best_stateful) {
            const bool use_stateless = best_stateless.has_value();
            action.kind = CorrectionAction::Kind::migrate_used_server;
            action.new_mapping = use_stateless ? *best_stateless : *best_stateful;
            action.subject = use_stateless ? best_stateless_app : best_stateful_app;
            action.dst_server = action.new_mapping.assignments.at(action.subject).server;
            return action;
        }
    }

    // Outcome 3: idle-server migration for a stateless app, else constrain
    // best-effort co-runners (throttle first, terminate when exhausted).
    {
        auto idle = [&](std::size_t sv) {
            if (sv == src) return false;
            for (const auto& [_, s] : current.assignments)
                if (s.server == sv) return false;
            return true;
        };
        for (AppId b : server_apps) {
            if (!world_->app(b).stateless) continue;
            auto cost_units = [&](std::size_t dst) {
                return world_->migration_cost(b, src, dst) * expected_of(b);
            };
            const auto alt = evaluate_tradeoff(b, current, state, scoring, cost_units,
                                               config_.tradeoff, idle);
            if (alt) {
                action.kind = CorrectionAction::Kind::migrate_idle_server;
                action.new_mapping = *alt;
                action.subject = b;
                action.dst_server = alt->assignments.at(b).server;
                return action;
            }
        }
        for (AppId b : server_apps) {
            if (b == event.app) continue;
            if (world_->app(b).kind != AppKind::best_effort) continue;
            const double throttle = world_->throttle(b);
            if (throttle > config_.throttle_floor) {
                action.kind = CorrectionAction::Kind::throttle_best_effort;
                action.subject = b;
                action.throttle_factor = throttle * config_.throttle_factor;
                return action;
            }
            action.kind = CorrectionAction::Kind::terminate;
            action.subject = b;
            return action;
        }
    }

    return action; // no action improves the outcome; logged, not an error
}

void Master::apply_action(CorrectionAction& action) {
    const double now = world_->clock();
    switch (action.kind) {
    case CorrectionAction::Kind::none:
        ++stats_.no_actions;
        break;
    case CorrectionAction::Kind::context_switch: {
        const auto before = world_->assignments();
        std::vector<std::pair<AppId, Slot>> moves;
        for (const auto& [id, slot] : action.new_mapping.assignments)
            if (before.count(id) && before.at(id) != slot) moves.emplace_back(id, slot);
        for (const auto& [id, _] : moves) world_->unassign(id);
        for (const auto& [id, slot] : moves) {
            world_->assign(id, slot);
            world_->set_unavailable_until(id, now + 0.01);
            stats_.migration_sim_seconds += 0.01;
        }
        ++stats_.context_switches;
        break;
    }
    case CorrectionAction::Kind::migrate_used_server:
    case CorrectionAction::Kind::migrate_idle_server: {
        const auto src = world_->slot_of(action.subject)->server;
        const double cost = world_->migration_cost(action.subject, src, action.dst_server);
        world_->unassign(action.subject);
        world_->assign(action.subject, action.new_mapping.assignments.at(action.subject));
        world_->set_unavailable_until(action.subject, now + cost);
        stats_.migration_sim_seconds += cost;
        ++stats_.migrations;
        if (action.kind == CorrectionAction::Kind::migrate_idle_server)
            ++stats_.idle_migrations;
        break;
    }
    case CorrectionAction::Kind::throttle_best_effort:
        world_->set_throttle(action.subject, action.throttle_factor);
        ++stats_.throttles;
        break;
    case CorrectionAction::Kind::terminate:
        world_->remove_app(action.subject);
        expectations_.erase(action.subject);
        ++stats_.terminations;
        break;
    }
}

EpisodeResult Master::finalize(const std::vector<AppSpec>& mix, double episode_end) {
    if (pipeline_) {
        stats_.matrix_queries = pipeline_->query_count();
        stats_.stage_reports = pipeline_->reports();
    }
    double log_sum = 0.0;
    std::size_t counted = 0;
    for (const auto& spec : mix) {
        double avg = 0.0;
        bool have = false;
        if (auto it = world_->finished().find(spec.id); it != world_->finished().end()) {
            const auto& fin = it->second;
            if (fin.end > fin.start) {
                avg = fin.work / (fin.end - fin.start);
                have = true;
            }
        } else if (const auto since = world_->assigned_since(spec.id)) {
            if (episode_end > *since) {
                avg = world_->accumulated_work(spec.id) / (episode_end - *since);
                have = true;
            }
        }
        if (!have) continue;
        stats_.avg_perf[spec.id] = avg;
        log_sum += std::log(std::max(avg, kPerfFloor));
        ++counted;
    }
    stats_.final_gmean = counted > 0 ? std::exp(log_sum / static_cast<double>(counted)) : 0.0;
    return stats_;
}

EpisodeResult run_episode(const std::vector<AppSpec>& mix, World& world,
                          const SchedulerConfig& config, double duration) {
    if (duration < 0.0) throw std::invalid_argument("duration must be >= 0");
    Master master(world, config);
    std::size_t rejected = 0;
    for (const auto& spec : mix) world.add_app(spec);
    for (const auto& spec : mix) {
        try {
            master.admit(spec.id);
        } catch (const infeasible_error&) {
            ++rejected;
        }
    }
    while (world.clock() + 1e-9 < duration) {
        const double dt = std::min(config.monitor_period, duration - world.clock());
        const auto events = master.monitor_tick(dt);
        if (config.corrections_enabled() && !events.empty()) {
            const auto worst = std::min_element(
                events.begin(), events.end(),
                [](const QoSEvent& a, const QoSEvent& b) { return a.ratio < b.ratio; });
            master.correct(*worst);
        }
    }
    EpisodeResult result = master.finalize(mix, world.clock());
    result.rejected = rejected;
    return result;
}

} // namespace latsched
