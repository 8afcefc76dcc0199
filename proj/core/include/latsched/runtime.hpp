#pragma once

#include "latsched/baselines.hpp"
#include "latsched/inference.hpp"
#include "latsched/placement.hpp"
#include "latsched/simworld.hpp"
#include "latsched/wire.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace latsched {

/// Raised when a monitored app's measured performance falls more than the
/// violation threshold below its matrix-estimated expectation.
struct QoSEvent {
    AppId app = 0;
    double expected = 0.0;
    double measured = 0.0;
    double ratio = 0.0; // measured / expected
    double detected_at = 0.0;
};

struct CorrectionAction {
    enum class Kind {
        none,
        context_switch,
        migrate_used_server,
        migrate_idle_server,
        throttle_best_effort,
        terminate,
    };
    Kind kind = Kind::none;
    PlacementMapping new_mapping; // context switch and migrations
    AppId subject = 0;            // moved / throttled / terminated app
    std::size_t dst_server = 0;
    double throttle_factor = 1.0;
};

std::string action_kind_name(CorrectionAction::Kind kind);
/// JSON action object carried by {"type":"command"} wire messages.
std::string action_to_json(const CorrectionAction& action);

/// One row of the stateless-preference audit trail: a migration candidate
/// evaluated during outcome 2, with its estimated gain and cost.
struct MigrationCandidateLog {
    AppId app = 0;
    bool stateless = false;
    double gain_units = 0.0; // estimated gmean gain x amortization horizon
    double cost_units = 0.0; // migration seconds x expected throughput
    bool approved = false;
};

struct CorrectionRecord {
    double t = 0.0;
    AppId trigger = 0;
    CorrectionAction::Kind kind = CorrectionAction::Kind::none;
    AppId subject = 0;            // moved/throttled/terminated app, if any
    bool subject_stateless = true;
    std::vector<MigrationCandidateLog> migration_candidates;
};

struct SchedulerConfig {
    SchedulerPolicy policy = SchedulerPolicy::staged;
    PipelineConfig pipeline;
    double monitor_period = 1.0;       // seconds between agent wakeups
    double violation_threshold = 0.10; // QoS violation at 10% below expected
    std::size_t candidate_cap = 500;
    TradeoffConfig tradeoff;
    bool rerun_sgd2_on_correction = true; // false reruns stage 3 only
    double reprofile_seconds = 2.0;
    // A context switch must promise at least this relative gmean gain;
    // estimate noise would otherwise churn placements.
    double min_switch_gain = 0.02;
    // Placement observations older than this are dropped at correction time.
    double column_stale_horizon = 45.0;
    double throttle_factor = 0.5;
    double throttle_floor = 0.2; // below this, escalate to terminate
    double correction_cooldown = 5.0;
    bool agent_side_detection = false;
    bool log_wire = false;
    std::uint64_t seed = 0;
    // Deterministic model of decision latency, derived from instrumented
    // SGD work so reruns reproduce byte-identical outputs.
    double decision_seconds_base = 0.05;
    double decision_seconds_per_visit = 5e-7;

    bool corrections_enabled() const { return policy == SchedulerPolicy::staged; }
    bool uses_pipeline() const {
        return policy == SchedulerPolicy::staged || policy == SchedulerPolicy::staged_static ||
               policy == SchedulerPolicy::hier_independent;
    }
};

struct AdmissionRecord {
    AppId app = 0;
    double at = 0.0;
    double decision_sim_seconds = 0.0;
    double wall_ms = 0.0;
    std::string mapping_id;
    bool rejected = false;
};

struct EpisodeResult {
    double final_gmean = 0.0;
    std::map<AppId, double> avg_perf; // time-averaged true throughput per app
    std::size_t violations = 0;
    std::size_t corrections = 0;
    std::size_t context_switches = 0;
    std::size_t migrations = 0;      // cross-server, used or idle destination
    std::size_t idle_migrations = 0;
    std::size_t throttles = 0;
    std::size_t terminations = 0;
    std::size_t no_actions = 0;
    std::size_t rejected = 0;
    double decision_sim_seconds = 0.0;  // scheduling-algorithm latency
    double migration_sim_seconds = 0.0; // downtime applied by actions
    double wall_ms = 0.0;
    std::uint64_t matrix_queries = 0;
    std::vector<AdmissionRecord> admissions;
    std::vector<CorrectionRecord> correction_log;
    std::vector<StageReport> stage_reports;
    std::vector<std::string> wire_log; // encoded messages when log_wire is set
    std::size_t wire_messages = 0;
};

/// The master loop: admits applications through the staged pipeline, keeps
/// per-app expectations, detects QoS violations from agent reports, and
/// applies the three-outcome correction policy.
class Master {
public:
    Master(World& world, SchedulerConfig config);

    const SchedulerConfig& config() const { return config_; }
    StagedPipeline* pipeline() { return pipeline_ ? pipeline_.get() : nullptr; }

    /// Profiles, infers, selects and applies a placement for the app, which
    /// must already be registered in the world. Throws infeasible_error when
    /// no capacity exists.
    PlacementMapping admit(AppId id);

    /// Runs one monitoring period: advances the world, collects agent
    /// reports, and emits QoS events for apps below threshold.
    std::vector<QoSEvent> monitor_tick(double dt);

    /// Reprofiles, reruns the online stages, and picks the first applicable
    /// outcome: intra-server context switch, cross-server migration
    /// (stateless preferred), idle-server migration, or best-effort
    /// throttle/terminate. Applies the action.
    CorrectionAction correct(const QoSEvent& event);

    const std::map<AppId, double>& expectations() const { return expectations_; }
    /// Overrides one expectation; scripted scenarios and operators only.
    void set_expectation(AppId id, double expected) { expectations_[id] = expected; }
    EpisodeResult finalize(const std::vector<AppSpec>& mix, double episode_end);

private:
    World* world_;
    SchedulerConfig config_;
    std::unique_ptr<StagedPipeline> pipeline_;
    std::unique_ptr<ModelEstimateProvider> provider_;
    std::map<AppId, double> expectations_;
    std::map<AppId, double> last_correction_;
    EpisodeResult stats_;
    std::uint64_t decisions_ = 0;

    ClusterState snapshot() const;
    void refresh_expectations();
    void charge_decision(std::uint64_t visits_before, double wall_ms);
    void note_message(const wire::Message& message);
    PlacementMapping admit_staged(AppId id);
    PlacementMapping admit_hier(AppId id);
    CorrectionAction decide_correction(const QoSEvent& event, CorrectionRecord& record,
                                       const std::map<AppId, double>& measured);
    void apply_action(CorrectionAction& action);
    void rerun_online_stages();
};

/// Admits the mix, then runs the monitor/correct loop until `duration`
/// sim-seconds. The final gmean aggregates per-app time-averaged true
/// throughput, terminated apps included over their lifetime.
EpisodeResult run_episode(const std::vector<AppSpec>& mix, World& world,
                          const SchedulerConfig& config, double duration);

} // namespace latsched
