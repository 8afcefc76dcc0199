#pragma once

#include "latsched/factorization.hpp"
#include "latsched/matrix.hpp"
#include "latsched/placement.hpp"
#include "latsched/simworld.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace latsched {

struct ProfileObservation {
    AppId app_id = 0;
    ColumnKind column;
    double value = 0.0;
    double sim_duration = 0.0;
};

struct StageReport {
    int stage = 0; // 1, 2 or 3
    std::size_t iterations = 0;
    std::optional<double> holdout_error;
    std::size_t columns_completed = 0;
    std::uint64_t entries_visited = 0;
    double wall_ms = 0.0;
};

struct PipelineConfig {
    SgdConfig sgd;
    // Stage 1 reruns per admission; a tighter impute cap keeps it cheap.
    RankPolicy rank{0.95, 10, 8, 2e-3};
    std::size_t n_kernels = kResourceDims;
    std::size_t n_levels = 10;
    std::size_t profiling_runs = 3;      // isolation + (runs-1) kernel co-runs
    std::size_t partial_placements = 1;  // probe columns per admission
    std::size_t concat_cap = 64;         // candidate columns carried per admission
    double profile_seconds = 2.0;
    // Offline training corpus: rows profiled exhaustively against the kernel
    // schema before any live application arrives. The common reference
    // columns are what let a 3-observation row be projected accurately.
    std::size_t bootstrap_rows = 40;
    std::uint64_t seed = 0;
};

/// The staged completion pipeline: reference-block training (stage 1),
/// observed-placement completion (stage 2) and all-zero-column completion
/// with bounded random initialization (stage 3).
class StagedPipeline {
public:
    StagedPipeline(PipelineConfig config, const Cluster& cluster);

    const PipelineConfig& config() const { return config_; }
    const UtilityMatrix& matrix() const { return matrix_; }
    UtilityMatrix& mutable_matrix() { return matrix_; }
    const std::optional<FactorModel>& model() const { return model_; }

    /// Adds a live application row; returns the row index.
    std::size_t attach_app(AppId id);
    std::optional<std::size_t> row_of(AppId id) const;

    /// Isolation run plus seed-deterministic kernel co-runs on the profiling
    /// station. Inserts the observations and returns them. `runs` overrides
    /// config().profiling_runs when nonzero.
    std::vector<ProfileObservation> profile_reference(AppId id, World& world,
                                                      std::size_t runs = 0);

    /// SVD-initialized SGD over the reference block. Every reference cell is
    /// estimated afterwards; placement columns are untouched.
    StageReport run_sgd1();

    /// Probes a seed-chosen free core for profile_seconds and records the new
    /// app plus all co-residents of that server into the realized mapping's
    /// column. Returns the populated column indices (the stage-2 w set).
    std::vector<std::size_t> profile_partial_placements(AppId id, World& world);

    /// Adds candidate mapping columns (no observations) ahead of stage 3.
    void concat_candidates(const std::vector<std::string>& mapping_ids);

    /// Refines over the reference block plus observed placement columns;
    /// all-zero placement columns are excluded.
    StageReport run_sgd2();

    /// Initializes every cell of each all-zero placement column uniformly in
    /// [min, max] of the observed entries, then refines over the full matrix.
    StageReport run_sgd3(std::uint64_t seed_salt = 0);

    /// Drops placement columns that never received an observation (stale
    /// candidates from past admissions). Invalidates the current estimates.
    void prune_unobserved_candidates();

    /// Replaces the observations of the column for `mapping_id` with fresh
    /// measurements (reprofiling path). Creates the column if missing.
    /// `at` stamps the column for staleness accounting.
    void replace_column(const std::string& mapping_id,
                        const std::map<AppId, double>& measurements, double at = 0.0);

    /// Drops placement columns whose observations are older than `cutoff`.
    /// Stale measurements would otherwise win corrections on phantom gains.
    void expire_columns_older_than(double cutoff);

    bool column_estimated(std::size_t col) const;
    /// Observed-preserving estimate, clamped to >= 0. Throws if the column
    /// has not been completed by the stages run so far.
    double estimate(std::size_t row, std::size_t col) const;
    std::optional<double> estimate_for_app(AppId id, std::size_t col) const;

    double isolation_estimate(AppId id) const;
    /// Per-resource sensitivity read out of the completed reference block:
    /// the slope of normalized kernel-column estimates against intensity.
    ResourceVector sensitivity_readout(AppId id) const;

    const std::vector<StageReport>& reports() const { return reports_; }
    /// Highest stage completed since the last structural change (0 = none).
    int stage() const { return stage_state_; }
    /// Bumped whenever matrix contents or estimates change.
    std::uint64_t version() const { return version_; }
    std::uint64_t query_count() const { return query_count_; }
    std::uint64_t entries_visited_total() const { return entries_visited_; }
    std::size_t bootstrap_rows() const { return config_.bootstrap_rows; }

    /// CSV line dump of stage reports: stage,iterations,error,wall_ms.
    void dump_stage_log(std::ostream& os) const;

private:
    PipelineConfig config_;
    const Cluster* cluster_;
    UtilityMatrix matrix_;
    std::optional<FactorModel> model_;
    std::vector<double> estimates_;     // dense row-major m x d
    std::vector<char> column_done_;     // per-column completion flag
    std::map<AppId, std::size_t> app_rows_;
    std::map<std::string, double> column_stamped_at_;
    std::vector<StageReport> reports_;
    int stage_state_ = 0;
    std::uint64_t admission_counter_ = 0;
    std::uint64_t entries_visited_ = 0;
    std::uint64_t version_ = 0;
    mutable std::uint64_t query_count_ = 0;

    std::size_t reference_width() const { return matrix_.reference_width(); }
    void bootstrap(const Cluster& cluster);
    void refresh_estimates(std::size_t col_limit);
    void note_report(StageReport report);
};

/// Estimates for arbitrary candidate mappings. Columns that carry real
/// observations answer from the completed matrix; hypothetical mappings are
/// composed from the app's inferred sensitivities, the slot's speed relative
/// to the profiling platform, and the co-runners' inferred pressure.
class ModelEstimateProvider : public EstimateProvider {
public:
    ModelEstimateProvider(const StagedPipeline& pipeline, const Cluster& cluster)
        : pipeline_(&pipeline), cluster_(&cluster) {}

    double mapping_estimate(AppId app, const PlacementMapping& mapping) const override;

    /// Estimate backed by a matrix column that carries real observations for
    /// this mapping, if one exists.
    std::optional<double> column_backed_estimate(AppId app,
                                                 const PlacementMapping& mapping) const;

    /// Sensitivity-composed estimate, ignoring any matrix column.
    double composed_estimate(AppId app, const PlacementMapping& mapping) const;

    /// Interference-blind variant: isolation estimate scaled to the slot's
    /// class and frequency, no co-runner discount. Used by the independent
    /// hierarchical baseline's core tier.
    double isolation_only_estimate(AppId app, const Slot& slot) const;

    /// Frequency/class responsiveness of the app. Calibrated from observed
    /// placement cells on slots whose speed differs from the profiling
    /// platform; falls back to the CPU-dimension sensitivity readout.
    double freq_response(AppId app) const;

private:
    const StagedPipeline* pipeline_;
    const Cluster* cluster_;
    mutable std::map<AppId, std::pair<std::uint64_t, double>> freq_cache_;

    double slot_speed_scale(AppId app, const Slot& slot) const;
    double corunner_discount(AppId app, const std::map<AppId, Slot>& assignments,
                             const Slot& slot) const;
};

} // namespace latsched
