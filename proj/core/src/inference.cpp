#include "latsched/inference.hpp"

#include "latsched/errors.hpp"
#include "latsched/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace latsched {

namespace {

double wall_ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

} // namespace

StagedPipeline::StagedPipeline(PipelineConfig config, const Cluster& cluster)
    : config_(std::move(config)), cluster_(&cluster),
      matrix_(0, UtilityMatrix::reference_schema(config_.n_kernels, config_.n_levels)) {
    if (config_.profiling_runs < 1 || config_.profiling_runs > 5)
        throw std::invalid_argument("profiling_runs must be 1..5");
    bootstrap(cluster);
}

void StagedPipeline::bootstrap(const Cluster& cluster) {
    if (config_.bootstrap_rows == 0) return;
    // Offline corpus: every kernel column of every training app is profiled,
    // so the reference-column factors are well determined before live
    // applications show up with three observations each.
    const auto corpus = generate_mix(config_.bootstrap_rows,
                                     Rng::derive(config_.seed, 0xB007), cluster);
    Rng noise(Rng::derive(config_.seed, 0xB007 + 1));
    for (const auto& spec : corpus) {
        const std::size_t row = matrix_.add_row();
        World scratch(cluster, 0, 0.0); // station truth only, no occupancy
        for (std::size_t col = 0; col < matrix_.reference_width(); ++col) {
            const auto& kind = matrix_.column(col);
            double truth;
            if (kind.tag == ColumnKind::Tag::isolation) {
                truth = scratch.station_truth(spec, nullptr);
            } else {
                const auto kernel =
                    make_kernel_app(kind.kernel_id, kind.intensity_level, cluster);
                truth = scratch.station_truth(spec, &kernel);
            }
            matrix_.insert(row, col, truth * noise.lognormal_factor(0.005));
        }
    }
}

std::size_t StagedPipeline::attach_app(AppId id) {
    if (app_rows_.count(id))
        throw conflict_error("app already attached: " + std::to_string(id));
    const std::size_t row = matrix_.add_row();
    app_rows_[id] = row;
    return row;
}

std::optional<std::size_t> StagedPipeline::row_of(AppId id) const {
    auto it = app_rows_.find(id);
    if (it == app_rows_.end()) return std::nullopt;
    return it->second;
}

std::vector<ProfileObservation> StagedPipeline::profile_reference(AppId id, World& world,
                                                                  std::size_t runs) {
    const auto row = row_of(id);
    if (!row) throw std::invalid_argument("app not attached to the pipeline");
    const std::size_t n_runs = runs == 0 ? config_.profiling_runs : runs;
    if (n_runs < 1 || n_runs > 5) throw std::invalid_argument("profiling runs must be 1..5");
    const AppSpec& spec = world.app(id);

    std::vector<ProfileObservation> out;
    const double value = world.measure_profile(spec, nullptr, config_.profile_seconds);
    ++version_;
    matrix_.insert(*row, 0, value);
    out.push_back({id, ColumnKind::isolation(), value, config_.profile_seconds});

    // Kernel ids without replacement, intensities uniform; both fixed by
    // the pipeline seed and the app id.
    Rng rng(Rng::derive(config_.seed ^ (0x9E37ULL * (id + 1)), 0xFACE));
    std::vector<std::size_t> kernel_ids(config_.n_kernels);
    for (std::size_t k = 0; k < kernel_ids.size(); ++k) kernel_ids[k] = k;
    rng.shuffle(kernel_ids);

    for (std::size_t i = 0; i + 1 < n_runs && i < kernel_ids.size(); ++i) {
        const std::size_t kernel_id = kernel_ids[i];
        const int level = 1 + static_cast<int>(rng.uniform_index(config_.n_levels));
        const auto kernel = make_kernel_app(kernel_id, level, *cluster_);
        const double kv = world.measure_profile(spec, &kernel, config_.profile_seconds);
        // Column index: isolation + kernel_id * n_levels + (level - 1).
        const std::size_t col = 1 + kernel_id * config_.n_levels +
                                static_cast<std::size_t>(level - 1);
        matrix_.insert(*row, col, kv);
        out.push_back({id, ColumnKind::kernel(kernel_id, level), kv, config_.profile_seconds});
    }
    return out;
}

void StagedPipeline::refresh_estimates(std::size_t col_limit) {
    const std::size_t m = matrix_.row_count();
    const std::size_t d = matrix_.col_count();
    estimates_.assign(m * d, 0.0);
    column_done_.assign(d, 0);
    if (!model_) return;
    const std::size_t cols = std::min(col_limit, model_->col_count());
    for (std::size_t u = 0; u < m && u < model_->row_count(); ++u)
        for (std::size_t i = 0; i < cols; ++i)
            estimates_[u * d + i] = std::max(0.0, model_->estimate(u, i));
    for (const auto& [key, value] : matrix_.entries())
        if (key.second < cols) estimates_[key.first * d + key.second] = value;
    for (std::size_t i = 0; i < cols; ++i) column_done_[i] = 1;
}

void StagedPipeline::note_report(StageReport report) {
    entries_visited_ += report.entries_visited;
    ++version_;
    reports_.push_back(report);
}

StageReport StagedPipeline::run_sgd1() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t q = reference_width();
    for (std::size_t u = 0; u < matrix_.row_count(); ++u) {
        bool any = false;
        for (std::size_t i = 0; i < q && !any; ++i) any = matrix_.is_observed(u, i);
        if (!any)
            throw std::invalid_argument("run_sgd1: row " + std::to_string(u) +
                                        " has no reference observations");
    }

    std::vector<std::size_t> empty_rows;
    FactorModel init = impute_and_init(matrix_, config_.rank, q, &empty_rows);

    CellMask mask;
    for (const auto& [key, _] : matrix_.entries())
        if (key.second < q) mask.insert(key);

    // Sparse rows are imputation-dominated in the SVD; fold them into the
    // latent space by refitting their factors against the real observations.
    // The fit is anchored at the mean factor of the dense rows, so directions
    // the few observations cannot pin down stay at the population prior.
    std::map<std::size_t, std::vector<CellTarget>> row_targets;
    for (const auto& [key, value] : matrix_.entries())
        if (key.second < q) row_targets[key.first].push_back({key.first, key.second, value});
    std::vector<double> mean_factor(init.rank(), 0.0);
    std::size_t dense_rows = 0;
    for (std::size_t u = 0; u < matrix_.row_count(); ++u) {
        if (matrix_.row_density(u) < q / 2) continue;
        for (std::size_t j = 0; j < init.rank(); ++j) mean_factor[j] += init.row_factor(u)[j];
        ++dense_rows;
    }
    if (dense_rows > 0)
        for (auto& x : mean_factor) x /= static_cast<double>(dense_rows);
    for (auto& [row, targets] : row_targets) {
        if (targets.size() >= q / 2) continue;
        for (auto& t : targets) {
            double mean_est = 0.0;
            for (std::size_t j = 0; j < init.rank(); ++j)
                mean_est += mean_factor[j] * init.col_factor(t.col)[j];
            t.value -= mean_est;
        }
        fit_row_factor(init, row, targets, config_.sgd.lambda);
        for (std::size_t j = 0; j < init.rank(); ++j) init.row_factor(row)[j] += mean_factor[j];
    }

    SgdConfig cfg = config_.sgd;
    cfg.seed = Rng::derive(config_.seed, 0x501 + admission_counter_);
    SgdResult result = sgd_refine(matrix_, std::move(init), cfg, mask);
    model_ = std::move(result.model);
    refresh_estimates(q);
    stage_state_ = 1;

    StageReport report;
    report.stage = 1;
    report.iterations = result.iterations_used;
    report.columns_completed = q;
    report.entries_visited = result.entries_visited;
    report.wall_ms = wall_ms_since(t0);
    note_report(report);
    return report;
}

std::vector<std::size_t> StagedPipeline::profile_partial_placements(AppId id, World& world) {
    if (stage_state_ < 1) throw std::logic_error("run_sgd1 must complete before stage 2 profiling");
    const auto row = row_of(id);
    if (!row) throw std::invalid_argument("app not attached to the pipeline");

    std::vector<std::size_t> populated;
    Rng rng(Rng::derive(config_.seed ^ (0x51EDULL * (id + 1)), 0x2B + admission_counter_));
    for (std::size_t probe = 0; probe < config_.partial_placements; ++probe) {
        // Free cores at nominal level only; resident frequencies are not touched.
        std::vector<Slot> options;
        for (std::size_t sv = 0; sv < world.cluster().servers.size(); ++sv) {
            const auto& srv = world.cluster().servers[sv];
            for (std::size_t c = 0; c < srv.cores.size(); ++c)
                if (world.free_threads(sv, c) > 0)
                    options.push_back(Slot{sv, c, srv.freq_levels});
        }
        if (options.empty()) throw infeasible_error("no free core for partial placement");
        const Slot slot = options[rng.uniform_index(options.size())];

        world.assign(id, slot);
        const std::string mapping_id = canonical_mapping_id(world.assignments());
        const auto samples = world.run_interval(config_.profile_seconds);
        world.unassign(id);

        std::size_t col;
        if (auto existing = matrix_.find_placement_column(mapping_id)) {
            col = *existing;
        } else {
            const std::string ids[] = {mapping_id};
            matrix_.concat_placement_columns(ids);
            col = matrix_.col_count() - 1;
        }
        column_stamped_at_[mapping_id] = world.clock();
        for (const auto& [other, sample] : samples) {
            const auto other_slot = world.slot_of(other);
            const bool was_probe = other == id;
            if (!was_probe && (!other_slot || other_slot->server != slot.server)) continue;
            const auto other_row = row_of(other);
            if (!other_row) continue;
            matrix_.insert(*other_row, col, std::max(0.0, sample.measured));
        }
        populated.push_back(col);
    }
    ++admission_counter_;
    ++version_;
    return populated;
}

void StagedPipeline::concat_candidates(const std::vector<std::string>& mapping_ids) {
    std::vector<std::string> fresh;
    for (const auto& id : mapping_ids)
        if (!matrix_.find_placement_column(id)) fresh.push_back(id);
    if (!fresh.empty()) matrix_.concat_placement_columns(fresh);
}

StageReport StagedPipeline::run_sgd2() {
    if (stage_state_ < 1) throw std::logic_error("run_sgd2 requires run_sgd1 first");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t q = reference_width();
    const std::size_t d = matrix_.col_count();

    std::vector<std::size_t> observed_placement_cols;
    for (std::size_t i = q; i < d; ++i) {
        bool any = false;
        for (std::size_t u = 0; u < matrix_.row_count() && !any; ++u)
            any = matrix_.is_observed(u, i);
        if (any) observed_placement_cols.push_back(i);
    }
    if (observed_placement_cols.empty())
        throw std::logic_error("run_sgd2 requires at least one observed placement column");

    FactorModel model = *model_;
    model.extend_columns(d);
    // Warm-start factors of columns that gained observations: ridge fit
    // against the stage-1 row factors.
    for (std::size_t col : observed_placement_cols) {
        std::vector<CellTarget> column_targets;
        for (const auto& [key, value] : matrix_.entries())
            if (key.second == col) column_targets.push_back({key.first, key.second, value});
        fit_column_factor(model, col, column_targets, config_.sgd.lambda);
    }

    CellMask mask;
    std::set<std::size_t> observed_set(observed_placement_cols.begin(),
                                       observed_placement_cols.end());
    for (const auto& [key, _] : matrix_.entries())
        if (key.second < q || observed_set.count(key.second)) mask.insert(key);

    SgdConfig cfg = config_.sgd;
    cfg.seed = Rng::derive(config_.seed, 0x502 + admission_counter_);
    SgdResult result = sgd_refine(matrix_, std::move(model), cfg, mask);
    model_ = std::move(result.model);

    refresh_estimates(q); // reference estimates refresh
    const std::size_t m = matrix_.row_count();
    for (std::size_t col : observed_placement_cols) {
        for (std::size_t u = 0; u < m; ++u)
            estimates_[u * d + col] = std::max(0.0, model_->estimate(u, col));
        column_done_[col] = 1;
    }
    for (const auto& [key, value] : matrix_.entries())
        if (observed_set.count(key.second)) estimates_[key.first * d + key.second] = value;
    stage_state_ = 2;

    StageReport report;
    report.stage = 2;
    report.iterations = result.iterations_used;
    report.columns_completed = observed_placement_cols.size();
    report.entries_visited = result.entries_visited;
    report.wall_ms = wall_ms_since(t0);
    note_report(report);
    return report;
}

StageReport StagedPipeline::run_sgd3(std::uint64_t seed_salt) {
    if (stage_state_ < 2) throw std::logic_error("run_sgd3 requires run_sgd2 first");
    if (matrix_.entries().empty())
        throw std::logic_error("run_sgd3 on a matrix with no observations");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t q = reference_width();
    const std::size_t d = matrix_.col_count();
    const std::size_t m = matrix_.row_count();

    std::vector<std::size_t> zero_cols;
    for (std::size_t i = q; i < d; ++i) {
        bool any = false;
        for (std::size_t u = 0; u < m && !any; ++u) any = matrix_.is_observed(u, i);
        if (!any) zero_cols.push_back(i);
    }

    StageReport report;
    report.stage = 3;
    if (!zero_cols.empty()) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& [_, value] : matrix_.entries()) {
            lo = std::min(lo, value);
            hi = std::max(hi, value);
        }

        std::vector<CellTarget> targets;
        targets.reserve(matrix_.entries().size() + zero_cols.size() * m);
        for (const auto& [key, value] : matrix_.entries())
            targets.push_back({key.first, key.second, value});

        Rng rng(Rng::derive(config_.seed ^ seed_salt, 0x503 + admission_counter_));
        std::map<std::size_t, std::vector<CellTarget>> random_by_col;
        for (std::size_t col : zero_cols)
            for (std::size_t u = 0; u < m; ++u) {
                const CellTarget t{u, col, rng.uniform(lo, hi)};
                targets.push_back(t);
                random_by_col[col].push_back(t);
            }

        FactorModel model = *model_;
        model.extend_columns(d);
        // Warm-start the fresh columns against their initialization values,
        // mirroring the stage-2 ridge fit of observed columns.
        for (const auto& [col, column_targets] : random_by_col)
            fit_column_factor(model, col, column_targets, config_.sgd.lambda);

        SgdConfig cfg = config_.sgd;
        cfg.seed = Rng::derive(config_.seed ^ seed_salt, 0x504 + admission_counter_);
        SgdResult result = sgd_refine_targets(targets, std::move(model), cfg);
        model_ = std::move(result.model);

        report.iterations = result.iterations_used;
        report.columns_completed = zero_cols.size();
        report.entries_visited = result.entries_visited;
    }
    refresh_estimates(d);
    stage_state_ = 3;
    report.wall_ms = wall_ms_since(t0);
    note_report(report);
    return report;
}

void StagedPipeline::expire_columns_older_than(double cutoff) {
    std::set<std::string> keep;
    for (const auto& [key, _] : matrix_.entries()) {
        if (key.second < reference_width()) continue;
        const auto& id = matrix_.column(key.second).mapping_id;
        auto stamp = column_stamped_at_.find(id);
        if (stamp == column_stamped_at_.end() || stamp->second >= cutoff) keep.insert(id);
    }
    const bool changed = [&] {
        for (std::size_t i = reference_width(); i < matrix_.col_count(); ++i)
            if (!keep.count(matrix_.column(i).mapping_id)) return true;
        return false;
    }();
    if (!changed) return;
    matrix_.retain_placement_columns(keep);
    ++version_;
    estimates_.clear();
    column_done_.assign(matrix_.col_count(), 0);
    if (model_) {
        FactorModel trimmed(matrix_.row_count(), 0, model_->rank());
        for (std::size_t u = 0; u < matrix_.row_count(); ++u)
            for (std::size_t j = 0; j < model_->rank(); ++j)
                trimmed.row_factor(u)[j] = model_->row_factor(u)[j];
        model_ = std::move(trimmed);
        stage_state_ = 0;
    }
}

void StagedPipeline::prune_unobserved_candidates() {
    std::set<std::string> keep;
    for (const auto& [key, _] : matrix_.entries()) {
        if (key.second < reference_width()) continue;
        keep.insert(matrix_.column(key.second).mapping_id);
    }
    matrix_.retain_placement_columns(keep);
    ++version_;
    // Column indices moved; stage 3 must rerun before estimates are valid.
    estimates_.clear();
    column_done_.assign(matrix_.col_count(), 0);
    if (model_) {
        FactorModel trimmed(matrix_.row_count(), 0, model_->rank());
        for (std::size_t u = 0; u < matrix_.row_count(); ++u)
            for (std::size_t j = 0; j < model_->rank(); ++j)
                trimmed.row_factor(u)[j] = model_->row_factor(u)[j];
        model_ = std::move(trimmed);
        stage_state_ = 0;
    }
}

void StagedPipeline::replace_column(const std::string& mapping_id,
                                    const std::map<AppId, double>& measurements, double at) {
    column_stamped_at_[mapping_id] = at;
    std::size_t col;
    if (auto existing = matrix_.find_placement_column(mapping_id)) {
        col = *existing;
        matrix_.clear_column(col);
    } else {
        const std::string ids[] = {mapping_id};
        matrix_.concat_placement_columns(ids);
        col = matrix_.col_count() - 1;
    }
    for (const auto& [app, value] : measurements) {
        const auto row = row_of(app);
        if (!row) continue;
        matrix_.insert(*row, col, std::max(0.0, value));
    }
    ++version_;
}

bool StagedPipeline::column_estimated(std::size_t col) const {
    return col < column_done_.size() && column_done_[col] != 0;
}

double StagedPipeline::estimate(std::size_t row, std::size_t col) const {
    if (row >= matrix_.row_count() || col >= matrix_.col_count())
        throw std::out_of_range("estimate: cell out of range");
    if (!column_estimated(col))
        throw std::logic_error("estimate: column not completed by the stages run so far");
    ++query_count_;
    return estimates_[row * matrix_.col_count() + col];
}

std::optional<double> StagedPipeline::estimate_for_app(AppId id, std::size_t col) const {
    const auto row = row_of(id);
    if (!row || !column_estimated(col)) return std::nullopt;
    ++query_count_;
    return estimates_[*row * matrix_.col_count() + col];
}

double StagedPipeline::isolation_estimate(AppId id) const {
    const auto row = row_of(id);
    if (!row) throw std::invalid_argument("app not attached");
    if (!column_estimated(0)) throw std::logic_error("reference block not completed");
    ++query_count_;
    return estimates_[*row * matrix_.col_count()];
}

ResourceVector StagedPipeline::sensitivity_readout(AppId id) const {
    const auto row = row_of(id);
    if (!row) throw std::invalid_argument("app not attached");
    if (!column_estimated(0)) throw std::logic_error("reference block not completed");
    ++query_count_;

    const std::size_t d = matrix_.col_count();
    const double iso = std::max(estimates_[*row * d], kPerfFloor);
    ResourceVector readout{};
    for (std::size_t k = 0; k < config_.n_kernels && k < kResourceDims; ++k) {
        // Least-squares slope of est/iso against intensity fraction; the
        // negated slope is the sensitivity in that dimension.
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        const auto n = static_cast<double>(config_.n_levels);
        for (std::size_t l = 1; l <= config_.n_levels; ++l) {
            const std::size_t col = 1 + k * config_.n_levels + (l - 1);
            const double x = static_cast<double>(l) / 10.0;
            const double y = estimates_[*row * d + col] / iso;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double denom = n * sxx - sx * sx;
        const double slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
        readout[k] = std::clamp(-slope, 0.0, 1.0);
    }
    return readout;
}

void StagedPipeline::dump_stage_log(std::ostream& os) const {
    os << "stage,iterations,error,wall_ms\n";
    os.precision(10);
    for (const auto& r : reports_) {
        os << r.stage << "," << r.iterations << ",";
        if (r.holdout_error) os << *r.holdout_error;
        os << "," << r.wall_ms << "\n";
    }
}

double ModelEstimateProvider::slot_speed_scale(AppId app, const Slot& slot) const {
    const auto& srv = cluster_->servers.at(slot.server);
    const std::size_t cls = srv.cores.at(slot.core);
    const auto& cc = cluster_->core_classes[cls];
    const double freq = cluster_->level_ghz(cls, srv.freq_levels, slot.freq_level);
    const auto& prof = cluster_->core_classes.at(cluster_->profiling_core_class);
    const double speed_ratio = (freq * cc.ipc) / (prof.nominal_ghz * prof.ipc);
    return std::pow(speed_ratio, freq_response(app));
}

double ModelEstimateProvider::corunner_discount(AppId app,
                                                const std::map<AppId, Slot>& assignments,
                                                const Slot& slot) const {
    const ResourceVector s = pipeline_->sensitivity_readout(app);
    ResourceVector total{};
    for (const auto& [other, other_slot] : assignments) {
        if (other == app || other_slot.server != slot.server) continue;
        const auto other_row = pipeline_->row_of(other);
        if (!other_row) continue;
        // Sensitivity doubles as the pressure proxy; the two are correlated
        // for real workloads.
        const ResourceVector proxy = pipeline_->sensitivity_readout(other);
        const bool same_core = other_slot.core == slot.core;
        for (std::size_t r = 0; r < kResourceDims; ++r) {
            if (r == kDimCpu && !same_core) continue;
            total[r] += proxy[r];
        }
    }
    double discount = 1.0;
    for (std::size_t r = 0; r < kResourceDims; ++r)
        discount *= std::max(0.05, 1.0 - s[r] * std::min(1.0, total[r]));
    return discount;
}

double ModelEstimateProvider::freq_response(AppId app) const {
    auto cached = freq_cache_.find(app);
    if (cached != freq_cache_.end() && cached->second.first == pipeline_->version())
        return cached->second.second;

    double phi = pipeline_->sensitivity_readout(app)[kDimCpu];
    const auto row = pipeline_->row_of(app);
    if (row) {
        // Calibrate against placement observations on slots whose speed
        // differs from the profiling platform.
        const auto& matrix = pipeline_->matrix();
        const auto& prof = cluster_->core_classes.at(cluster_->profiling_core_class);
        const double ref_speed = prof.nominal_ghz * prof.ipc;
        const double iso = std::max(pipeline_->isolation_estimate(app), kPerfFloor);
        std::vector<double> samples;
        for (const auto& [key, value] : matrix.entries()) {
            if (key.first != *row || key.second < matrix.reference_width()) continue;
            std::map<AppId, Slot> assignments;
            try {
                assignments = parse_mapping_id(matrix.column(key.second).mapping_id);
            } catch (const std::invalid_argument&) {
                continue;
            }
            auto it = assignments.find(app);
            if (it == assignments.end()) continue;
            const Slot& slot = it->second;
            const auto& srv = cluster_->servers.at(slot.server);
            const std::size_t cls = srv.cores.at(slot.core);
            const auto& cc = cluster_->core_classes[cls];
            const double freq = cluster_->level_ghz(cls, srv.freq_levels, slot.freq_level);
            const double log_ratio = std::log((freq * cc.ipc) / ref_speed);
            if (std::abs(log_ratio) < 0.05) continue;
            const double discount = corunner_discount(app, assignments, slot);
            const double observed = std::max(value, kPerfFloor);
            const double sample = std::log(observed / (iso * discount)) / log_ratio;
            if (std::isfinite(sample)) samples.push_back(std::clamp(sample, 0.0, 1.0));
        }
        if (!samples.empty()) {
            std::sort(samples.begin(), samples.end());
            phi = samples[samples.size() / 2];
        }
    }
    freq_cache_[app] = {pipeline_->version(), phi};
    return phi;
}

double ModelEstimateProvider::isolation_only_estimate(AppId app, const Slot& slot) const {
    return std::max(kPerfFloor,
                    pipeline_->isolation_estimate(app) * slot_speed_scale(app, slot));
}

std::optional<double> ModelEstimateProvider::column_backed_estimate(
    AppId app, const PlacementMapping& mapping) const {
    const auto col = pipeline_->matrix().find_placement_column(mapping.mapping_id());
    if (!col) return std::nullopt;
    const auto row = pipeline_->row_of(app);
    if (!row || !pipeline_->matrix().is_observed(*row, *col)) return std::nullopt;
    if (auto v = pipeline_->estimate_for_app(app, *col)) return std::max(*v, kPerfFloor);
    return std::nullopt;
}

double ModelEstimateProvider::composed_estimate(AppId app,
                                                const PlacementMapping& mapping) const {
    auto it = mapping.assignments.find(app);
    if (it == mapping.assignments.end())
        throw std::invalid_argument("mapping does not place the app");
    const Slot& slot = it->second;
    const double estimate = pipeline_->isolation_estimate(app) * slot_speed_scale(app, slot) *
                            corunner_discount(app, mapping.assignments, slot);
    return std::max(estimate, kPerfFloor);
}

double ModelEstimateProvider::mapping_estimate(AppId app, const PlacementMapping& mapping) const {
    // A column with real observations answers from the completed matrix;
    // hypothetical mappings are composed from the inferred sensitivities.
    if (auto v = column_backed_estimate(app, mapping)) return *v;
    return composed_estimate(app, mapping);
}

} // namespace latsched
