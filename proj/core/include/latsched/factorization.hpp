#pragma once

#include "latsched/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace latsched {

/// Rank-r latent factor pair: one factor vector per application row and one
/// per matrix column. An entry estimate is the dot product of the two.
class FactorModel {
public:
    FactorModel() = default;
    FactorModel(std::size_t rows, std::size_t cols, std::size_t rank)
        : rows_(rows), cols_(cols), rank_(rank),
          row_factors_(rows * rank, 0.0), col_factors_(cols * rank, 0.0) {}

    std::size_t row_count() const { return rows_; }
    std::size_t col_count() const { return cols_; }
    std::size_t rank() const { return rank_; }

    std::span<double> row_factor(std::size_t u) {
        return {row_factors_.data() + u * rank_, rank_};
    }
    std::span<const double> row_factor(std::size_t u) const {
        return {row_factors_.data() + u * rank_, rank_};
    }
    std::span<double> col_factor(std::size_t i) {
        return {col_factors_.data() + i * rank_, rank_};
    }
    std::span<const double> col_factor(std::size_t i) const {
        return {col_factors_.data() + i * rank_, rank_};
    }

    double estimate(std::size_t u, std::size_t i) const {
        const double* q = row_factors_.data() + u * rank_;
        const double* p = col_factors_.data() + i * rank_;
        double s = 0.0;
        for (std::size_t j = 0; j < rank_; ++j) s += q[j] * p[j];
        return s;
    }

    /// Grows the column side to new_cols; new factors are zero until the
    /// caller initializes them (see fit_column_factor).
    void extend_columns(std::size_t new_cols);

    /// Adds a row with a zero factor; returns its index.
    std::size_t extend_rows();

    std::vector<double>& raw_row_factors() { return row_factors_; }
    std::vector<double>& raw_col_factors() { return col_factors_; }
    const std::vector<double>& raw_row_factors() const { return row_factors_; }
    const std::vector<double>& raw_col_factors() const { return col_factors_; }

    bool operator==(const FactorModel&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t rank_ = 0;
    std::vector<double> row_factors_; // rows x rank
    std::vector<double> col_factors_; // cols x rank
};

/// Truncation rule for the SVD initialization: keep the smallest rank whose
/// singular values capture at least `energy_fraction` of the cumulative
/// singular-value mass, capped at min(max_rank, m, d). The mass is measured
/// on sigma rather than sigma^2: observation tables carry a dominant mean
/// component that would otherwise swallow the threshold at rank 1.
///
/// The initialization iterates the impute -> truncated-SVD cycle until the
/// imputed cells stabilize (single-pass column-mean imputation leaves too
/// much bias at low densities for the diminishing-step SGD to remove).
/// Fully observed matrices converge after the first round.
struct RankPolicy {
    double energy_fraction = 0.95;
    std::size_t max_rank = 10;
    std::size_t impute_rounds = 40;  // cap on impute/SVD cycles
    double impute_tol = 2e-3;        // relative change on imputed cells to stop
};

struct SgdConfig {
    double lambda = 0.05;             // regularization; also anchors the eta = lambda/k schedule
    std::size_t max_iterations = 500; // epoch cap
    double convergence_tol = 1e-3;    // relative RMSE change threshold
    std::size_t convergence_window = 10;
    std::uint64_t seed = 0;
    // Schedule continuation: epoch k of this run uses eta = lambda/(offset+k).
    // Later pipeline stages continue the trajectory instead of re-heating a
    // converged model back to eta = lambda.
    std::size_t epoch_offset = 0;
    std::size_t rmse_guard_factor = 1000000; // divergence if rmse exceeds guard * initial
};

struct SgdResult {
    FactorModel model;
    std::size_t iterations_used = 0;
    double final_rmse = 0.0;
    std::vector<double> rmse_trace;       // one value per epoch
    std::uint64_t entries_visited = 0;    // instrumented per-epoch work counter
};

/// A single fitting target: the model is pulled toward value at (row, col).
struct CellTarget {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Learning-rate schedule eta = lambda / k for epoch k >= 1.
double learning_rate(double lambda, std::size_t k);

/// One SGD update on the residual eps = observed - q.p. Both factor updates
/// read the pre-update values (simultaneous-update convention).
void sgd_step(std::span<double> row_factor, std::span<double> col_factor,
              double observed, double eta, double lambda);

/// Mean-imputes missing cells (column mean of observed values, global mean
/// for empty columns), runs a truncated SVD and packs U / Sigma*V^T into a
/// FactorModel. Rows with zero observations are reported through `empty_rows`
/// if given. `col_limit` restricts the factorization to the first columns
/// (used for reference-block-only initialization); 0 means all columns.
FactorModel impute_and_init(const UtilityMatrix& matrix, const RankPolicy& policy,
                            std::size_t col_limit = 0,
                            std::vector<std::size_t>* empty_rows = nullptr);

/// Epoch-based SGD over explicit targets, seed-deterministic shuffled order,
/// eta = lambda/k. Stops when the relative RMSE change over the convergence
/// window drops below the tolerance or at max_iterations.
SgdResult sgd_refine_targets(const std::vector<CellTarget>& targets, FactorModel model,
                             const SgdConfig& config);

/// As sgd_refine_targets, pulling targets from the matrix under `mask`
/// (which must be a subset of the observed mask).
SgdResult sgd_refine(const UtilityMatrix& matrix, FactorModel model,
                     const SgdConfig& config, const CellMask& mask);

/// Lock-free multi-worker refinement over shared factors. workers == 1 is
/// bit-identical to sgd_refine; workers > 1 trades determinism for speed and
/// must land within a few percent of the serial objective.
SgdResult parallel_sgd_refine(const UtilityMatrix& matrix, FactorModel model,
                              const SgdConfig& config, const CellMask& mask,
                              std::size_t workers);
SgdResult parallel_sgd_refine_targets(const std::vector<CellTarget>& targets,
                                      FactorModel model, const SgdConfig& config,
                                      std::size_t workers);

/// Dense m x d table of model estimates. With `preserve_observed`, observed
/// matrix cells keep their measured values instead of the model estimate.
std::vector<double> reconstruct(const FactorModel& model);
std::vector<double> reconstruct_preserving(const FactorModel& model,
                                           const UtilityMatrix& matrix);

/// Ridge fit of a single column factor against fixed row factors. Used to
/// warm-start factors of columns that gained their first observations after
/// the SVD initialization.
void fit_column_factor(FactorModel& model, std::size_t col,
                       const std::vector<CellTarget>& column_targets, double lambda);

/// Ridge fit of a single row factor against fixed column factors (fold-in).
/// Sparse rows are dominated by imputation during initialization; refitting
/// them against their few real observations projects the application into
/// the latent space the dense rows established.
void fit_row_factor(FactorModel& model, std::size_t row,
                    const std::vector<CellTarget>& row_targets, double lambda);

/// CSV dump of the per-epoch RMSE trace: "epoch,rmse".
void dump_rmse_trace(const SgdResult& result, std::ostream& os);

} // namespace latsched
