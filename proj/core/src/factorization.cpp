#include "latsched/factorization.hpp"

#include "latsched/errors.hpp"
#include "latsched/rng.hpp"
#include "latsched/svd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>

namespace latsched {

void FactorModel::extend_columns(std::size_t new_cols) {
    if (new_cols < cols_) throw std::invalid_argument("extend_columns cannot shrink the model");
    col_factors_.resize(new_cols * rank_, 0.0);
    cols_ = new_cols;
}

std::size_t FactorModel::extend_rows() {
    row_factors_.resize((rows_ + 1) * rank_, 0.0);
    return rows_++;
}

double learning_rate(double lambda, std::size_t k) {
    if (lambda <= 0.0) throw std::invalid_argument("learning_rate requires lambda > 0");
    if (k == 0) throw std::invalid_argument("learning_rate requires k >= 1");
    return lambda / static_cast<double>(k);
}

void sgd_step(std::span<double> row_factor, std::span<double> col_factor,
              double observed, double eta, double lambda) {
    if (!std::isfinite(observed) || !std::isfinite(eta) || !std::isfinite(lambda) ||
        eta < 0.0 || lambda < 0.0)
        throw numeric_error("sgd_step: non-finite or negative inputs");
    const std::size_t r = row_factor.size();
    double eps = observed;
    for (std::size_t j = 0; j < r; ++j) eps -= row_factor[j] * col_factor[j];
    if (!std::isfinite(eps)) throw numeric_error("sgd_step: non-finite factors");
    // Both updates read the pre-update factors.
    for (std::size_t j = 0; j < r; ++j) {
        const double q = row_factor[j];
        const double p = col_factor[j];
        row_factor[j] = q + eta * (2.0 * eps * p - lambda * q);
        col_factor[j] = p + eta * (2.0 * eps * q - lambda * p);
    }
}

FactorModel impute_and_init(const UtilityMatrix& matrix, const RankPolicy& policy,
                            std::size_t col_limit, std::vector<std::size_t>* empty_rows) {
    const std::size_t m = matrix.row_count();
    const std::size_t d = col_limit == 0 ? matrix.col_count() : col_limit;
    if (m == 0 || d == 0 || matrix.entries().empty())
        throw std::invalid_argument("impute_and_init requires a non-empty matrix");
    if (d > matrix.col_count()) throw std::out_of_range("col_limit exceeds column count");

    std::vector<double> col_sum(d, 0.0);
    std::vector<std::size_t> col_n(d, 0);
    std::vector<std::size_t> row_n(m, 0);
    double global_sum = 0.0;
    std::size_t global_n = 0;
    for (const auto& [key, value] : matrix.entries()) {
        if (key.second >= d) continue;
        col_sum[key.second] += value;
        ++col_n[key.second];
        ++row_n[key.first];
        global_sum += value;
        ++global_n;
    }
    if (global_n == 0)
        throw std::invalid_argument("impute_and_init: no observations within col_limit");
    const double global_mean = global_sum / static_cast<double>(global_n);

    if (empty_rows) {
        empty_rows->clear();
        for (std::size_t u = 0; u < m; ++u)
            if (row_n[u] == 0) empty_rows->push_back(u);
    }

    std::vector<double> dense(m * d);
    for (std::size_t i = 0; i < d; ++i) {
        const double fill = col_n[i] > 0 ? col_sum[i] / static_cast<double>(col_n[i])
                                         : global_mean;
        for (std::size_t u = 0; u < m; ++u) dense[u * d + i] = fill;
    }
    for (const auto& [key, value] : matrix.entries())
        if (key.second < d) dense[key.first * d + key.second] = value;

    const std::size_t cap = std::min({policy.max_rank, m, d});
    SvdResult svd;
    std::size_t rank = 1;
    for (std::size_t round = 0; round < std::max<std::size_t>(policy.impute_rounds, 1);
         ++round) {
        svd = jacobi_svd(dense, m, d);
        double total_energy = 0.0;
        for (double s : svd.sigma) total_energy += s;
        rank = 1;
        double cum = 0.0;
        for (std::size_t j = 0; j < svd.p; ++j) {
            cum += svd.sigma[j];
            rank = j + 1;
            if (rank >= cap ||
                (total_energy > 0.0 && cum / total_energy >= policy.energy_fraction))
                break;
        }
        rank = std::min(rank, cap);

        // Re-impute missing cells with the truncated reconstruction.
        double delta_sq = 0.0, norm_sq = 0.0;
        for (std::size_t u = 0; u < m; ++u)
            for (std::size_t i = 0; i < d; ++i) {
                if (matrix.is_observed(u, i)) continue;
                double rec = 0.0;
                for (std::size_t j = 0; j < rank; ++j)
                    rec += svd.u[u * svd.p + j] * svd.sigma[j] * svd.v[i * svd.p + j];
                const double old = dense[u * d + i];
                delta_sq += (rec - old) * (rec - old);
                norm_sq += rec * rec;
                dense[u * d + i] = rec;
            }
        if (norm_sq == 0.0 || std::sqrt(delta_sq / norm_sq) < policy.impute_tol) break;
    }

    // Balanced square-root split of U * Sigma * V^T: identical estimates to
    // the plain U | Sigma*V^T pairing, but the per-side factor norms match,
    // which the eta = lambda/k SGD needs to stay stable.
    FactorModel model(m, d, rank);
    for (std::size_t u = 0; u < m; ++u)
        for (std::size_t j = 0; j < rank; ++j)
            model.row_factor(u)[j] = svd.u[u * svd.p + j] * std::sqrt(svd.sigma[j]);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < rank; ++j)
            model.col_factor(i)[j] = std::sqrt(svd.sigma[j]) * svd.v[i * svd.p + j];
    return model;
}

namespace {

double rmse_over(const std::vector<CellTarget>& targets, const FactorModel& model) {
    if (targets.empty()) return 0.0;
    double sq = 0.0;
    for (const auto& t : targets) {
        const double eps = t.value - model.estimate(t.row, t.col);
        sq += eps * eps;
    }
    return std::sqrt(sq / static_cast<double>(targets.size()));
}

bool converged(const std::vector<double>& trace, const SgdConfig& cfg) {
    // Window means rather than point samples: epoch reshuffling keeps a
    // jitter floor on the raw trace that never sinks below the tolerance.
    const std::size_t w = cfg.convergence_window;
    if (trace.size() < 2 * w) return false;
    double last = 0.0, prev = 0.0;
    for (std::size_t i = trace.size() - w; i < trace.size(); ++i) last += trace[i];
    for (std::size_t i = trace.size() - 2 * w; i < trace.size() - w; ++i) prev += trace[i];
    last /= static_cast<double>(w);
    prev /= static_cast<double>(w);
    const double denom = std::max(std::abs(prev), 1e-300);
    return std::abs(last - prev) / denom < cfg.convergence_tol;
}

} // namespace

SgdResult sgd_refine_targets(const std::vector<CellTarget>& targets, FactorModel model,
                             const SgdConfig& config) {
    if (config.lambda <= 0.0) throw std::invalid_argument("SgdConfig.lambda must be > 0");
    if (config.max_iterations < 1)
        throw std::invalid_argument("SgdConfig.max_iterations must be >= 1");
    if (config.convergence_tol <= 0.0)
        throw std::invalid_argument("SgdConfig.convergence_tol must be > 0");

    SgdResult result;
    if (targets.empty()) {
        result.model = std::move(model);
        return result;
    }
    for (const auto& t : targets) {
        if (t.row >= model.row_count() || t.col >= model.col_count())
            throw std::out_of_range("sgd target outside the model");
        if (!std::isfinite(t.value)) throw numeric_error("sgd target value not finite");
    }

    // Refine in value-RMS-normalized space so the lambda/k schedule is
    // scale-free; the returned factors and the trace are in original units.
    double value_rms = 0.0;
    for (const auto& t : targets) value_rms += t.value * t.value;
    value_rms = std::sqrt(value_rms / static_cast<double>(targets.size()));
    const double scale = value_rms > 0.0 ? value_rms : 1.0;
    const double sqrt_scale = std::sqrt(scale);
    std::vector<CellTarget> scaled = targets;
    for (auto& t : scaled) t.value /= scale;
    for (double& x : model.raw_col_factors()) x /= sqrt_scale;
    for (double& x : model.raw_row_factors()) x /= sqrt_scale;

    const double initial_rmse = rmse_over(scaled, model);
    const double guard =
        static_cast<double>(config.rmse_guard_factor) * std::max(initial_rmse, 1.0);

    std::vector<std::size_t> order(scaled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t k = 1; k <= config.max_iterations; ++k) {
        const double eta = learning_rate(config.lambda, config.epoch_offset + k);
        Rng rng(Rng::derive(config.seed, k));
        rng.shuffle(order);
        for (std::size_t idx : order) {
            const auto& t = scaled[idx];
            sgd_step(model.row_factor(t.row), model.col_factor(t.col), t.value, eta,
                     config.lambda);
        }
        result.entries_visited += scaled.size();
        const double rmse = rmse_over(scaled, model);
        result.rmse_trace.push_back(rmse * scale);
        result.iterations_used = k;
        if (!std::isfinite(rmse) || rmse > guard)
            throw numeric_error("sgd diverged at epoch " + std::to_string(k));
        if (converged(result.rmse_trace, config)) break;
    }

    for (double& x : model.raw_col_factors()) x *= sqrt_scale;
    for (double& x : model.raw_row_factors()) x *= sqrt_scale;
    result.final_rmse = result.rmse_trace.back();
    result.model = std::move(model);
    return result;
}

namespace {

std::vector<CellTarget> targets_from_mask(const UtilityMatrix& matrix, const CellMask& mask) {
    std::vector<CellTarget> targets;
    targets.reserve(mask.size());
    for (const auto& [row, col] : mask) {
        const auto v = matrix.value_at(row, col);
        if (!v) throw std::invalid_argument("target mask includes an unobserved cell");
        targets.push_back({row, col, *v});
    }
    return targets;
}

} // namespace

SgdResult sgd_refine(const UtilityMatrix& matrix, FactorModel model,
                     const SgdConfig& config, const CellMask& mask) {
    return sgd_refine_targets(targets_from_mask(matrix, mask), std::move(model), config);
}

SgdResult parallel_sgd_refine_targets(const std::vector<CellTarget>& targets,
                                      FactorModel model, const SgdConfig& config,
                                      std::size_t workers) {
    if (workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (workers == 1 || targets.size() < 2 * workers)
        return sgd_refine_targets(targets, std::move(model), config);

    for (const auto& t : targets) {
        if (t.row >= model.row_count() || t.col >= model.col_count())
            throw std::out_of_range("sgd target outside the model");
        if (!std::isfinite(t.value)) throw numeric_error("sgd target value not finite");
    }

    SgdResult result;
    double value_rms = 0.0;
    for (const auto& t : targets) value_rms += t.value * t.value;
    value_rms = std::sqrt(value_rms / static_cast<double>(targets.size()));
    const double scale = value_rms > 0.0 ? value_rms : 1.0;
    const double sqrt_scale = std::sqrt(scale);
    std::vector<CellTarget> scaled = targets;
    for (auto& t : scaled) t.value /= scale;
    for (double& x : model.raw_col_factors()) x /= sqrt_scale;
    for (double& x : model.raw_row_factors()) x /= sqrt_scale;

    const double initial_rmse = rmse_over(scaled, model);
    const double guard =
        static_cast<double>(config.rmse_guard_factor) * std::max(initial_rmse, 1.0);
    const std::size_t rank = model.rank();
    double* rowf = model.raw_row_factors().data();
    double* colf = model.raw_col_factors().data();

    std::vector<std::size_t> order(scaled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    // Workers update the shared factor arrays without locks; concurrent
    // readers may observe a bounded number of in-flight updates. atomic_ref
    // with relaxed ordering keeps the races defined without serializing.
    auto apply_range = [&](std::size_t lo, std::size_t hi, double eta) {
        double q[16], p[16];
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& t = scaled[order[i]];
            double* qp = rowf + t.row * rank;
            double* pp = colf + t.col * rank;
            double eps = t.value;
            for (std::size_t j = 0; j < rank; ++j) {
                q[j] = std::atomic_ref<double>(qp[j]).load(std::memory_order_relaxed);
                p[j] = std::atomic_ref<double>(pp[j]).load(std::memory_order_relaxed);
                eps -= q[j] * p[j];
            }
            for (std::size_t j = 0; j < rank; ++j) {
                std::atomic_ref<double>(qp[j]).store(
                    q[j] + eta * (2.0 * eps * p[j] - config.lambda * q[j]),
                    std::memory_order_relaxed);
                std::atomic_ref<double>(pp[j]).store(
                    p[j] + eta * (2.0 * eps * q[j] - config.lambda * p[j]),
                    std::memory_order_relaxed);
            }
        }
    };

    for (std::size_t k = 1; k <= config.max_iterations; ++k) {
        const double eta = learning_rate(config.lambda, config.epoch_offset + k);
        Rng rng(Rng::derive(config.seed, k));
        rng.shuffle(order);
        const std::size_t chunk = (scaled.size() + workers - 1) / workers;
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(scaled.size(), lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(apply_range, lo, hi, eta);
        }
        for (auto& th : pool) th.join();

        result.entries_visited += scaled.size();
        const double rmse = rmse_over(scaled, model);
        result.rmse_trace.push_back(rmse * scale);
        result.iterations_used = k;
        if (!std::isfinite(rmse) || rmse > guard)
            throw numeric_error("parallel sgd diverged at epoch " + std::to_string(k));
        if (converged(result.rmse_trace, config)) break;
    }

    for (double& x : model.raw_col_factors()) x *= sqrt_scale;
    for (double& x : model.raw_row_factors()) x *= sqrt_scale;
    result.final_rmse = result.rmse_trace.empty() ? 0.0 : result.rmse_trace.back();
    result.model = std::move(model);
    return result;
}

SgdResult parallel_sgd_refine(const UtilityMatrix& matrix, FactorModel model,
                              const SgdConfig& config, const CellMask& mask,
                              std::size_t workers) {
    return parallel_sgd_refine_targets(targets_from_mask(matrix, mask), std::move(model),
                                       config, workers);
}

std::vector<double> reconstruct(const FactorModel& model) {
    std::vector<double> table(model.row_count() * model.col_count());
    for (std::size_t u = 0; u < model.row_count(); ++u)
        for (std::size_t i = 0; i < model.col_count(); ++i)
            table[u * model.col_count() + i] = model.estimate(u, i);
    return table;
}

std::vector<double> reconstruct_preserving(const FactorModel& model,
                                           const UtilityMatrix& matrix) {
    auto table = reconstruct(model);
    const std::size_t d = model.col_count();
    for (const auto& [key, value] : matrix.entries())
        if (key.first < model.row_count() && key.second < d)
            table[key.first * d + key.second] = value;
    return table;
}

namespace {

// Ridge normal equations (sum f f^T + lambda I) x = sum f v, solved by
// Gaussian elimination with partial pivoting; rank <= 10 at desk scale.
// The ridge term scales with the Gram trace: near-collinear factor sets
// would otherwise produce solutions large enough to destabilize SGD.
void ridge_solve(std::span<double> out, const std::vector<std::span<const double>>& factors,
                 const std::vector<double>& values, double lambda) {
    const std::size_t r = out.size();
    if (r == 0) return;
    std::vector<double> a(r * r, 0.0), b(r, 0.0);
    for (std::size_t t = 0; t < factors.size(); ++t) {
        const auto f = factors[t];
        for (std::size_t j = 0; j < r; ++j) {
            b[j] += f[j] * values[t];
            for (std::size_t l = 0; l < r; ++l) a[j * r + l] += f[j] * f[l];
        }
    }
    double trace = 0.0;
    for (std::size_t j = 0; j < r; ++j) trace += a[j * r + j];
    const double ridge =
        std::max({lambda, 1e-2 * trace / static_cast<double>(r), 1e-9});
    for (std::size_t j = 0; j < r; ++j) a[j * r + j] += ridge;
    for (std::size_t j = 0; j < r; ++j) {
        std::size_t piv = j;
        for (std::size_t i = j + 1; i < r; ++i)
            if (std::abs(a[i * r + j]) > std::abs(a[piv * r + j])) piv = i;
        if (piv != j) {
            for (std::size_t l = 0; l < r; ++l) std::swap(a[j * r + l], a[piv * r + l]);
            std::swap(b[j], b[piv]);
        }
        const double diag = a[j * r + j];
        if (std::abs(diag) < 1e-300) continue;
        for (std::size_t i = j + 1; i < r; ++i) {
            const double f = a[i * r + j] / diag;
            for (std::size_t l = j; l < r; ++l) a[i * r + l] -= f * a[j * r + l];
            b[i] -= f * b[j];
        }
    }
    for (std::size_t j = r; j-- > 0;) {
        double s = b[j];
        for (std::size_t l = j + 1; l < r; ++l) s -= a[j * r + l] * out[l];
        const double diag = a[j * r + j];
        out[j] = std::abs(diag) < 1e-300 ? 0.0 : s / diag;
    }
}

} // namespace

void fit_column_factor(FactorModel& model, std::size_t col,
                       const std::vector<CellTarget>& column_targets, double lambda) {
    std::vector<std::span<const double>> factors;
    std::vector<double> values;
    factors.reserve(column_targets.size());
    for (const auto& t : column_targets) {
        factors.push_back(model.row_factor(t.row));
        values.push_back(t.value);
    }
    ridge_solve(model.col_factor(col), factors, values, lambda);
}

void fit_row_factor(FactorModel& model, std::size_t row,
                    const std::vector<CellTarget>& row_targets, double lambda) {
    std::vector<std::span<const double>> factors;
    std::vector<double> values;
    factors.reserve(row_targets.size());
    for (const auto& t : row_targets) {
        factors.push_back(model.col_factor(t.col));
        values.push_back(t.value);
    }
    ridge_solve(model.row_factor(row), factors, values, lambda);
}

void dump_rmse_trace(const SgdResult& result, std::ostream& os) {
    os << "epoch,rmse\n";
    os.precision(10);
    for (std::size_t k = 0; k < result.rmse_trace.size(); ++k)
        os << (k + 1) << "," << result.rmse_trace[k] << "\n";
}

} // namespace latsched
