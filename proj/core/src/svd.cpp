#include "latsched/svd.hpp"

#include "latsched/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace latsched {

namespace {

// One-sided Jacobi on a tall matrix (rows >= cols): orthogonalize column
// pairs of W until the Gram matrix is diagonal. W starts as A and ends as
// U * diag(sigma); the accumulated rotations form V.
struct OneSided {
    std::size_t rows, cols;
    std::vector<double> w; // rows x cols, row-major
    std::vector<double> v; // cols x cols, row-major
    std::size_t sweeps = 0;

    OneSided(std::vector<double> a, std::size_t r, std::size_t c)
        : rows(r), cols(c), w(std::move(a)), v(c * c, 0.0) {
        for (std::size_t i = 0; i < cols; ++i) v[i * cols + i] = 1.0;
    }

    double dot_cols(std::size_t p, std::size_t q) const {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += w[i * cols + p] * w[i * cols + q];
        return s;
    }

    void rotate(std::size_t p, std::size_t q, double c, double s) {
        for (std::size_t i = 0; i < rows; ++i) {
            double wp = w[i * cols + p], wq = w[i * cols + q];
            w[i * cols + p] = c * wp - s * wq;
            w[i * cols + q] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < cols; ++i) {
            double vp = v[i * cols + p], vq = v[i * cols + q];
            v[i * cols + p] = c * vp - s * vq;
            v[i * cols + q] = s * vp + c * vq;
        }
    }

    void run(double tol, std::size_t max_sweeps) {
        for (sweeps = 0; sweeps < max_sweeps; ++sweeps) {
            bool converged = true;
            for (std::size_t p = 0; p + 1 < cols; ++p) {
                for (std::size_t q = p + 1; q < cols; ++q) {
                    const double app = dot_cols(p, p);
                    const double aqq = dot_cols(q, q);
                    const double apq = dot_cols(p, q);
                    if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
                    converged = false;
                    const double tau = (aqq - app) / (2.0 * apq);
                    const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                     (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                    const double c = 1.0 / std::sqrt(1.0 + t * t);
                    rotate(p, q, c, t * c);
                }
            }
            if (converged) return;
        }
        throw numeric_error("jacobi_svd did not converge after " + std::to_string(sweeps) +
                            " sweeps");
    }
};

} // namespace

SvdResult jacobi_svd(const std::vector<double>& a, std::size_t m, std::size_t n,
                     double tol, std::size_t max_sweeps) {
    if (m == 0 || n == 0 || a.size() != m * n)
        throw std::invalid_argument("jacobi_svd: bad dimensions");

    const bool transposed = m < n;
    std::size_t rows = m, cols = n;
    std::vector<double> work;
    if (transposed) {
        rows = n;
        cols = m;
        work.resize(rows * cols);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) work[j * cols + i] = a[i * n + j];
    } else {
        work = a;
    }

    OneSided os(std::move(work), rows, cols);
    os.run(tol, max_sweeps);

    // Column norms are the singular values; normalized columns are U.
    const std::size_t p = cols;
    std::vector<double> sigma(p);
    std::vector<double> left(rows * p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < rows; ++i) norm2 += os.w[i * cols + j] * os.w[i * cols + j];
        sigma[j] = std::sqrt(norm2);
        if (sigma[j] > 0.0)
            for (std::size_t i = 0; i < rows; ++i) left[i * p + j] = os.w[i * cols + j] / sigma[j];
    }

    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdResult out;
    out.m = m;
    out.n = n;
    out.p = std::min(m, n);
    out.sweeps = os.sweeps;
    out.sigma.resize(out.p);
    out.u.assign(m * out.p, 0.0);
    out.v.assign(n * out.p, 0.0);
    for (std::size_t jj = 0; jj < out.p; ++jj) {
        const std::size_t j = order[jj];
        out.sigma[jj] = sigma[j];
        // For the tall orientation U comes from `left` and V from rotations;
        // the transposed case swaps the roles.
        if (!transposed) {
            for (std::size_t i = 0; i < m; ++i) out.u[i * out.p + jj] = left[i * p + j];
            for (std::size_t i = 0; i < n; ++i) out.v[i * out.p + jj] = os.v[i * cols + j];
        } else {
            for (std::size_t i = 0; i < m; ++i) out.u[i * out.p + jj] = os.v[i * cols + j];
            for (std::size_t i = 0; i < n; ++i) out.v[i * out.p + jj] = left[i * p + j];
        }
    }
    return out;
}

} // namespace latsched
