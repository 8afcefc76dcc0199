#pragma once

#include <cstddef>
#include <vector>

namespace latsched {

/// Full SVD A = U * diag(sigma) * V^T with singular values sorted descending.
/// U is m x p and V is n x p, p = min(m, n), both stored row-major.
struct SvdResult {
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t p = 0;
    std::vector<double> u;     // m x p
    std::vector<double> sigma; // p
    std::vector<double> v;     // n x p
    std::size_t sweeps = 0;
};

/// One-sided Jacobi SVD of a dense row-major m x n matrix. Built for desk
/// scale (m, n up to ~1000). Throws numeric_error if the rotation sweeps do
/// not converge.
SvdResult jacobi_svd(const std::vector<double>& a, std::size_t m, std::size_t n,
                     double tol = 1e-13, std::size_t max_sweeps = 64);

} // namespace latsched
