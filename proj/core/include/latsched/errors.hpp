#pragma once

#include <stdexcept>
#include <string>

namespace latsched {

/// Numerical failure (divergence, non-convergent SVD, non-finite input).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Duplicate identifier where uniqueness is required.
class conflict_error : public std::runtime_error {
public:
    explicit conflict_error(const std::string& what) : std::runtime_error(what) {}
};

/// Transient resource contention; the caller may retry later.
class busy_error : public std::runtime_error {
public:
    explicit busy_error(const std::string& what) : std::runtime_error(what) {}
};

/// No feasible assignment exists under the current capacity constraints.
class infeasible_error : public std::runtime_error {
public:
    explicit infeasible_error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed configuration input; message names the offending key.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace latsched
