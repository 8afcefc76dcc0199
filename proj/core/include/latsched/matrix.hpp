#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace latsched {

/// Descriptor for one utility-matrix column: the isolation run, a contentious
/// kernel at a given intensity level, or a concrete placement mapping.
struct ColumnKind {
    enum class Tag { isolation, kernel, placement };

    Tag tag = Tag::isolation;
    std::size_t kernel_id = 0;   // kernel columns only
    int intensity_level = 0;     // 1..n_levels; level l exerts l*10% pressure
    std::string mapping_id;      // placement columns only

    static ColumnKind isolation() { return ColumnKind{}; }
    static ColumnKind kernel(std::size_t id, int level) {
        return ColumnKind{Tag::kernel, id, level, {}};
    }
    static ColumnKind placement(std::string mapping) {
        return ColumnKind{Tag::placement, 0, 0, std::move(mapping)};
    }

    bool operator==(const ColumnKind&) const = default;
};

using CellKey = std::pair<std::size_t, std::size_t>; // (row, col)
using CellMask = std::set<CellKey>;

/// Sparse m x d observation table. Rows are applications; the first q columns
/// are the reference block (isolation + kernels), the rest placement columns.
/// The observed mask is exactly the key set of the entry map.
class UtilityMatrix {
public:
    UtilityMatrix() = default;
    UtilityMatrix(std::size_t rows, std::vector<ColumnKind> columns);

    /// Canonical reference-block schema: one isolation column followed by
    /// kernel columns in (kernel, ascending intensity) order.
    static std::vector<ColumnKind> reference_schema(std::size_t n_kernels,
                                                    std::size_t n_levels);

    std::size_t row_count() const { return rows_; }
    std::size_t col_count() const { return columns_.size(); }
    /// Width q of the reference block (columns before the first placement).
    std::size_t reference_width() const { return reference_width_; }

    const std::vector<ColumnKind>& columns() const { return columns_; }
    const ColumnKind& column(std::size_t i) const;

    /// Appends an empty row; returns its index.
    std::size_t add_row();

    void insert(std::size_t row, std::size_t col, double value);
    std::optional<double> value_at(std::size_t row, std::size_t col) const;
    bool is_observed(std::size_t row, std::size_t col) const;

    const std::map<CellKey, double>& entries() const { return entries_; }
    CellMask observed_mask() const;
    std::size_t observed_count() const { return entries_.size(); }

    /// Non-zero observations in one row (the per-row density degree).
    std::size_t row_density(std::size_t row) const;
    double average_density() const;

    /// Appends placement columns with the given mapping ids. New columns start
    /// with no observations. Duplicate ids (present or within the batch) are a
    /// conflict.
    void concat_placement_columns(std::span<const std::string> mapping_ids);
    std::optional<std::size_t> find_placement_column(const std::string& mapping_id) const;

    /// Drops every observation in the given column (reprofiling replaces a
    /// column's contents wholesale before new data is inserted).
    void clear_column(std::size_t col);

    /// Removes placement columns whose mapping_id is not in `keep`. Reference
    /// columns are never touched. Observations move with their columns.
    void retain_placement_columns(const std::set<std::string>& keep);

    /// Deterministically partitions the observed mask into (train, holdout).
    /// Holdout size is round(fraction * observed).
    std::pair<CellMask, CellMask> split_holdout(double fraction, std::uint64_t seed) const;

    /// Plain-text checkpoint format (see docs in matrix.cpp).
    void save(std::ostream& os) const;
    static UtilityMatrix load(std::istream& is);

    bool operator==(const UtilityMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t reference_width_ = 0;
    std::vector<ColumnKind> columns_;
    std::map<CellKey, double> entries_;

    void check_cell(std::size_t row, std::size_t col) const;
};

} // namespace latsched
