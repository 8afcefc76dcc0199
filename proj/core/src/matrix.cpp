#include "latsched/matrix.hpp"

#include "latsched/errors.hpp"
#include "latsched/rng.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace latsched {

UtilityMatrix::UtilityMatrix(std::size_t rows, std::vector<ColumnKind> columns)
    : rows_(rows), columns_(std::move(columns)) {
    std::size_t isolation_count = 0;
    std::set<std::string> seen_mappings;
    bool in_placement_block = false;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        switch (c.tag) {
        case ColumnKind::Tag::isolation:
            ++isolation_count;
            if (in_placement_block)
                throw std::invalid_argument("reference columns must precede placement columns");
            break;
        case ColumnKind::Tag::kernel:
            if (in_placement_block)
                throw std::invalid_argument("reference columns must precede placement columns");
            if (c.intensity_level < 1)
                throw std::invalid_argument("kernel intensity_level must be >= 1");
            break;
        case ColumnKind::Tag::placement:
            in_placement_block = true;
            if (!seen_mappings.insert(c.mapping_id).second)
                throw conflict_error("duplicate placement mapping_id: " + c.mapping_id);
            break;
        }
        if (!in_placement_block) reference_width_ = i + 1;
    }
    if (isolation_count != 1 && !columns_.empty())
        throw std::invalid_argument("a utility matrix has exactly one isolation column");
}

std::vector<ColumnKind> UtilityMatrix::reference_schema(std::size_t n_kernels,
                                                        std::size_t n_levels) {
    if (n_kernels < 1 || n_levels < 1)
        throw std::invalid_argument("reference_schema requires n_kernels >= 1 and n_levels >= 1");
    std::vector<ColumnKind> cols;
    cols.reserve(n_kernels * n_levels + 1);
    cols.push_back(ColumnKind::isolation());
    for (std::size_t k = 0; k < n_kernels; ++k)
        for (std::size_t l = 1; l <= n_levels; ++l)
            cols.push_back(ColumnKind::kernel(k, static_cast<int>(l)));
    return cols;
}

const ColumnKind& UtilityMatrix::column(std::size_t i) const {
    if (i >= columns_.size()) throw std::out_of_range("column index out of range");
    return columns_[i];
}

std::size_t UtilityMatrix::add_row() { return rows_++; }

void UtilityMatrix::check_cell(std::size_t row, std::size_t col) const {
    if (row >= rows_) throw std::out_of_range("row index out of range");
    if (col >= columns_.size()) throw std::out_of_range("column index out of range");
}

void UtilityMatrix::insert(std::size_t row, std::size_t col, double value) {
    check_cell(row, col);
    if (!std::isfinite(value) || value < 0.0)
        throw std::invalid_argument("observations must be finite and >= 0");
    entries_[{row, col}] = value; // re-insertion overwrites
}

std::optional<double> UtilityMatrix::value_at(std::size_t row, std::size_t col) const {
    check_cell(row, col);
    auto it = entries_.find({row, col});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

bool UtilityMatrix::is_observed(std::size_t row, std::size_t col) const {
    return entries_.count({row, col}) != 0;
}

CellMask UtilityMatrix::observed_mask() const {
    CellMask mask;
    for (const auto& [key, _] : entries_) mask.insert(key);
    return mask;
}

std::size_t UtilityMatrix::row_density(std::size_t row) const {
    if (row >= rows_) throw std::out_of_range("row index out of range");
    auto lo = entries_.lower_bound({row, 0});
    auto hi = entries_.lower_bound({row + 1, 0});
    return static_cast<std::size_t>(std::distance(lo, hi));
}

double UtilityMatrix::average_density() const {
    if (rows_ == 0) return 0.0;
    return static_cast<double>(entries_.size()) / static_cast<double>(rows_);
}

void UtilityMatrix::concat_placement_columns(std::span<const std::string> mapping_ids) {
    std::set<std::string> existing;
    for (const auto& c : columns_)
        if (c.tag == ColumnKind::Tag::placement) existing.insert(c.mapping_id);
    std::set<std::string> batch;
    for (const auto& id : mapping_ids) {
        if (existing.count(id) || !batch.insert(id).second)
            throw conflict_error("duplicate placement mapping_id: " + id);
    }
    for (const auto& id : mapping_ids)
        columns_.push_back(ColumnKind::placement(id));
}

std::optional<std::size_t> UtilityMatrix::find_placement_column(const std::string& mapping_id) const {
    for (std::size_t i = reference_width_; i < columns_.size(); ++i)
        if (columns_[i].mapping_id == mapping_id) return i;
    return std::nullopt;
}

void UtilityMatrix::clear_column(std::size_t col) {
    check_cell(rows_ == 0 ? 0 : rows_ - 1, col);
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (it->first.second == col)
            it = entries_.erase(it);
        else
            ++it;
    }
}

void UtilityMatrix::retain_placement_columns(const std::set<std::string>& keep) {
    std::vector<std::size_t> remap(columns_.size());
    std::vector<ColumnKind> new_columns;
    new_columns.reserve(columns_.size());
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        bool kept = i < reference_width_ ||
                    (c.tag == ColumnKind::Tag::placement && keep.count(c.mapping_id));
        if (kept) {
            remap[i] = new_columns.size();
            new_columns.push_back(c);
        } else {
            remap[i] = static_cast<std::size_t>(-1);
        }
    }
    std::map<CellKey, double> new_entries;
    for (const auto& [key, value] : entries_) {
        auto mapped = remap[key.second];
        if (mapped != static_cast<std::size_t>(-1))
            new_entries[{key.first, mapped}] = value;
    }
    columns_ = std::move(new_columns);
    entries_ = std::move(new_entries);
}

std::pair<CellMask, CellMask> UtilityMatrix::split_holdout(double fraction,
                                                           std::uint64_t seed) const {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("holdout fraction must be in (0, 1)");
    if (entries_.size() < 2)
        throw std::invalid_argument("split_holdout needs at least 2 observations");

    std::vector<CellKey> keys;
    keys.reserve(entries_.size());
    for (const auto& [key, _] : entries_) keys.push_back(key);
    Rng rng(Rng::derive(seed, 0x5p11));
    rng.shuffle(keys);

    const auto holdout_size =
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(keys.size())));
    CellMask holdout(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(holdout_size));
    CellMask train(keys.begin() + static_cast<std::ptrdiff_t>(holdout_size), keys.end());
    return {train, holdout};
}

// Checkpoint format, line oriented:
//   utility-matrix v1
//   rows <m>
//   col <idx> isolation
//   col <idx> kernel <kernel_id> <intensity_level>
//   col <idx> placement <mapping_id>
//   obs <row> <col> <value>
// Values are printed with max_digits10 so a load/save round trip is exact.
void UtilityMatrix::save(std::ostream& os) const {
    os << "utility-matrix v1\n";
    os << "rows " << rows_ << "\n";
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        switch (c.tag) {
        case ColumnKind::Tag::isolation:
            os << "col " << i << " isolation\n";
            break;
        case ColumnKind::Tag::kernel:
            os << "col " << i << " kernel " << c.kernel_id << " " << c.intensity_level << "\n";
            break;
        case ColumnKind::Tag::placement:
            os << "col " << i << " placement " << c.mapping_id << "\n";
            break;
        }
    }
    os.precision(17);
    for (const auto& [key, value] : entries_)
        os << "obs " << key.first << " " << key.second << " " << value << "\n";
}

UtilityMatrix UtilityMatrix::load(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "utility-matrix v1")
        throw config_error("matrix checkpoint: missing 'utility-matrix v1' header");

    std::size_t rows = 0;
    std::vector<ColumnKind> columns;
    std::vector<std::tuple<std::size_t, std::size_t, double>> observations;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "rows") {
            ls >> rows;
        } else if (tok == "col") {
            std::size_t idx;
            std::string kind;
            ls >> idx >> kind;
            if (idx != columns.size())
                throw config_error("matrix checkpoint: column indices must be dense and ordered");
            if (kind == "isolation") {
                columns.push_back(ColumnKind::isolation());
            } else if (kind == "kernel") {
                std::size_t k;
                int l;
                ls >> k >> l;
                columns.push_back(ColumnKind::kernel(k, l));
            } else if (kind == "placement") {
                std::string id;
                ls >> id;
                columns.push_back(ColumnKind::placement(id));
            } else {
                throw config_error("matrix checkpoint: unknown column kind '" + kind + "'");
            }
        } else if (tok == "obs") {
            std::size_t r, c;
            double v;
            ls >> r >> c >> v;
            observations.emplace_back(r, c, v);
        } else {
            throw config_error("matrix checkpoint: unknown record '" + tok + "'");
        }
        if (ls.fail())
            throw config_error("matrix checkpoint: malformed line '" + line + "'");
    }

    UtilityMatrix m(rows, std::move(columns));
    for (const auto& [r, c, v] : observations) m.insert(r, c, v);
    return m;
}

} // namespace latsched
