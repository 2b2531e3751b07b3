#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "tripletrack/errors.hpp"

namespace tripletrack {

/// Dense R x C cost matrix, row-major. Entries are finite and >= 0, or `forbidden`.
class CostMatrix {
public:
    static constexpr double forbidden = std::numeric_limits<double>::infinity();

    CostMatrix() = default;
    CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    CostMatrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        for (const auto& row : init) {
            if (row.size() != cols_) throw DimensionError("ragged cost matrix");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    static bool is_forbidden(double v) noexcept { return v == forbidden; }

    void validate() const {
        for (double v : data_) {
            if (is_forbidden(v)) continue;
            if (!std::isfinite(v)) throw InputError("cost matrix has a non-finite entry");
            if (v < 0.0) throw InputError("cost matrix has a negative entry");
        }
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Assignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, col), sorted by row
    std::vector<std::size_t> unmatched_rows;
    std::vector<std::size_t> unmatched_cols;

    double total_cost(const CostMatrix& costs) const {
        double s = 0.0;
        for (auto [r, c] : pairs) s += costs(r, c);
        return s;
    }
};

namespace detail {

// Shortest-augmenting-path Hungarian method with potentials on an n x m matrix, n <= m.
// Returns, for every row, its assigned column. Scans rows and columns in index order
// and only replaces a candidate on strict improvement, so ties go to lower indices.
inline std::vector<std::size_t> hungarian_rows(const std::vector<double>& a, std::size_t n, std::size_t m) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j]) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

inline Assignment finish(std::vector<std::pair<std::size_t, std::size_t>> pairs, std::size_t rows, std::size_t cols) {
    std::sort(pairs.begin(), pairs.end());
    Assignment out;
    std::vector<char> row_used(rows, 0), col_used(cols, 0);
    for (auto [r, c] : pairs) {
        row_used[r] = 1;
        col_used[c] = 1;
    }
    for (std::size_t r = 0; r < rows; ++r)
        if (!row_used[r]) out.unmatched_rows.push_back(r);
    for (std::size_t c = 0; c < cols; ++c)
        if (!col_used[c]) out.unmatched_cols.push_back(c);
    out.pairs = std::move(pairs);
    return out;
}

}  // namespace detail

/// Minimum-cost assignment of cardinality min(R, C). Forbidden entries are never
/// returned; when they make a full-cardinality matching impossible, the result has as
/// many pairs as possible and, among those, minimal total cost.
inline Assignment solve(const CostMatrix& costs) {
    costs.validate();
    const std::size_t R = costs.rows(), C = costs.cols();
    if (costs.empty()) return detail::finish({}, R, C);

    const bool transpose = R > C;
    const std::size_t n = transpose ? C : R, m = transpose ? R : C;

    // Any single forbidden pair must cost more than every all-allowed matching.
    double finite_sum = 0.0;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
            if (!CostMatrix::is_forbidden(costs(r, c))) finite_sum += costs(r, c);
    const double big = (finite_sum + 1.0) * 2.0;

    std::vector<double> a(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double v = transpose ? costs(j, i) : costs(i, j);
            a[i * m + j] = CostMatrix::is_forbidden(v) ? big : v;
        }
    }
    const auto match = detail::hungarian_rows(a, n, m);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = transpose ? match[i] : i;
        const std::size_t c = transpose ? i : match[i];
        if (!CostMatrix::is_forbidden(costs(r, c))) pairs.emplace_back(r, c);
    }
    return detail::finish(std::move(pairs), R, C);
}

/// solve(), then drop every pair whose cost is strictly larger than `threshold`.
inline Assignment solve_gated(const CostMatrix& costs, double threshold) {
    if (!(threshold >= 0.0)) throw InputError("gate threshold must be >= 0");
    Assignment full = solve(costs);
    std::vector<std::pair<std::size_t, std::size_t>> kept;
    for (auto [r, c] : full.pairs)
        if (!(costs(r, c) > threshold)) kept.emplace_back(r, c);
    return detail::finish(std::move(kept), costs.rows(), costs.cols());
}

}  // namespace tripletrack
