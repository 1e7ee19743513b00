#pragma once

// Row-wise symmetric-percentile outlier extraction into a row-compressed
// sparse matrix, leaving a dense remainder for quantization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"
#include "lutq/parallel.hpp"

namespace lutq {

struct SparseOutliers {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint64_t> row_offsets;  // rows + 1 entries
    std::vector<std::uint32_t> col_indices;  // strictly increasing within a row
    std::vector<double> values;

    SparseOutliers() = default;
    SparseOutliers(std::size_t r, std::size_t c) : rows(r), cols(c), row_offsets(r + 1, 0) {}

    std::size_t nnz() const noexcept { return values.size(); }

    void validate() const {
        if (row_offsets.size() != rows + 1 || row_offsets.front() != 0 || row_offsets.back() != nnz() ||
            col_indices.size() != nnz()) {
            throw FormatError("sparse outliers: inconsistent row offsets");
        }
        for (std::size_t i = 0; i < rows; ++i) {
            if (row_offsets[i] > row_offsets[i + 1]) throw FormatError("sparse outliers: offsets decrease");
            for (std::uint64_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
                if (col_indices[k] >= cols) throw FormatError("sparse outliers: column out of range");
                if (k > row_offsets[i] && col_indices[k] <= col_indices[k - 1]) {
                    throw FormatError("sparse outliers: columns not strictly increasing");
                }
            }
        }
    }

    DenseMatrix densify() const {
        DenseMatrix out(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::uint64_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) out(i, col_indices[k]) = values[k];
        }
        return out;
    }

    friend bool operator==(const SparseOutliers&, const SparseOutliers&) = default;
};

struct OutlierSplit {
    SparseOutliers sparse;
    DenseMatrix dense;
};

/// Per-row tail sizes for extraction ratio r over rows of length n:
/// p = 1 - r/2, upper = floor(n p), lower = ceil(n (1 - p)). The upper tail is
/// the n - upper largest entries, the lower tail the `lower` smallest.
struct TailCounts {
    std::size_t upper_index = 0;
    std::size_t lower_index = 0;
    std::size_t upper = 0;
    std::size_t lower = 0;
};

inline TailCounts tail_counts(std::size_t n, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ArgumentError("outlier ratio must lie in (0, 1), got " + std::to_string(ratio));
    }
    if (n < 2) throw ArgumentError("outlier extraction needs rows of length >= 2");
    const double p = 1.0 - 0.5 * ratio;
    const auto upper = static_cast<std::size_t>(std::floor(static_cast<double>(n) * p));
    const auto lower = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * (1.0 - p)));
    if (lower >= upper) {
        throw ArgumentError("outlier cutoffs cross for n=" + std::to_string(n) +
                            ", r=" + std::to_string(ratio) + " (lower index " + std::to_string(lower) +
                            " >= upper index " + std::to_string(upper) + ")");
    }
    return {upper, lower, n - std::min(upper, n), lower};
}

/// Splits W into W_sparse (extracted extremes) and W_dense = W - W_sparse.
/// Ties at a cutoff are resolved in favour of larger |value|, then smaller
/// column index, so each row extracts exactly the tail counts.
inline OutlierSplit split_outliers(const DenseMatrix& w, double ratio, std::size_t threads = 1) {
    const TailCounts tc = tail_counts(w.cols(), ratio);
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    std::vector<std::vector<std::uint32_t>> picked(m);
    parallel_for(m, threads, [&](std::size_t i) {
        const auto r = w.row(i);
        std::vector<std::uint32_t> order(n);
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            if (r[a] != r[b]) return r[a] > r[b];
            return std::abs(r[a]) > std::abs(r[b]);
        });
        std::vector<std::uint32_t> cols(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(tc.upper));
        // Lowest `lower` among the remaining entries.
        std::vector<std::uint32_t> rest(order.begin() + static_cast<std::ptrdiff_t>(tc.upper), order.end());
        std::stable_sort(rest.begin(), rest.end(), [&](std::uint32_t a, std::uint32_t b) {
            if (r[a] != r[b]) return r[a] < r[b];
            if (std::abs(r[a]) != std::abs(r[b])) return std::abs(r[a]) > std::abs(r[b]);
            return a < b;
        });
        cols.insert(cols.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(tc.lower));
        std::sort(cols.begin(), cols.end());
        picked[i] = std::move(cols);
    });

    OutlierSplit out{SparseOutliers(m, n), w};
    auto& s = out.sparse;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::uint32_t c : picked[i]) {
            s.col_indices.push_back(c);
            s.values.push_back(w(i, c));
            out.dense(i, c) = w(i, c) - w(i, c);
        }
        s.row_offsets[i + 1] = s.values.size();
    }
    return out;
}

/// W_dense with the sparse values written back at their positions.
inline DenseMatrix recombine(const SparseOutliers& s, DenseMatrix dense) {
    if (dense.rows() != s.rows || dense.cols() != s.cols) throw ArgumentError("recombine: shape mismatch");
    for (std::size_t i = 0; i < s.rows; ++i) {
        for (std::uint64_t k = s.row_offsets[i]; k < s.row_offsets[i + 1]; ++k) dense(i, s.col_indices[k]) += s.values[k];
    }
    return dense;
}

/// S X with f64 accumulation.
inline DenseMatrix sparse_matmul(const SparseOutliers& s, const DenseMatrix& x, std::size_t threads = 1) {
    if (s.cols != x.rows()) throw ArgumentError("sparse_matmul: sparse columns differ from X rows");
    const std::size_t p = x.cols();
    DenseMatrix out(s.rows, p);
    parallel_for(s.rows, threads, [&](std::size_t i) {
        auto o = out.row(i);
        for (std::uint64_t k = s.row_offsets[i]; k < s.row_offsets[i + 1]; ++k) {
            const double v = s.values[k];
            const auto xr = x.row(s.col_indices[k]);
            for (std::size_t c = 0; c < p; ++c) o[c] += v * xr[c];
        }
    });
    return out;
}

}  // namespace lutq
