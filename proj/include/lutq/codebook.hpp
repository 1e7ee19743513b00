#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"

namespace lutq {

inline constexpr int min_bits = 1;
inline constexpr int max_bits = 8;

inline void check_bits(int bits) {
    if (bits < min_bits || bits > max_bits) {
        throw ArgumentError("bit width must be in [1, 8], got " + std::to_string(bits));
    }
}

inline std::size_t level_count(int bits) { return std::size_t{1} << bits; }

/// Per-row lookup table: rows x levels values, row-major.
struct Codebook {
    std::size_t rows = 0;
    std::size_t levels = 0;
    std::vector<double> values;

    Codebook() = default;
    Codebook(std::size_t r, std::size_t l) : rows(r), levels(l), values(r * l, 0.0) {}

    std::span<const double> row(std::size_t r) const noexcept { return {values.data() + r * levels, levels}; }
    std::span<double> row(std::size_t r) noexcept { return {values.data() + r * levels, levels}; }
    double operator()(std::size_t r, std::size_t s) const noexcept { return values[r * levels + s]; }
    double& operator()(std::size_t r, std::size_t s) noexcept { return values[r * levels + s]; }

    friend bool operator==(const Codebook&, const Codebook&) = default;
};

/// Per-weight codebook index (the query matrix). Indices fit in a byte since
/// bit widths stop at 8.
struct Assignment {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> idx;

    Assignment() = default;
    Assignment(std::size_t r, std::size_t c) : rows(r), cols(c), idx(r * c, 0) {}

    std::span<const std::uint8_t> row(std::size_t r) const noexcept { return {idx.data() + r * cols, cols}; }
    std::span<std::uint8_t> row(std::size_t r) noexcept { return {idx.data() + r * cols, cols}; }
    std::uint8_t operator()(std::size_t r, std::size_t c) const noexcept { return idx[r * cols + c]; }
    std::uint8_t& operator()(std::size_t r, std::size_t c) noexcept { return idx[r * cols + c]; }

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// A codebook together with the assignment that indexes it.
struct QuantizedWeights {
    Codebook codebook;
    Assignment assignment;
};

/// argmin_s |target - levels[s]|, ties to the smallest s.
inline std::size_t nearest_level(std::span<const double> levels, double target) noexcept {
    std::size_t best = 0;
    double best_dist = std::abs(target - levels[0]);
    for (std::size_t s = 1; s < levels.size(); ++s) {
        const double d = std::abs(target - levels[s]);
        if (d < best_dist) {
            best_dist = d;
            best = s;
        }
    }
    return best;
}

inline void check_consistent(const Codebook& t, const Assignment& a) {
    if (t.rows != a.rows) throw ArgumentError("codebook and assignment row counts differ");
    for (std::uint8_t q : a.idx) {
        if (q >= t.levels) throw ArgumentError("assignment index " + std::to_string(q) + " out of range");
    }
}

/// Dense W~ with W~_ij = T_{i, Q_ij}.
inline DenseMatrix reconstruct(const Codebook& t, const Assignment& a) {
    check_consistent(t, a);
    DenseMatrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const auto lv = t.row(i);
        const auto q = a.row(i);
        auto o = out.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) o[j] = lv[q[j]];
    }
    return out;
}

}  // namespace lutq
