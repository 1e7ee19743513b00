#pragma once

// Reference quantizers: per-row asymmetric round-to-nearest, per-row k-means,
// and exhaustive search for tiny rows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lutq/codebook.hpp"
#include "lutq/dense_matrix.hpp"
#include "lutq/gram_cholesky.hpp"
#include "lutq/solver.hpp"

namespace lutq {

struct UniformParams {
    double scale = 1.0;
    int zero_point = 0;
};

/// Min-max parameters: s = (max - min) / (2^N - 1), z = clamp(round(-min / s)).
/// Constant rows use s = 1, z = 0 (their levels are then offset by the constant).
inline UniformParams uniform_params(std::span<const double> row, int bits) {
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    const int qmax = static_cast<int>(level_count(bits)) - 1;
    if (*lo == *hi) return {1.0, 0};
    const double s = (*hi - *lo) / qmax;
    const int z = std::clamp(static_cast<int>(std::lround(-*lo / s)), 0, qmax);
    return {s, z};
}

/// Round-to-nearest uniform quantization, Q(x) = clamp(round(x/s) + z, 0, 2^N - 1),
/// emitted in LUT form with levels t_k = s (k - z).
inline QuantizedWeights rtn_quantize(const DenseMatrix& w, int bits) {
    check_bits(bits);
    const std::size_t levels = level_count(bits);
    const int qmax = static_cast<int>(levels) - 1;
    QuantizedWeights out{Codebook(w.rows(), levels), Assignment(w.rows(), w.cols())};
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto wr = w.row(i);
        auto lv = out.codebook.row(i);
        auto q = out.assignment.row(i);
        const auto [lo, hi] = std::minmax_element(wr.begin(), wr.end());
        if (*lo == *hi) {
            for (std::size_t k = 0; k < levels; ++k) lv[k] = *lo + static_cast<double>(k);
            std::fill(q.begin(), q.end(), 0);
            continue;
        }
        const UniformParams up = uniform_params(wr, bits);
        for (std::size_t k = 0; k < levels; ++k) lv[k] = up.scale * (static_cast<int>(k) - up.zero_point);
        for (std::size_t j = 0; j < wr.size(); ++j) {
            const long r = std::lround(wr[j] / up.scale) + up.zero_point;
            q[j] = static_cast<std::uint8_t>(std::clamp<long>(r, 0, qmax));
        }
    }
    return out;
}

/// Per-row Lloyd k-means (grid seeded, so `seed` does not change the result),
/// weights mapped to the nearest centroid.
inline QuantizedWeights kmeans_quantize(const DenseMatrix& w, int bits, std::uint64_t seed = 0) {
    (void)seed;
    check_bits(bits);
    const std::size_t levels = level_count(bits);
    QuantizedWeights out{Codebook(w.rows(), levels), Assignment{}};
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto c = kmeans_1d(w.row(i), levels);
        std::copy(c.begin(), c.end(), out.codebook.row(i).begin());
    }
    out.assignment = assign_nearest(w, out.codebook);
    return out;
}

inline constexpr std::uint64_t oracle_max_assignments = 65536;

struct OracleResult {
    std::vector<double> levels;
    std::vector<std::uint8_t> assignment;
    double objective = 0.0;
};

inline bool oracle_feasible(std::size_t n, int bits) {
    std::uint64_t total = 1;
    for (std::size_t j = 0; j < n; ++j) {
        total *= level_count(bits);
        if (total > oracle_max_assignments) return false;
    }
    return true;
}

/// Global optimum of one row's quantization problem: every assignment is
/// enumerated in lexicographic order (column 0 most significant), the codebook
/// is fit in closed form against H = X X^T, and the smallest objective wins,
/// the first one enumerated on ties. The returned pair is canonicalized.
inline OracleResult exhaustive_oracle(std::span<const double> w_row, const DenseMatrix& x, int bits) {
    check_bits(bits);
    const std::size_t n = w_row.size();
    if (n != x.rows()) throw ArgumentError("exhaustive_oracle: row length differs from X rows");
    if (!oracle_feasible(n, bits)) {
        throw ArgumentError("exhaustive_oracle: (2^N)^n exceeds 65536 assignments");
    }
    const std::size_t levels = level_count(bits);
    const GramMatrix h = gram(x);
    const DenseMatrix w(1, n, std::vector<double>(w_row.begin(), w_row.end()));
    const Codebook zero(1, levels);

    OracleResult best;
    best.objective = std::numeric_limits<double>::infinity();
    std::uint64_t total = 1;
    for (std::size_t j = 0; j < n; ++j) total *= levels;
    Assignment a(1, n);
    for (std::uint64_t code = 0; code < total; ++code) {
        std::uint64_t rest = code;
        for (std::size_t j = n; j-- > 0;) {
            a.idx[j] = static_cast<std::uint8_t>(rest % levels);
            rest /= levels;
        }
        auto fit = refit_codebook(w, a, h, zero);
        const DenseMatrix w_hat = reconstruct(fit.codebook, fit.assignment);
        // d H d^T for the row residual d
        double obj = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double dj = w(0, j) - w_hat(0, j);
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += h(j, k) * (w(0, k) - w_hat(0, k));
            obj += dj * acc;
        }
        if (obj < best.objective) {
            best.objective = obj;
            best.levels.assign(fit.codebook.values.begin(), fit.codebook.values.end());
            best.assignment.assign(fit.assignment.idx.begin(), fit.assignment.idx.end());
        }
    }
    Codebook t(1, levels);
    std::copy(best.levels.begin(), best.levels.end(), t.values.begin());
    Assignment q(1, n);
    std::copy(best.assignment.begin(), best.assignment.end(), q.idx.begin());
    best.objective = objective(w, t, q, x);
    return best;
}

inline QuantizedWeights exhaustive_quantize(const DenseMatrix& w, const DenseMatrix& x, int bits) {
    const std::size_t levels = level_count(bits);
    QuantizedWeights out{Codebook(w.rows(), levels), Assignment(w.rows(), w.cols())};
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto r = exhaustive_oracle(w.row(i), x, bits);
        std::copy(r.levels.begin(), r.levels.end(), out.codebook.row(i).begin());
        std::copy(r.assignment.begin(), r.assignment.end(), out.assignment.row(i).begin());
    }
    return out;
}

}  // namespace lutq
