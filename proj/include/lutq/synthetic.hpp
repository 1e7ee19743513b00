#pragma once

// Deterministic synthetic weights and calibration activations.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"

namespace lutq {

enum class Distribution { gauss, heavy_tail_t3 };

inline std::string to_string(Distribution d) { return d == Distribution::gauss ? "gauss" : "heavy_tail_t3"; }

inline Distribution parse_distribution(const std::string& s) {
    if (s == "gauss") return Distribution::gauss;
    if (s == "heavy_tail_t3") return Distribution::heavy_tail_t3;
    throw ArgumentError("unknown distribution '" + s + "' (gauss|heavy_tail_t3)");
}

/// rows x cols matrix of i.i.d. draws: standard normal, or Student-t with 3
/// degrees of freedom. Same (dist, shape, seed) gives the same matrix.
inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Distribution dist, std::uint64_t seed,
                                 double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::vector<double> e(rows * cols);
    if (dist == Distribution::gauss) {
        std::normal_distribution<double> nd(0.0, 1.0);
        for (double& v : e) v = scale * nd(rng);
    } else {
        std::student_t_distribution<double> td(3.0);
        for (double& v : e) v = scale * td(rng);
    }
    return DenseMatrix(rows, cols, std::move(e));
}

}  // namespace lutq
