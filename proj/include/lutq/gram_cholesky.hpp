#pragma once

// Gram matrices of calibration activations, positive-definiteness
// preconditioning, Cholesky factorization and a small dense pseudoinverse.
// All arithmetic here is f64 regardless of the input's declared precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"
#include "lutq/parallel.hpp"

namespace lutq {

/// Symmetric n x n second-moment matrix X X^T.
struct GramMatrix {
    std::size_t dim = 0;
    std::vector<double> elems;

    GramMatrix() = default;
    explicit GramMatrix(std::size_t n) : dim(n), elems(n * n, 0.0) {}

    double operator()(std::size_t i, std::size_t j) const noexcept { return elems[i * dim + j]; }
    double& operator()(std::size_t i, std::size_t j) noexcept { return elems[i * dim + j]; }
    const double* row(std::size_t i) const noexcept { return elems.data() + i * dim; }
};

/// Lower-triangular Cholesky factor, row-major; entries above the diagonal are 0.
struct CholFactor {
    std::size_t dim = 0;
    std::vector<double> elems;

    double operator()(std::size_t i, std::size_t j) const noexcept { return elems[i * dim + j]; }
    const double* row(std::size_t i) const noexcept { return elems.data() + i * dim; }

    /// Column-major copy (row j of the result is column j of L).
    std::vector<double> transposed() const {
        std::vector<double> t(dim * dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = 0; j <= i; ++j) t[j * dim + i] = elems[i * dim + j];
        }
        return t;
    }
};

struct PrecondPolicy {
    enum class Mode { off, adaptive_dominance, fixed_lambda };

    Mode mode = Mode::adaptive_dominance;
    double lambda = 0.0;

    static PrecondPolicy adaptive() { return {Mode::adaptive_dominance, 0.0}; }
    static PrecondPolicy fixed(double lambda) { return {Mode::fixed_lambda, lambda}; }
    static PrecondPolicy off() { return {Mode::off, 0.0}; }

    void validate() const {
        if (mode == Mode::fixed_lambda && !(lambda > 0.0)) {
            throw ArgumentError("fixed-lambda preconditioning requires lambda > 0, got " +
                                std::to_string(lambda));
        }
    }

    /// "adaptive", "off" or "lambda=<v>"; the CLI's --precondition syntax.
    std::string to_string() const {
        switch (mode) {
            case Mode::off: return "off";
            case Mode::adaptive_dominance: return "adaptive";
            case Mode::fixed_lambda: {
                std::string s = std::to_string(lambda);
                s.erase(s.find_last_not_of('0') + 1);
                if (!s.empty() && s.back() == '.') s.pop_back();
                return "lambda=" + s;
            }
        }
        return "adaptive";
    }

    static PrecondPolicy parse(const std::string& text) {
        if (text == "adaptive") return adaptive();
        if (text == "off") return off();
        if (text.rfind("lambda=", 0) == 0) {
            const std::string value = text.substr(7);
            std::size_t used = 0;
            double lambda = 0.0;
            try {
                lambda = std::stod(value, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != value.size()) {
                throw ArgumentError("bad lambda value in --precondition: '" + value + "'");
            }
            PrecondPolicy p = fixed(lambda);
            p.validate();
            return p;
        }
        throw ArgumentError("unknown precondition policy '" + text + "' (adaptive|lambda=<v>|off)");
    }
};

// Floor from the dominance rule, plus the uniform margin that makes the
// dominance strict.
inline constexpr double dominance_floor = 1e-8;
inline constexpr double dominance_margin = 1e-9;

/// H = X X^T in f64. Only the upper triangle is computed and mirrored, so the
/// result is exactly symmetric.
inline GramMatrix gram(const DenseMatrix& x, std::size_t threads = 1) {
    if (x.rows() == 0 || x.cols() == 0) throw ArgumentError("gram: empty activation matrix");
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    GramMatrix h(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const double* xi = x.row(i).data();
        for (std::size_t j = i; j < n; ++j) {
            const double* xj = x.row(j).data();
            double acc = 0.0;
            for (std::size_t k = 0; k < p; ++k) acc += xi[k] * xj[k];
            h(i, j) = acc;
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) h(i, j) = h(j, i);
    }
    return h;
}

inline double offdiag_abs_sum(const GramMatrix& h, std::size_t i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < h.dim; ++j) {
        if (j != i) acc += std::abs(h(i, j));
    }
    return acc;
}

/// Diagonal offsets the policy adds to H. Adaptive mode uses
/// delta_i = max(sum_j |H_ij| - 2 H_ii, 1e-8) + 1e-9 and, if rounding ate the
/// margin, grows delta_i until H_ii + delta_i - sum_{j!=i} |H_ij| >= 1e-9 holds
/// in double arithmetic.
inline std::vector<double> diagonal_offsets(const GramMatrix& h, const PrecondPolicy& policy) {
    policy.validate();
    std::vector<double> delta(h.dim, 0.0);
    switch (policy.mode) {
        case PrecondPolicy::Mode::off:
            break;
        case PrecondPolicy::Mode::fixed_lambda:
            std::fill(delta.begin(), delta.end(), policy.lambda);
            break;
        case PrecondPolicy::Mode::adaptive_dominance:
            for (std::size_t i = 0; i < h.dim; ++i) {
                double row_abs = 0.0;
                for (std::size_t j = 0; j < h.dim; ++j) row_abs += std::abs(h(i, j));
                double d = std::max(row_abs - 2.0 * h(i, i), dominance_floor) + dominance_margin;
                const double off = offdiag_abs_sum(h, i);
                double bump = dominance_margin;
                while ((h(i, i) + d) - off < dominance_margin) {
                    d += bump;
                    bump *= 2.0;
                }
                delta[i] = d;
            }
            break;
    }
    return delta;
}

inline GramMatrix add_diagonal(GramMatrix h, const std::vector<double>& delta) {
    for (std::size_t i = 0; i < h.dim; ++i) h(i, i) += delta[i];
    return h;
}

inline GramMatrix precondition(const GramMatrix& h, const PrecondPolicy& policy) {
    return add_diagonal(h, diagonal_offsets(h, policy));
}

/// Cholesky factorization H = L L^T. Throws DefinitenessError naming the
/// first non-positive pivot.
inline CholFactor cholesky(const GramMatrix& h) {
    const std::size_t n = h.dim;
    CholFactor f{n, std::vector<double>(n * n, 0.0)};
    auto& l = f.elems;
    for (std::size_t j = 0; j < n; ++j) {
        const double* lj = l.data() + j * n;
        double d = h(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
        if (!(d > 0.0) || !std::isfinite(d)) throw DefinitenessError(j, d);
        const double ljj = std::sqrt(d);
        l[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            const double* li = l.data() + i * n;
            double s = h(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
            l[i * n + j] = s / ljj;
        }
    }
    return f;
}

inline constexpr double pinv_relative_tol = 1e-10;
inline constexpr std::size_t pinv_max_dim = 256;

namespace detail {

// One-sided Jacobi SVD pseudoinverse of a row-major n x n matrix `a`.
// Columns of U accumulate sigma_j * u_j; V accumulates the right rotations.
inline std::vector<double> pinv_jacobi(const double* a, std::size_t n) {
    std::vector<double> u(a, a + n * n);
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    constexpr double eps = std::numeric_limits<double>::epsilon();

    for (int sweep = 0; sweep < 80; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double up = u[i * n + p];
                    const double uq = u[i * n + q];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double up = u[i * n + p];
                    const double uq = u[i * n + q];
                    u[i * n + p] = c * up - s * uq;
                    u[i * n + q] = s * up + c * uq;
                    const double vp = v[i * n + p];
                    const double vq = v[i * n + q];
                    v[i * n + p] = c * vp - s * vq;
                    v[i * n + q] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma2(n, 0.0);
    double smax = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += u[i * n + j] * u[i * n + j];
        sigma2[j] = acc;
        smax = std::max(smax, std::sqrt(acc));
    }
    const double cutoff = pinv_relative_tol * smax;

    // A^+ = sum_j v_j (sigma_j u_j)^T / sigma_j^2
    std::vector<double> out(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (smax == 0.0 || std::sqrt(sigma2[j]) <= cutoff) continue;
        const double inv = 1.0 / sigma2[j];
        for (std::size_t r = 0; r < n; ++r) {
            const double vr = v[r * n + j] * inv;
            if (vr == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) out[r * n + c] += vr * u[c * n + j];
        }
    }
    return out;
}

}  // namespace detail

/// Moore-Penrose pseudoinverse of a small square matrix (dim <= 256).
/// Singular values at or below 1e-10 * sigma_max are treated as zero.
inline DenseMatrix pinv_small(const DenseMatrix& m) {
    if (m.rows() != m.cols()) throw ArgumentError("pinv_small: matrix is not square");
    if (m.rows() > pinv_max_dim) {
        throw ArgumentError("pinv_small: dimension " + std::to_string(m.rows()) + " exceeds 256");
    }
    const std::size_t n = m.rows();
    if (n == 0) return {};
    return DenseMatrix(n, n, detail::pinv_jacobi(m.elems().data(), n));
}

}  // namespace lutq
