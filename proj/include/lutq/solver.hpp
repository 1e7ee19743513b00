#pragma once

// Layer-wise LUT quantizer: alternates a greedy back-substitution assignment
// over the Cholesky factor of the (preconditioned) Gram matrix with a
// closed-form least-squares refit of each row's codebook.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lutq/codebook.hpp"
#include "lutq/dense_matrix.hpp"
#include "lutq/error.hpp"
#include "lutq/gram_cholesky.hpp"
#include "lutq/parallel.hpp"

namespace lutq {

enum class InitMethod { uniform_grid, kmeans_1d };

inline std::string to_string(InitMethod m) {
    return m == InitMethod::uniform_grid ? "uniform_grid" : "kmeans_1d";
}

inline InitMethod parse_init_method(const std::string& s) {
    if (s == "uniform_grid") return InitMethod::uniform_grid;
    if (s == "kmeans_1d") return InitMethod::kmeans_1d;
    throw ArgumentError("unknown init method '" + s + "' (uniform_grid|kmeans_1d)");
}

struct SolverConfig {
    int bits = 4;
    std::size_t iterations = 10;
    InitMethod init = InitMethod::uniform_grid;
    PrecondPolicy precond = PrecondPolicy::adaptive();
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const {
        check_bits(bits);
        if (iterations < 1) throw ArgumentError("iterations must be >= 1");
        precond.validate();
    }
};

struct SolveTimings {
    double gram = 0.0;
    double cholesky = 0.0;
    double init = 0.0;
    double assign = 0.0;
    double refit = 0.0;
    double objective = 0.0;
};

struct SolveTrace {
    /// Objective ||WX - W~X||_F^2 of the nearest-level assignment under T^0.
    double initial_objective = 0.0;
    /// Objective after each (assign, refit) iteration.
    std::vector<double> objectives;
    /// Rows whose initial codebook collapsed to a single value.
    std::vector<std::size_t> degenerate_rows;
    std::vector<std::string> warnings;
    /// Diagonal offsets added to X X^T before factorization.
    std::vector<double> offsets;
    SolveTimings timings;
};

struct SolveResult {
    QuantizedWeights weights;
    SolveTrace trace;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline void uniform_grid_row(std::span<const double> w, std::span<double> out) {
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    const std::size_t l = out.size();
    for (std::size_t s = 0; s < l; ++s) {
        out[s] = *lo + (*hi - *lo) * static_cast<double>(s) / static_cast<double>(l - 1);
    }
    out[l - 1] = *hi;
}

}  // namespace detail

inline constexpr int kmeans_iterations = 25;

/// 1-D Lloyd k-means seeded with the uniform min-max grid. Empty clusters keep
/// their previous centroid. Returns centroids sorted ascending.
inline std::vector<double> kmeans_1d(std::span<const double> w, std::size_t k,
                                     int iterations = kmeans_iterations) {
    std::vector<double> centroids(k);
    detail::uniform_grid_row(w, centroids);
    std::vector<std::size_t> label(w.size(), 0);
    std::vector<double> sum(k);
    std::vector<std::size_t> count(k);
    for (int it = 0; it < iterations; ++it) {
        bool changed = it == 0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            const std::size_t s = nearest_level(centroids, w[j]);
            if (s != label[j]) changed = true;
            label[j] = s;
        }
        if (!changed) break;
        std::fill(sum.begin(), sum.end(), 0.0);
        std::fill(count.begin(), count.end(), 0);
        for (std::size_t j = 0; j < w.size(); ++j) {
            sum[label[j]] += w[j];
            ++count[label[j]];
        }
        for (std::size_t s = 0; s < k; ++s) {
            if (count[s] > 0) centroids[s] = sum[s] / static_cast<double>(count[s]);
        }
    }
    std::sort(centroids.begin(), centroids.end());
    return centroids;
}

inline std::vector<std::size_t> degenerate_rows(const DenseMatrix& w) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto r = w.row(i);
        const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
        if (*lo == *hi) out.push_back(i);
    }
    return out;
}

/// T^0. Constant rows produce a codebook with every level equal to the constant.
inline Codebook init_codebook(const DenseMatrix& w, const SolverConfig& cfg) {
    cfg.validate();
    Codebook t(w.rows(), level_count(cfg.bits));
    parallel_for(w.rows(), cfg.threads, [&](std::size_t i) {
        if (cfg.init == InitMethod::uniform_grid) {
            detail::uniform_grid_row(w.row(i), t.row(i));
        } else {
            const auto c = kmeans_1d(w.row(i), t.levels);
            std::copy(c.begin(), c.end(), t.row(i).begin());
        }
    });
    return t;
}

/// Nearest-level assignment of every weight (no activation weighting).
inline Assignment assign_nearest(const DenseMatrix& w, const Codebook& t) {
    Assignment a(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const auto lv = t.row(i);
        const auto wr = w.row(i);
        auto q = a.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) q[j] = static_cast<std::uint8_t>(nearest_level(lv, wr[j]));
    }
    return a;
}

/// Greedy column-by-column assignment from the last column to the first.
/// For column j the target is W_ij + (sum_{u>j} r_u L_uj) / L_jj with
/// r_u = W_iu - T_{i,Q_iu}; the suffix dot product is recomputed after each
/// column is fixed. Rows are independent.
inline Assignment assign_backsub(const DenseMatrix& w, const Codebook& t, const CholFactor& l,
                                 std::size_t threads = 1) {
    if (w.cols() != l.dim) throw ArgumentError("assign_backsub: W columns differ from factor size");
    if (w.rows() != t.rows) throw ArgumentError("assign_backsub: W rows differ from codebook rows");
    const std::size_t n = w.cols();
    const std::vector<double> lt = l.transposed();
    Assignment a(w.rows(), n);
    parallel_for(w.rows(), threads, [&](std::size_t i) {
        const auto wr = w.row(i);
        const auto lv = t.row(i);
        auto q = a.row(i);
        std::vector<double> resid(n, 0.0);
        double carried = 0.0;
        for (std::size_t j = n; j-- > 0;) {
            const double target = wr[j] + carried / lt[j * n + j];
            const std::size_t s = nearest_level(lv, target);
            q[j] = static_cast<std::uint8_t>(s);
            resid[j] = wr[j] - lv[s];
            if (j == 0) break;
            // column j-1 of L, rows j..n-1
            const double* col = lt.data() + (j - 1) * n;
            double acc = 0.0;
            for (std::size_t u = j; u < n; ++u) acc += resid[u] * col[u];
            carried = acc;
        }
    });
    return a;
}

/// Sorts every codebook row ascending (stable on ties) and remaps the
/// assignment so W~ is unchanged.
inline void canonicalize(Codebook& t, Assignment& a) {
    std::vector<std::size_t> order(t.levels);
    std::vector<std::uint8_t> remap(t.levels);
    std::vector<double> sorted(t.levels);
    for (std::size_t i = 0; i < t.rows; ++i) {
        auto lv = t.row(i);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return lv[x] < lv[y]; });
        for (std::size_t k = 0; k < t.levels; ++k) {
            sorted[k] = lv[order[k]];
            remap[order[k]] = static_cast<std::uint8_t>(k);
        }
        std::copy(sorted.begin(), sorted.end(), lv.begin());
        for (auto& q : a.row(i)) q = remap[q];
    }
}

/// Closed-form codebook update T_i = W_i H S_i^T (S_i H S_i^T)^+, computed by
/// gather-accumulate over the index row (S_i is never materialized). Levels no
/// weight uses keep their value from `previous`. The result is canonicalized.
inline QuantizedWeights refit_codebook(const DenseMatrix& w, Assignment a, const GramMatrix& h,
                                       const Codebook& previous, std::size_t threads = 1) {
    if (w.cols() != h.dim) throw ArgumentError("refit_codebook: W columns differ from Gram size");
    if (w.rows() != a.rows || w.cols() != a.cols) throw ArgumentError("refit_codebook: assignment shape");
    check_consistent(previous, a);
    const std::size_t n = w.cols();
    const std::size_t levels = previous.levels;
    Codebook t = previous;
    parallel_for(w.rows(), threads, [&](std::size_t i) {
        const auto wr = w.row(i);
        const auto q = a.row(i);
        // v = W_i H
        std::vector<double> v(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double wij = wr[j];
            const double* hj = h.row(j);
            for (std::size_t k = 0; k < n; ++k) v[k] += wij * hj[k];
        }
        std::vector<double> b(levels, 0.0);
        std::vector<double> g(levels * levels, 0.0);
        std::vector<double> partial(levels);
        for (std::size_t j = 0; j < n; ++j) {
            b[q[j]] += v[j];
            std::fill(partial.begin(), partial.end(), 0.0);
            const double* hj = h.row(j);
            for (std::size_t k = 0; k < n; ++k) partial[q[k]] += hj[k];
            double* gr = g.data() + q[j] * levels;
            for (std::size_t s = 0; s < levels; ++s) gr[s] += partial[s];
        }
        // Unused levels give zero rows and columns of S H S^T; dropping them
        // before the pseudoinverse leaves the used block's result unchanged.
        std::vector<std::size_t> used;
        std::vector<bool> seen(levels, false);
        for (std::uint8_t s : q) seen[s] = true;
        for (std::size_t s = 0; s < levels; ++s) {
            if (seen[s]) used.push_back(s);
        }
        const std::size_t u = used.size();
        std::vector<double> gu(u * u);
        for (std::size_t x = 0; x < u; ++x) {
            for (std::size_t y = 0; y < u; ++y) gu[x * u + y] = g[used[x] * levels + used[y]];
        }
        const std::vector<double> gi = detail::pinv_jacobi(gu.data(), u);
        auto out = t.row(i);
        for (std::size_t y = 0; y < u; ++y) {
            double acc = 0.0;
            for (std::size_t x = 0; x < u; ++x) acc += b[used[x]] * gi[x * u + y];
            out[used[y]] = acc;
        }
    });
    canonicalize(t, a);
    return {std::move(t), std::move(a)};
}

/// ||W X - W~ X||_F^2 in f64, evaluated as ||(W - W~) X||_F^2.
inline double output_error(const DenseMatrix& w, const DenseMatrix& w_hat, const DenseMatrix& x,
                           std::size_t threads = 1) {
    if (!w.same_shape(w_hat)) throw ArgumentError("output_error: W and W~ shapes differ");
    if (w.cols() != x.rows()) throw ArgumentError("output_error: W columns differ from X rows");
    const std::size_t p = x.cols();
    std::vector<double> per_row(w.rows(), 0.0);
    parallel_for(w.rows(), threads, [&](std::size_t i) {
        std::vector<double> out(p, 0.0);
        const auto wr = w.row(i);
        const auto hr = w_hat.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double d = wr[j] - hr[j];
            if (d == 0.0) continue;
            const double* xj = x.row(j).data();
            for (std::size_t c = 0; c < p; ++c) out[c] += d * xj[c];
        }
        double acc = 0.0;
        for (double o : out) acc += o * o;
        per_row[i] = acc;
    });
    return std::accumulate(per_row.begin(), per_row.end(), 0.0);
}

inline double objective(const DenseMatrix& w, const Codebook& t, const Assignment& a,
                        const DenseMatrix& x, std::size_t threads = 1) {
    if (w.rows() != a.rows || w.cols() != a.cols) throw ArgumentError("objective: assignment shape");
    return output_error(w, reconstruct(t, a), x, threads);
}

/// ||(W - W~) L||_F^2. Equals the X-form objective when L L^T = X X^T.
inline double objective_lform(const DenseMatrix& w, const Codebook& t, const Assignment& a,
                              const CholFactor& l) {
    if (w.cols() != l.dim) throw ArgumentError("objective_lform: W columns differ from factor size");
    const DenseMatrix w_hat = reconstruct(t, a);
    const std::size_t n = w.cols();
    double total = 0.0;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t u = 0; u < n; ++u) {
            const double d = w(i, u) - w_hat(i, u);
            if (d == 0.0) continue;
            const double* lu = l.row(u);
            for (std::size_t j = 0; j <= u; ++j) out[j] += d * lu[j];
        }
        for (double o : out) total += o * o;
    }
    return total;
}

/// Full alternating solve: T^0, then `iterations` rounds of
/// {assign_backsub, refit_codebook}. Both steps use the same preconditioned
/// Gram matrix; the recorded objectives always use the true X.
inline SolveResult solve(const DenseMatrix& w, const DenseMatrix& x, const SolverConfig& cfg) {
    cfg.validate();
    if (w.empty() || x.empty()) throw ArgumentError("solve: empty W or X");
    if (w.cols() != x.rows()) throw ArgumentError("solve: W columns differ from X rows");
    SolveResult result;
    SolveTrace& trace = result.trace;
    const std::size_t levels = level_count(cfg.bits);
    if (w.cols() < levels) {
        trace.warnings.push_back("row length " + std::to_string(w.cols()) + " is below the " +
                                 std::to_string(levels) + " codebook levels");
    }

    detail::Stopwatch sw;
    const GramMatrix raw = gram(x, cfg.threads);
    trace.timings.gram = sw.seconds();

    sw = {};
    trace.offsets = diagonal_offsets(raw, cfg.precond);
    const GramMatrix h = add_diagonal(raw, trace.offsets);
    const CholFactor l = cholesky(h);
    trace.timings.cholesky = sw.seconds();

    sw = {};
    Codebook t = init_codebook(w, cfg);
    trace.degenerate_rows = degenerate_rows(w);
    trace.timings.init = sw.seconds();

    sw = {};
    trace.initial_objective = objective(w, t, assign_nearest(w, t), x, cfg.threads);
    trace.timings.objective += sw.seconds();

    Assignment a;
    for (std::size_t k = 0; k < cfg.iterations; ++k) {
        sw = {};
        a = assign_backsub(w, t, l, cfg.threads);
        trace.timings.assign += sw.seconds();

        sw = {};
        auto refit = refit_codebook(w, std::move(a), h, t, cfg.threads);
        t = std::move(refit.codebook);
        a = std::move(refit.assignment);
        trace.timings.refit += sw.seconds();

        sw = {};
        trace.objectives.push_back(objective(w, t, a, x, cfg.threads));
        trace.timings.objective += sw.seconds();
    }
    result.weights = {std::move(t), std::move(a)};
    return result;
}

}  // namespace lutq
