#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "lutq/baselines.hpp"
#include "lutq/solver.hpp"
#include "oracles.hpp"

using lutq::Assignment;
using lutq::Codebook;
using lutq::DenseMatrix;
using lutq::GramMatrix;
using lutq::PrecondPolicy;
using lutq::SolverConfig;

namespace {

SolverConfig config(int bits, std::size_t iters = 10) {
    SolverConfig c;
    c.bits = bits;
    c.iterations = iters;
    return c;
}

Codebook random_codebook(std::size_t rows, int bits, std::mt19937_64& rng) {
    Codebook t(rows, lutq::level_count(bits));
    std::normal_distribution<double> nd;
    for (std::size_t i = 0; i < rows; ++i) {
        auto r = t.row(i);
        for (double& v : r) v = nd(rng);
        std::sort(r.begin(), r.end());
    }
    return t;
}

lutq::CholFactor factor(const DenseMatrix& x, PrecondPolicy p = PrecondPolicy::adaptive()) {
    return lutq::cholesky(lutq::precondition(lutq::gram(x), p));
}

// X whose rows have disjoint supports, so X X^T is diagonal.
DenseMatrix diagonal_gram_x(std::size_t n, std::size_t per_row, std::mt19937_64& rng) {
    DenseMatrix x(n, n * per_row);
    std::normal_distribution<double> nd;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < per_row; ++k) x(i, i * per_row + k) = nd(rng);
    return x;
}

// Independent evaluation of the column rule: for column j the suffix sum
// over u > j is recomputed from scratch.
std::vector<std::uint8_t> backsub_reference(const DenseMatrix& w, const Codebook& t, const lutq::CholFactor& l,
                                            std::size_t i) {
    const std::size_t n = w.cols();
    std::vector<std::uint8_t> q(n);
    std::vector<double> r(n);
    for (std::size_t j = n; j-- > 0;) {
        double s = 0.0;
        for (std::size_t u = j + 1; u < n; ++u) s += r[u] * l(u, j);
        const double target = w(i, j) + s / l(j, j);
        std::size_t best = 0;
        for (std::size_t k = 1; k < t.levels; ++k)
            if (std::abs(target - t(i, k)) < std::abs(target - t(i, best))) best = k;
        q[j] = static_cast<std::uint8_t>(best);
        r[j] = w(i, j) - t(i, best);
    }
    return q;
}

// min over all assignments of one row with the codebook held fixed.
double fixed_codebook_optimum(const DenseMatrix& w, const Codebook& t, const DenseMatrix& x) {
    const std::size_t n = w.cols();
    std::size_t total = 1;
    for (std::size_t j = 0; j < n; ++j) total *= t.levels;
    double best = std::numeric_limits<double>::infinity();
    const auto xr = oracle::to_rows(x);
    for (std::size_t code = 0; code < total; ++code) {
        oracle::Mat wh(1, std::vector<double>(n));
        std::size_t rest = code;
        for (std::size_t j = 0; j < n; ++j) {
            wh[0][j] = t(0, rest % t.levels);
            rest /= t.levels;
        }
        best = std::min(best, oracle::output_error(oracle::to_rows(w), wh, xr));
    }
    return best;
}

}  // namespace

TEST(InitCodebook, UniformGridEndpoints) {
    const Codebook t = lutq::init_codebook(DenseMatrix(1, 2, {0, 1}), config(1));
    EXPECT_EQ(t.values, (std::vector<double>{0, 1}));
    const Codebook g = lutq::init_codebook(DenseMatrix(1, 3, {-1, 2, 0.5}), config(2));
    EXPECT_EQ(g.values, (std::vector<double>{-1, 0, 1, 2}));
}

TEST(InitCodebook, KmeansFindsExactClusters) {
    SolverConfig c = config(1);
    c.init = lutq::InitMethod::kmeans_1d;
    EXPECT_EQ(lutq::init_codebook(DenseMatrix(1, 4, {0, 3, 3, 3}), c).values, (std::vector<double>{0, 3}));
}

TEST(InitCodebook, ConstantRowIsDegenerate) {
    const DenseMatrix w(2, 3, {5, 5, 5, 1, 2, 3});
    for (auto init : {lutq::InitMethod::uniform_grid, lutq::InitMethod::kmeans_1d}) {
        SolverConfig c = config(2);
        c.init = init;
        const Codebook t = lutq::init_codebook(w, c);
        for (double v : t.row(0)) EXPECT_EQ(v, 5.0);
    }
    EXPECT_EQ(lutq::degenerate_rows(w), std::vector<std::size_t>{0});
    std::mt19937_64 rng(1);
    const auto res = lutq::solve(w, oracle::gaussian(3, 24, rng), config(2));
    EXPECT_EQ(res.trace.degenerate_rows, std::vector<std::size_t>{0});
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(res.weights.codebook(0, res.weights.assignment(0, j)), 5.0);
}

// Lloyd from the grid lands within 5% of the optimal 4-level SSE (median).
TEST(InitCodebook, KmeansNearDpOptimum) {
    std::vector<double> ratios;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const DenseMatrix w = oracle::gaussian(1, 64, rng);
        const std::vector<double> row(w.elems().begin(), w.elems().end());
        const auto c = lutq::kmeans_1d(w.row(0), 4);
        ratios.push_back(oracle::nearest_sse(row, c) / oracle::optimal_kmeans_sse(row, 4));
    }
    std::nth_element(ratios.begin(), ratios.begin() + 50, ratios.end());
    EXPECT_LE(ratios[50], 1.05);
}

TEST(AssignBacksub, ExactEntriesMapToTheirLevels) {
    std::mt19937_64 rng(2);
    Codebook t(2, 4);
    t.values = {-1, 0, 0.5, 2, -3, -2, 1, 4};
    DenseMatrix w(2, 6);
    Assignment expect(2, 6);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            expect(i, j) = static_cast<std::uint8_t>((i + 3 * j) % 4);
            w(i, j) = t(i, expect(i, j));
        }
    EXPECT_EQ(lutq::assign_backsub(w, t, factor(oracle::gaussian(6, 30, rng))), expect);
}

TEST(AssignBacksub, SingleColumnIsNearestRounding) {
    Codebook t(3, 2);
    t.values = {0, 1, -1, 1, 2, 3};
    const DenseMatrix w(3, 1, {0.4, 0.2, 2.5});
    const auto a = lutq::assign_backsub(w, t, factor(DenseMatrix(1, 2, {2, 1})));
    EXPECT_EQ(a.idx, (std::vector<std::uint8_t>{0, 1, 0}));  // 2.5 ties toward the smaller index
}

TEST(AssignBacksub, MatchesColumnRuleFromScratch) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const DenseMatrix w = oracle::gaussian(3, 12, rng);
        const Codebook cb = random_codebook(3, 2, rng);
        const auto l = factor(oracle::gaussian(12, 40, rng));
        const Assignment a = lutq::assign_backsub(w, cb, l, 2);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto ref = backsub_reference(w, cb, l, i);
            EXPECT_TRUE(std::equal(ref.begin(), ref.end(), a.row(i).begin()));
        }
    }
}

TEST(AssignBacksub, DiagonalGramIsGloballyOptimalForFixedCodebook) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 30; ++t) {
        const DenseMatrix w = oracle::gaussian(1, 3, rng);
        const Codebook cb = random_codebook(1, 1, rng);
        const DenseMatrix x = diagonal_gram_x(3, 4, rng);
        const Assignment a = lutq::assign_backsub(w, cb, factor(x));
        EXPECT_EQ(a, lutq::assign_nearest(w, cb));
        EXPECT_LE(oracle::rel_diff(lutq::objective(w, cb, a, x), fixed_codebook_optimum(w, cb, x)), 1e-12);
    }
}

TEST(AssignBacksub, GreedyNeverBeatsExhaustiveForFixedCodebook) {
    std::mt19937_64 rng(5);
    int exact = 0;
    for (int t = 0; t < 50; ++t) {
        const DenseMatrix w = oracle::gaussian(1, 3, rng);
        const Codebook cb = random_codebook(1, 1, rng);
        const DenseMatrix x = oracle::gaussian(3, 6, rng);
        const Assignment a = lutq::assign_backsub(w, cb, factor(x, PrecondPolicy::off()));
        const double greedy = lutq::objective(w, cb, a, x);
        const double best = fixed_codebook_optimum(w, cb, x);
        EXPECT_GE(greedy, best * (1 - 1e-12));
        exact += oracle::rel_diff(greedy, best) < 1e-12;
    }
    RecordProperty("exact_of_50", exact);
}

TEST(RefitCodebook, SingleLevelIsWeightedMean) {
    std::mt19937_64 rng(6);
    const DenseMatrix w = oracle::gaussian(1, 5, rng);
    const GramMatrix h = lutq::gram(oracle::gaussian(5, 20, rng));
    const auto fit = lutq::refit_codebook(w, Assignment(1, 5), h, Codebook(1, 2));
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t k = 0; k < 5; ++k) {
            num += w(0, j) * h(j, k);
            den += h(j, k);
        }
    // level 0 used; the unused level keeps its previous value 0 and sorts accordingly
    const double mean = num / den;
    const std::size_t used = fit.assignment(0, 0);
    EXPECT_NEAR(fit.codebook(0, used), mean, 1e-12);
    EXPECT_EQ(fit.codebook(0, 1 - used), 0.0);
}

TEST(RefitCodebook, IdentityGramGivesClusterMeans) {
    const DenseMatrix w(1, 6, {1, 2, 3, 10, 20, 0.5});
    Assignment a(1, 6);
    a.idx = {0, 0, 0, 2, 2, 1};
    GramMatrix h(6);
    for (std::size_t i = 0; i < 6; ++i) h(i, i) = 1.0;
    Codebook prev(1, 4);
    prev.values = {0, 0, 0, 7};
    const auto fit = lutq::refit_codebook(w, a, h, prev);
    EXPECT_EQ(fit.codebook.values.size(), 4u);
    EXPECT_NEAR(fit.codebook(0, 0), 0.5, 1e-12);
    EXPECT_NEAR(fit.codebook(0, 1), 2.0, 1e-12);
    EXPECT_NEAR(fit.codebook(0, 2), 7.0, 1e-12);  // unused, kept
    EXPECT_NEAR(fit.codebook(0, 3), 15.0, 1e-12);
    EXPECT_EQ(fit.assignment.idx, (std::vector<std::uint8_t>{1, 1, 1, 3, 3, 0}));
}

// Least-squares optimality: never worse than before, and equal to a dense
// normal-equations solve over the used levels.
TEST(RefitProperty, MonotoneAndMatchesNormalEquations) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
        const std::size_t m = 1 + t % 4, n = 4 + t % 9;
        const int bits = 1 + t % 3;
        const DenseMatrix w = oracle::gaussian(m, n, rng);
        const DenseMatrix x = oracle::gaussian(n, n + 5, rng);
        const Codebook cb = random_codebook(m, bits, rng);
        const GramMatrix h = lutq::gram(x);
        const Assignment a = lutq::assign_backsub(w, cb, factor(x));
        const double before = lutq::objective(w, cb, a, x);
        const auto fit = lutq::refit_codebook(w, a, h, cb);
        EXPECT_LE(lutq::objective(w, fit.codebook, fit.assignment, x), before * (1 + 1e-9));

        const DenseMatrix wh = lutq::reconstruct(fit.codebook, fit.assignment);
        for (std::size_t i = 0; i < m; ++i) {
            std::vector<std::size_t> used;
            for (std::uint8_t q : a.row(i))
                if (std::find(used.begin(), used.end(), q) == used.end()) used.push_back(q);
            // dense one-hot S (used levels only)
            oracle::Mat s(used.size(), std::vector<double>(n, 0.0));
            for (std::size_t j = 0; j < n; ++j)
                s[static_cast<std::size_t>(std::find(used.begin(), used.end(), a(i, j)) - used.begin())][j] = 1.0;
            const auto hr = oracle::to_rows(DenseMatrix(n, n, h.elems));
            const auto shst = oracle::matmul(oracle::matmul(s, hr), oracle::transpose(s));
            const auto whs = oracle::matmul(oracle::to_rows(DenseMatrix(1, n, {w.row(i).begin(), w.row(i).end()})),
                                            oracle::matmul(hr, oracle::transpose(s)));
            const auto tv = oracle::solve(shst, whs[0]);
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t k = static_cast<std::size_t>(std::find(used.begin(), used.end(), a(i, j)) - used.begin());
                EXPECT_NEAR(wh(i, j), tv[k], 1e-7 * (1 + std::abs(tv[k])));
            }
        }
        for (std::size_t i = 0; i < m; ++i) EXPECT_TRUE(std::is_sorted(fit.codebook.row(i).begin(), fit.codebook.row(i).end()));
    }
}

TEST(Objective, HandChecked) {
    std::mt19937_64 rng(8);
    const DenseMatrix w(1, 3, {1, 2, 3});
    Codebook t(1, 4);
    t.values = {1, 2, 3, 4};
    Assignment exact(1, 3);
    exact.idx = {0, 1, 2};
    EXPECT_EQ(lutq::objective(w, t, exact, oracle::gaussian(3, 5, rng)), 0.0);

    Assignment off(1, 3);
    off.idx = {1, 1, 3};
    const DenseMatrix eye(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    EXPECT_EQ(lutq::objective(w, t, off, eye), 1.0 + 0.0 + 1.0);
    EXPECT_THROW(lutq::objective(w, t, off, DenseMatrix(2, 2)), lutq::ArgumentError);
}

TEST(Objective, AgreesWithExplicitProducts) {
    std::mt19937_64 rng(9);
    const DenseMatrix w = oracle::gaussian(4, 7, rng), x = oracle::gaussian(7, 11, rng);
    const Codebook t = random_codebook(4, 2, rng);
    const Assignment a = lutq::assign_nearest(w, t);
    const double ref = oracle::output_error(oracle::to_rows(w), oracle::to_rows(lutq::reconstruct(t, a)), oracle::to_rows(x));
    EXPECT_LE(oracle::rel_diff(lutq::objective(w, t, a, x), ref), 1e-12);
}

TEST(ObjectiveProperty, LFormIdentityWithAndWithoutOffsets) {
    std::mt19937_64 rng(10);
    for (int t = 0; t < 30; ++t) {
        const DenseMatrix w = oracle::gaussian(3, 8, rng), x = oracle::gaussian(8, 20, rng);
        const Codebook cb = random_codebook(3, 2, rng);
        const Assignment a = lutq::assign_nearest(w, cb);
        const double xform = lutq::objective(w, cb, a, x);
        const GramMatrix raw = lutq::gram(x);
        EXPECT_LE(oracle::rel_diff(lutq::objective_lform(w, cb, a, lutq::cholesky(raw)), xform), 1e-5);

        const auto delta = lutq::diagonal_offsets(raw, PrecondPolicy::adaptive());
        const auto l = lutq::cholesky(lutq::add_diagonal(raw, delta));
        const DenseMatrix wh = lutq::reconstruct(cb, a);
        double correction = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 8; ++j) correction += delta[j] * (w(i, j) - wh(i, j)) * (w(i, j) - wh(i, j));
        EXPECT_LE(oracle::rel_diff(lutq::objective_lform(w, cb, a, l), xform + correction), 1e-5);
    }
}

TEST(Solve, RepresentableWeightsReachZero) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> pick(0, 7);
    for (int bits : {1, 2, 3}) {
        const std::size_t levels = lutq::level_count(bits), n = 16;
        DenseMatrix w(3, n);
        for (std::size_t i = 0; i < 3; ++i) {
            const double lo = -1.0 - static_cast<double>(i), hi = 2.0 + 0.5 * static_cast<double>(i);
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t s = j < levels ? j : static_cast<std::size_t>(pick(rng)) % levels;
                w(i, j) = s + 1 == levels ? hi : lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(levels - 1);
            }
        }
        const DenseMatrix x = oracle::gaussian(n, 64, rng);
        const auto res = lutq::solve(w, x, config(bits));
        EXPECT_LE(res.trace.objectives.back(), 1e-20) << "bits " << bits;
        EXPECT_LE(lutq::frobenius_error(w, lutq::reconstruct(res.weights.codebook, res.weights.assignment)), 1e-24);
    }
}

TEST(Solve, BeatsRoundToNearestOnSmallGaussian) {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const DenseMatrix w = oracle::gaussian(4, 6, rng), x = oracle::gaussian(6, 8, rng);
        const auto res = lutq::solve(w, x, config(1));
        const auto rtn = lutq::rtn_quantize(w, 1);
        wins += res.trace.objectives.back() <= lutq::objective(w, rtn.codebook, rtn.assignment, x);
    }
    EXPECT_GE(wins, 95);
}

TEST(Solve, CloseToExhaustiveOptimum) {
    std::vector<double> gaps;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed + 1000);
        const DenseMatrix w = oracle::gaussian(2, 4, rng), x = oracle::gaussian(4, 8, rng);
        const double got = lutq::solve(w, x, config(1)).trace.objectives.back();
        double best = 0.0;
        for (std::size_t i = 0; i < 2; ++i) best += lutq::exhaustive_oracle(w.row(i), x, 1).objective;
        EXPECT_GE(got, best * (1 - 1e-9));
        gaps.push_back((got - best) / best);
    }
    std::nth_element(gaps.begin(), gaps.begin() + 50, gaps.end());
    EXPECT_LE(gaps[50], 0.10);
}

TEST(Solve, TraceAndValidation) {
    std::mt19937_64 rng(12);
    const DenseMatrix w = oracle::gaussian(3, 5, rng), x = oracle::gaussian(5, 40, rng);
    const auto res = lutq::solve(w, x, config(4, 3));
    EXPECT_EQ(res.trace.objectives.size(), 3u);
    EXPECT_EQ(res.trace.offsets.size(), 5u);
    EXPECT_FALSE(res.trace.warnings.empty());  // n = 5 < 16 levels
    for (double v : res.trace.objectives) EXPECT_GE(v, 0.0);
    EXPECT_THROW(lutq::solve(w, x, config(4, 0)), lutq::ArgumentError);
    EXPECT_THROW(lutq::solve(w, x, config(0)), lutq::ArgumentError);
    EXPECT_THROW(lutq::solve(w, x, config(9)), lutq::ArgumentError);
    EXPECT_THROW(lutq::solve(w, oracle::gaussian(4, 8, rng), config(2)), lutq::ArgumentError);
}

TEST(SolveProperty, RowIndependenceAndThreadDeterminism) {
    std::mt19937_64 rng(13);
    const DenseMatrix w = oracle::gaussian(6, 20, rng), x = oracle::gaussian(20, 160, rng);
    SolverConfig c = config(3);
    const auto base = lutq::solve(w, x, c);
    for (std::size_t threads : {2u, 8u}) {
        c.threads = threads;
        const auto r = lutq::solve(w, x, c);
        EXPECT_EQ(r.weights.assignment, base.weights.assignment);
        EXPECT_EQ(r.weights.codebook, base.weights.codebook);
        EXPECT_EQ(r.trace.objectives, base.trace.objectives);
    }
    c.threads = 1;
    for (std::size_t i = 0; i < 6; ++i) {
        const DenseMatrix wi(1, 20, {w.row(i).begin(), w.row(i).end()});
        const auto r = lutq::solve(wi, x, c);
        EXPECT_TRUE(std::equal(r.weights.assignment.idx.begin(), r.weights.assignment.idx.end(),
                               base.weights.assignment.row(i).begin()));
        for (std::size_t s = 0; s < 8; ++s) EXPECT_NEAR(r.weights.codebook(0, s), base.weights.codebook(i, s), 1e-12);
    }
}
