#include <random>

#include <gtest/gtest.h>

#include "lutq/gram_cholesky.hpp"
#include "oracles.hpp"

using lutq::CholFactor;
using lutq::DenseMatrix;
using lutq::GramMatrix;
using lutq::PrecondPolicy;

namespace {

GramMatrix make_gram(std::size_t n, std::vector<double> e) {
    GramMatrix h(n);
    h.elems = std::move(e);
    return h;
}

// X with duplicated and zero rows: X X^T is singular.
DenseMatrix rank_deficient(std::size_t n, std::size_t p, std::mt19937_64& rng) {
    DenseMatrix x = oracle::gaussian(n, p, rng, 3.0);
    for (std::size_t i = 1; i < n; i += 3) {
        for (std::size_t k = 0; k < p; ++k) x(i, k) = x(i - 1, k);
    }
    for (std::size_t k = 0; k < p; ++k) x(n - 1, k) = 0.0;
    return x;
}

double reconstruction_rel_error(const CholFactor& l, const GramMatrix& h) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < h.dim; ++i)
        for (std::size_t j = 0; j < h.dim; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < h.dim; ++k) s += l(i, k) * l(j, k);
            num += (s - h(i, j)) * (s - h(i, j));
            den += h(i, j) * h(i, j);
        }
    return std::sqrt(num / den);
}

oracle::Mat square(const DenseMatrix& m) { return oracle::to_rows(m); }

double max_abs_diff(const oracle::Mat& a, const oracle::Mat& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) d = std::max(d, std::abs(a[i][j] - b[i][j]));
    return d;
}

}  // namespace

TEST(Gram, HandChecked) {
    const GramMatrix h = lutq::gram(DenseMatrix(2, 2, {1, 0, 0, 1}));
    EXPECT_EQ(h.elems, (std::vector<double>{1, 0, 0, 1}));
    EXPECT_EQ(lutq::gram(DenseMatrix(1, 2, {1, 1})).elems, std::vector<double>{2});
}

TEST(Gram, MatchesTripleLoopAndIsExactlySymmetric) {
    std::mt19937_64 rng(1);
    const DenseMatrix x = oracle::gaussian(8, 32, rng);
    const auto rows = oracle::to_rows(x);
    const auto ref = oracle::matmul(rows, oracle::transpose(rows));
    for (std::size_t threads : {1u, 3u}) {
        const GramMatrix h = lutq::gram(x, threads);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                EXPECT_LE(oracle::rel_diff(h(i, j), ref[i][j]), 1e-12);
                EXPECT_EQ(h(i, j), h(j, i));
            }
        EXPECT_EQ(h.elems, lutq::gram(x).elems);
    }
}

TEST(Precondition, AdaptiveOnIdentityUsesFloor) {
    const GramMatrix h = make_gram(2, {1, 0, 0, 1});
    const auto d = lutq::diagonal_offsets(h, PrecondPolicy::adaptive());
    EXPECT_DOUBLE_EQ(d[0], 1e-8 + 1e-9);
    EXPECT_DOUBLE_EQ(d[1], 1e-8 + 1e-9);
    const GramMatrix p = lutq::precondition(h, PrecondPolicy::adaptive());
    EXPECT_DOUBLE_EQ(p(0, 0), 1.0 + 1e-8 + 1e-9);
    EXPECT_EQ(p(0, 1), 0.0);
}

TEST(Precondition, AdaptiveTieCaseAdmitsCholesky) {
    const GramMatrix h = make_gram(2, {1, 3, 3, 1});
    const auto d = lutq::diagonal_offsets(h, PrecondPolicy::adaptive());
    EXPECT_DOUBLE_EQ(d[0], 2.0 + 1e-9);
    const GramMatrix p = lutq::add_diagonal(h, d);
    EXPECT_GT(p(0, 0), std::abs(p(0, 1)));
    const CholFactor l = lutq::cholesky(p);
    EXPECT_GT(l(1, 1), 0.0);
    EXPECT_LE(reconstruction_rel_error(l, p), 1e-8);
}

TEST(Precondition, FixedLambda) {
    const GramMatrix p = lutq::precondition(make_gram(2, {1, 0, 0, 1}), PrecondPolicy::fixed(0.5));
    EXPECT_EQ(p.elems, (std::vector<double>{1.5, 0, 0, 1.5}));
    EXPECT_THROW(lutq::precondition(p, PrecondPolicy::fixed(0.0)), lutq::ArgumentError);
    EXPECT_THROW(lutq::precondition(p, PrecondPolicy::fixed(-1.0)), lutq::ArgumentError);
    EXPECT_EQ(lutq::precondition(p, PrecondPolicy::off()).elems, p.elems);
}

TEST(Precondition, PolicyParsing) {
    EXPECT_EQ(PrecondPolicy::parse("adaptive").mode, PrecondPolicy::Mode::adaptive_dominance);
    EXPECT_EQ(PrecondPolicy::parse("off").mode, PrecondPolicy::Mode::off);
    const auto f = PrecondPolicy::parse("lambda=40");
    EXPECT_EQ(f.mode, PrecondPolicy::Mode::fixed_lambda);
    EXPECT_EQ(f.lambda, 40.0);
    EXPECT_EQ(f.to_string(), "lambda=40");
    EXPECT_EQ(PrecondPolicy::fixed(0.5).to_string(), "lambda=0.5");
    EXPECT_THROW(PrecondPolicy::parse("lambda=0"), lutq::ArgumentError);
    EXPECT_THROW(PrecondPolicy::parse("lambda=x"), lutq::ArgumentError);
    EXPECT_THROW(PrecondPolicy::parse("ridge"), lutq::ArgumentError);
}

TEST(PreconditionProperty, StrictDominanceAndCholeskyOnRankDeficientX) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 50; ++t) {
        const DenseMatrix x = rank_deficient(4 + t % 13, 3 + t % 7, rng);
        const GramMatrix raw = lutq::gram(x);
        const GramMatrix p = lutq::precondition(raw, PrecondPolicy::adaptive());
        for (std::size_t i = 0; i < p.dim; ++i) {
            double off = 0.0;
            for (std::size_t j = 0; j < p.dim; ++j)
                if (j != i) off += std::abs(p(i, j));
            EXPECT_GE(p(i, i) - off, 1e-9);
        }
        EXPECT_NO_THROW(lutq::cholesky(p));
    }
}

TEST(PreconditionProperty, FixedLambdaLowerBound) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 30; ++t) {
        const DenseMatrix x = rank_deficient(6, 2, rng);
        const double lambda = 0.5 * (t + 1);
        const GramMatrix p = lutq::precondition(lutq::gram(x), PrecondPolicy::fixed(lambda));
        const DenseMatrix v = oracle::gaussian(1, 6, rng);
        double quad = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            norm += v(0, i) * v(0, i);
            for (std::size_t j = 0; j < 6; ++j) quad += v(0, i) * p(i, j) * v(0, j);
        }
        EXPECT_GE(quad, lambda * norm * (1 - 1e-12));
    }
}

TEST(Cholesky, HandChecked) {
    const CholFactor eye = lutq::cholesky(make_gram(3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    EXPECT_EQ(eye.elems, (std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1}));
    const CholFactor l = lutq::cholesky(make_gram(2, {4, 2, 2, 5}));
    EXPECT_EQ(l.elems, (std::vector<double>{2, 0, 1, 2}));
}

TEST(Cholesky, NonPositivePivotNamesIndex) {
    try {
        lutq::cholesky(make_gram(3, {1, 0, 0, 0, 1, 2, 0, 2, 1}));
        FAIL() << "expected DefinitenessError";
    } catch (const lutq::DefinitenessError& e) {
        EXPECT_EQ(e.index(), 2u);
    }
    std::mt19937_64 rng(2);
    EXPECT_THROW(lutq::cholesky(lutq::gram(rank_deficient(6, 8, rng))), lutq::DefinitenessError);
}

TEST(CholeskyProperty, ReconstructsRandomSpd) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 10; ++t) {
        const DenseMatrix a = oracle::gaussian(32, 32, rng);
        GramMatrix h = lutq::gram(a);  // A A^T, then + I
        for (std::size_t i = 0; i < 32; ++i) h(i, i) += 1.0;
        const CholFactor l = lutq::cholesky(h);
        for (std::size_t i = 0; i < 32; ++i) {
            EXPECT_GT(l(i, i), 0.0);
            for (std::size_t j = i + 1; j < 32; ++j) EXPECT_EQ(l(i, j), 0.0);
        }
        EXPECT_LE(reconstruction_rel_error(l, h), 1e-8);
    }
}

TEST(Pinv, HandChecked) {
    std::vector<double> eye(256, 0.0);
    for (std::size_t i = 0; i < 16; ++i) eye[i * 16 + i] = 1.0;
    const DenseMatrix i16(16, 16, eye);
    const DenseMatrix pi = lutq::pinv_small(i16);
    for (std::size_t k = 0; k < 256; ++k) EXPECT_NEAR(pi.elems()[k], eye[k], 1e-15);

    const DenseMatrix d = lutq::pinv_small(DenseMatrix(2, 2, {2, 0, 0, 0}));
    EXPECT_NEAR(d(0, 0), 0.5, 1e-15);
    EXPECT_EQ(d(0, 1), 0.0);
    EXPECT_EQ(d(1, 1), 0.0);

    EXPECT_EQ(lutq::pinv_small(DenseMatrix(3, 3)), DenseMatrix(3, 3));
    EXPECT_THROW(lutq::pinv_small(DenseMatrix(2, 3)), lutq::ArgumentError);
    EXPECT_THROW(lutq::pinv_small(DenseMatrix(257, 257)), lutq::ArgumentError);
}

// All four Penrose identities on random 16x16 matrices of every rank.
TEST(PinvProperty, PenroseIdentitiesAtEveryRank) {
    std::mt19937_64 rng(6);
    for (std::size_t rank = 0; rank <= 16; ++rank) {
        oracle::Mat m(16, std::vector<double>(16, 0.0));
        if (rank > 0) {
            const auto u = oracle::to_rows(oracle::gaussian(16, rank, rng));
            const auto v = oracle::to_rows(oracle::gaussian(rank, 16, rng));
            m = oracle::matmul(u, v);
        }
        std::vector<double> flat;
        for (const auto& r : m) flat.insert(flat.end(), r.begin(), r.end());
        const auto mp = square(lutq::pinv_small(DenseMatrix(16, 16, flat)));
        const auto mmp = oracle::matmul(m, mp);
        const auto mpm = oracle::matmul(mp, m);
        EXPECT_LE(max_abs_diff(oracle::matmul(mmp, m), m), 1e-7) << "rank " << rank;
        EXPECT_LE(max_abs_diff(oracle::matmul(mpm, mp), mp), 1e-7) << "rank " << rank;
        EXPECT_LE(max_abs_diff(mmp, oracle::transpose(mmp)), 1e-7) << "rank " << rank;
        EXPECT_LE(max_abs_diff(mpm, oracle::transpose(mpm)), 1e-7) << "rank " << rank;
    }
}
