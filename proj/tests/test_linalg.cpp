#include <gtest/gtest.h>

#include <cmath>

#include "driftlab/mat.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/svd.hpp"
#include "gram_oracle.hpp"

using namespace driftlab;

namespace {

Mat random_mat(int rows, int cols, uint64_t seed) {
    Mat m(rows, cols);
    RandomStream rng{seed, 0x6D6174ULL};
    for (double& v : m.data) v = rng.next_gaussian();
    return m;
}

Mat random_rank_k(int rows, int cols, int k, uint64_t seed) {
    return matmul(random_mat(rows, k, seed), random_mat(k, cols, seed + 1));
}

void expect_factors_valid(const Mat& a, const SvdFactors& f) {
    EXPECT_LE(identity_residual(matmul_at_b(f.u, f.u)), 1e-10);
    EXPECT_LE(identity_residual(matmul_at_b(f.v, f.v)), 1e-10);
    for (int i = 0; i < f.rank; ++i) {
        EXPECT_GE(f.sigmas[i], 0.0);
        if (i > 0) {
            EXPECT_LE(f.sigmas[i], f.sigmas[i - 1]);
        }
    }
    const double resid = frob_norm(sub(a, reconstruct(f)));
    EXPECT_LE(resid, 1e-8 * std::max(1.0, frob_norm(a)));
}

}  // namespace

TEST(Svd, DiagonalWithZero) {
    Mat a(2, 2);
    a(0, 0) = 5.0;
    const SvdFactors f = svd(a);
    ASSERT_EQ(f.rank, 2);
    EXPECT_DOUBLE_EQ(f.sigmas[0], 5.0);
    EXPECT_DOUBLE_EQ(f.sigmas[1], 0.0);
    expect_factors_valid(a, f);
}

TEST(Svd, PermutedDiagonal) {
    Mat a(2, 2);
    a(0, 1) = 2.0;
    a(1, 0) = 1.0;
    const SvdFactors f = svd(a);
    ASSERT_EQ(f.rank, 2);
    EXPECT_NEAR(f.sigmas[0], 2.0, 1e-12);
    EXPECT_NEAR(f.sigmas[1], 1.0, 1e-12);
    // A v1 = sigma1 u1 with u1 = e1, v1 = e2 under the sign convention.
    EXPECT_NEAR(f.u(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(f.u(1, 0), 0.0, 1e-12);
    EXPECT_NEAR(f.v(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(f.v(1, 0), 1.0, 1e-12);
    expect_factors_valid(a, f);
}

TEST(Svd, ExactRankTwoAgainstOracle) {
    const Mat a = random_rank_k(6, 4, 2, 11);
    const SvdFactors f = svd(a);
    ASSERT_EQ(f.rank, 4);
    EXPECT_LE(f.sigmas[2], 1e-10 * f.sigmas[0]);
    EXPECT_LE(f.sigmas[3], 1e-10 * f.sigmas[0]);
    EXPECT_LE(frob_norm(sub(a, reconstruct(f))), 1e-10 * frob_norm(a));
    expect_factors_valid(a, f);

    const SvdFactors g = testsupport::gram_svd_oracle(a);
    ASSERT_GE(g.rank, 2);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(f.sigmas[i], g.sigmas[i], 1e-8 * g.sigmas[0]);
}

TEST(Svd, SignConventionIsDeterministic) {
    const Mat a = random_mat(7, 5, 21);
    const SvdFactors f1 = svd(a);
    const SvdFactors f2 = svd(a);
    EXPECT_EQ(f1.u.data, f2.u.data);
    EXPECT_EQ(f1.v.data, f2.v.data);
    EXPECT_EQ(f1.sigmas, f2.sigmas);
    for (int j = 0; j < f1.rank; ++j) {
        double amax = 0.0, signed_val = 0.0;
        for (int i = 0; i < f1.u.rows; ++i)
            if (std::fabs(f1.u(i, j)) > amax) {
                amax = std::fabs(f1.u(i, j));
                signed_val = f1.u(i, j);
            }
        EXPECT_GE(signed_val, 0.0);
    }
}

TEST(Svd, RejectsNonFiniteNamingEntry) {
    Mat a(2, 3);
    a(1, 2) = std::nan("");
    try {
        svd(a);
        FAIL() << "expected rejection";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("(1,2)"), std::string::npos);
    }
}

TEST(Svd, WideAndTallAndTiny) {
    for (auto [r, c] : {std::pair{1, 4}, {4, 1}, {2, 2}, {3, 9}, {9, 3}}) {
        const Mat a = random_mat(r, c, 100 + static_cast<uint64_t>(r * 16 + c));
        const SvdFactors f = svd(a);
        EXPECT_EQ(f.rank, std::min(r, c));
        expect_factors_valid(a, f);
    }
}

TEST(Truncate, DiagonalEckartYoung) {
    Mat a(3, 3);
    a(0, 0) = 3.0;
    a(1, 1) = 2.0;
    a(2, 2) = 1.0;
    const SvdFactors f2 = truncate(svd(a), 2);
    const Mat rec = reconstruct(f2);
    EXPECT_NEAR(rec(0, 0), 3.0, 1e-12);
    EXPECT_NEAR(rec(1, 1), 2.0, 1e-12);
    EXPECT_NEAR(rec(2, 2), 0.0, 1e-12);
    EXPECT_NEAR(frob_norm(sub(a, rec)), 1.0, 1e-12);
}

TEST(Truncate, KAboveRankIsIdentity) {
    const Mat a = random_mat(4, 6, 31);
    const SvdFactors f = svd(a);
    const SvdFactors t = truncate(f, 99);
    EXPECT_EQ(t.rank, f.rank);
    EXPECT_EQ(t.sigmas, f.sigmas);
    EXPECT_EQ(t.u.data, f.u.data);
    EXPECT_EQ(t.v.data, f.v.data);
}

TEST(Truncate, ErrorIdentityAndRandomSearchOracle) {
    const Mat a = random_mat(8, 8, 41);
    const SvdFactors f = svd(a);
    const SvdFactors f3 = truncate(f, 3);
    const double err = frob_norm(sub(a, reconstruct(f3)));

    double tail = 0.0;
    for (int i = 3; i < f.rank; ++i) tail += f.sigmas[i] * f.sigmas[i];
    EXPECT_NEAR(err, std::sqrt(tail), 1e-10 * std::sqrt(tail));

    // No rank-3 candidate sampled around the truncation should do better.
    RandomStream rng{97};
    for (int trial = 0; trial < 10000; ++trial) {
        Mat bu(8, 3), bv(8, 3);
        std::vector<double> bs(3);
        const double scale = trial == 0 ? 0.0 : std::pow(10.0, -6.0 + 6.0 * rng.next_double());
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 3; ++j) {
                bu(i, j) = f3.u(i, j) + scale * rng.next_gaussian();
                bv(i, j) = f3.v(i, j) + scale * rng.next_gaussian();
            }
        for (int j = 0; j < 3; ++j) bs[j] = f3.sigmas[j] + scale * rng.next_gaussian();
        Mat cand(8, 8);
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j) cand(i, j) += bs[k] * bu(i, k) * bv(j, k);
        EXPECT_GE(frob_norm(sub(a, cand)), err - 1e-12);
    }
}

TEST(Orthonormalize, IdentityPassesThrough) {
    const Mat q = orthonormalize(Mat::identity(3));
    EXPECT_EQ(q.cols, 3);
    EXPECT_LE(identity_residual(q), 1e-15);
}

TEST(Orthonormalize, DropsDependentColumn) {
    Mat m(3, 2);
    m(0, 0) = 1.0;
    m(0, 1) = 2.0;
    const Mat q = orthonormalize(m);
    ASSERT_EQ(q.cols, 1);
    EXPECT_NEAR(std::fabs(q(0, 0)), 1.0, 1e-15);
}

TEST(Orthonormalize, ZeroMatrixGivesEmptyBasis) {
    const Mat q = orthonormalize(Mat(4, 2));
    EXPECT_EQ(q.cols, 0);
    EXPECT_EQ(q.rows, 4);
}

TEST(Orthonormalize, SpanIsPreserved) {
    const Mat m = random_mat(10, 4, 51);
    const Mat q = orthonormalize(m);
    ASSERT_EQ(q.cols, 4);
    EXPECT_LE(identity_residual(matmul_at_b(q, q)), 1e-12);
    // Projector equality: Q Q^T M = M when Q spans col(M).
    const Mat proj = matmul(q, matmul_at_b(q, m));
    EXPECT_LE(frob_norm(sub(proj, m)), 1e-10 * frob_norm(m));
}

TEST(Orthonormalize, RejectsWideInput) {
    EXPECT_THROW(orthonormalize(Mat(2, 5)), std::invalid_argument);
}

TEST(GramOracle, DiagonalAndZero) {
    Mat a(2, 2);
    a(0, 0) = 3.0;
    a(1, 1) = 2.0;
    const SvdFactors f = testsupport::gram_svd_oracle(a);
    ASSERT_EQ(f.rank, 2);
    EXPECT_NEAR(f.sigmas[0], 3.0, 1e-12);
    EXPECT_NEAR(f.sigmas[1], 2.0, 1e-12);

    EXPECT_EQ(testsupport::gram_svd_oracle(Mat(3, 3)).rank, 0);
}

TEST(GramOracle, AgreesWithSvdOnRandomMatrices) {
    for (int trial = 0; trial < 100; ++trial) {
        const Mat a = random_mat(5, 7, 1000 + static_cast<uint64_t>(trial));
        const SvdFactors f = svd(a);
        const SvdFactors g = testsupport::gram_svd_oracle(a);
        ASSERT_EQ(g.rank, 5);
        for (int i = 0; i < 5; ++i) EXPECT_NEAR(f.sigmas[i], g.sigmas[i], 1e-8 * g.sigmas[0]);
    }
}

TEST(Svd, PropertySweepSmallSizes) {
    RandomStream pick{7777};
    for (int trial = 0; trial < 40; ++trial) {
        const int r = 2 + static_cast<int>(pick.next_below(31));
        const int c = 2 + static_cast<int>(pick.next_below(31));
        const Mat a = random_mat(r, c, 5000 + static_cast<uint64_t>(trial));
        const SvdFactors f = svd(a);
        expect_factors_valid(a, f);

        const int k = 1 + static_cast<int>(pick.next_below(static_cast<uint64_t>(f.rank)));
        const SvdFactors fk = truncate(f, k);
        double tail = 0.0;
        for (int i = k; i < f.rank; ++i) tail += f.sigmas[i] * f.sigmas[i];
        const double err2 = std::pow(frob_norm(sub(a, reconstruct(fk))), 2.0);
        EXPECT_NEAR(err2, tail, 1e-10 * std::max(1.0, tail));
    }
}
