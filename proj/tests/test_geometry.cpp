#include <gtest/gtest.h>

#include <cmath>

#include "driftlab/geometry.hpp"
#include "driftlab/rng.hpp"

using namespace driftlab;

namespace {

Mat random_mat(int rows, int cols, uint64_t seed) {
    Mat m(rows, cols);
    RandomStream rng{seed, 0x67656FULL};
    for (double& v : m.data) v = rng.next_gaussian();
    return m;
}

Mat random_orthonormal(int rows, int cols, uint64_t seed) { return orthonormalize(random_mat(rows, cols, seed)); }

Checkpoint fake_checkpoint(uint64_t seed, int64_t step) {
    Checkpoint c;
    c.meta.run_id = "fake";
    c.meta.step = step;
    c.meta.seed = seed;
    int i = 0;
    for (int layer = 0; layer < 2; ++layer)
        for (const auto& fam : module_families())
            c.tensors.emplace("layers." + std::to_string(layer) + "." + fam, random_mat(6, 5, seed + 100 * i++));
    // Non-tracked tensors must be carried but excluded from deltas.
    c.tensors.emplace("tok_embed", random_mat(4, 3, seed + 9001));
    c.tensors.emplace("unembed", random_mat(4, 3, seed + 9002));
    return c;
}

Mat basis_cols(int rows, std::initializer_list<int> axes) {
    Mat m(rows, static_cast<int>(axes.size()));
    int j = 0;
    for (int a : axes) m(a, j++) = 1.0;
    return m;
}

}  // namespace

TEST(Delta, IdenticalCheckpointsGiveZeroDeltas) {
    const Checkpoint a = fake_checkpoint(5, 0);
    const NamedDelta d = delta(a, a);
    EXPECT_EQ(d.entries.size(), 12u);
    for (const auto& [name, m] : d.entries) EXPECT_EQ(frob_norm(m), 0.0);
    EXPECT_EQ(d.entries.count("tok_embed"), 0u);
}

TEST(Delta, DirectSubtraction) {
    Checkpoint a, b;
    Mat wa(2, 2, {1, 2, 3, 4});
    Mat wb(2, 2, {1, 1, 1, 1});
    a.tensors.emplace("layers.0.q_proj", wa);
    b.tensors.emplace("layers.0.q_proj", wb);
    const NamedDelta d = delta(a, b);
    const Mat& dw = d.entries.at("layers.0.q_proj");
    EXPECT_EQ(dw.data, (std::vector<double>{0, 1, 2, 3}));
}

TEST(Delta, MismatchListsOffendingNames) {
    Checkpoint a = fake_checkpoint(5, 0);
    Checkpoint b = fake_checkpoint(5, 1);
    b.tensors.erase("layers.1.up_proj");
    b.tensors.at("layers.0.q_proj") = Mat(3, 3);
    try {
        delta(a, b);
        FAIL() << "expected mismatch";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("layers.1.up_proj"), std::string::npos);
        EXPECT_NE(msg.find("layers.0.q_proj"), std::string::npos);
    }
}

TEST(DominantSubspace, RankOneOuterProduct) {
    NamedDelta d;
    Mat dw(4, 4);
    dw(0, 0) = 3.0;  // 3 * e1 e1^T
    d.entries.emplace("layers.0.q_proj", dw);
    const DominantSubspace s = dominant_subspace(d, "layers.0.q_proj", 1);
    ASSERT_EQ(s.k, 1);
    EXPECT_NEAR(s.sigmas[0], 3.0, 1e-12);
    EXPECT_NEAR(s.u(0, 0), 1.0, 1e-12);
    for (int i = 1; i < 4; ++i) EXPECT_NEAR(s.u(i, 0), 0.0, 1e-12);
}

TEST(DominantSubspace, DiagonalTopTwo) {
    NamedDelta d;
    Mat dw(3, 3);
    dw(0, 0) = 3.0;
    dw(1, 1) = 2.0;
    dw(2, 2) = 1.0;
    d.entries.emplace("layers.0.k_proj", dw);
    const DominantSubspace s = dominant_subspace(d, "layers.0.k_proj", 2);
    ASSERT_EQ(s.k, 2);
    EXPECT_NEAR(s.sigmas[0], 3.0, 1e-12);
    EXPECT_NEAR(s.sigmas[1], 2.0, 1e-12);
    EXPECT_NEAR(s.u(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(s.u(1, 1), 1.0, 1e-12);
}

TEST(DominantSubspace, ZeroDeltaIsAnError) {
    NamedDelta d;
    d.entries.emplace("layers.0.v_proj", Mat(4, 4));
    EXPECT_THROW(dominant_subspace(d, "layers.0.v_proj", 1), std::runtime_error);
}

TEST(ApplyTruncatedUpdate, KeySelectsNothing) {
    const Mat a = random_mat(5, 4, 7);
    const SvdFactors f = svd(a);
    const int k = 2;
    std::vector<double> h = {1.0, -0.5, 0.25, 2.0};
    for (int j = 0; j < k; ++j) {  // project out v1..vk so no key fires
        double proj = 0.0;
        for (int i = 0; i < 4; ++i) proj += f.v(i, j) * h[i];
        for (int i = 0; i < 4; ++i) h[i] -= proj * f.v(i, j);
    }
    const std::vector<double> y = apply_truncated_update(f, k, h);
    for (double v : y) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(ApplyTruncatedUpdate, SingleKeyValueHit) {
    const Mat a = random_mat(6, 3, 8);
    const SvdFactors f = svd(a);
    std::vector<double> v1(3);
    for (int i = 0; i < 3; ++i) v1[i] = f.v(i, 0);
    const std::vector<double> y = apply_truncated_update(f, 1, v1);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(y[i], f.sigmas[0] * f.u(i, 0), 1e-12);
}

TEST(ApplyTruncatedUpdate, MatchesDenseReconstructionProduct) {
    RandomStream rng{99};
    for (int trial = 0; trial < 100; ++trial) {
        const int rows = 2 + static_cast<int>(rng.next_below(6));
        const int cols = 2 + static_cast<int>(rng.next_below(6));
        const Mat a = random_mat(rows, cols, 500 + static_cast<uint64_t>(trial));
        const SvdFactors f = svd(a);
        const int k = 1 + static_cast<int>(rng.next_below(3));
        std::vector<double> h(cols);
        for (double& x : h) x = rng.next_gaussian();

        const Mat dense = reconstruct(truncate(f, k));
        const std::vector<double> y = apply_truncated_update(f, k, h);
        for (int i = 0; i < rows; ++i) {
            double want = 0.0;
            for (int j = 0; j < cols; ++j) want += dense(i, j) * h[j];
            EXPECT_NEAR(y[i], want, 1e-12);
        }
    }
}

TEST(ApplyTruncatedUpdate, DimensionMismatch) {
    const SvdFactors f = svd(random_mat(4, 3, 12));
    std::vector<double> h(4, 1.0);
    EXPECT_THROW(apply_truncated_update(f, 1, h), std::invalid_argument);
}

TEST(Cca, IdenticalSubspaces) {
    const Mat u = random_orthonormal(8, 3, 21);
    EXPECT_NEAR(cca_similarity(u, u, 3), 1.0, 1e-10);
}

TEST(Cca, OrthogonalSubspaces) {
    const Mat ut = basis_cols(4, {0, 1});
    const Mat us = basis_cols(4, {2, 3});
    EXPECT_NEAR(cca_similarity(ut, us, 2), 0.0, 1e-10);
}

TEST(Cca, HalfOverlap) {
    const Mat ut = basis_cols(4, {0, 1});
    const Mat us = basis_cols(4, {0, 2});
    EXPECT_NEAR(cca_similarity(ut, us, 2), 0.5, 1e-10);
}

TEST(Cca, RotationInvariance) {
    for (int trial = 0; trial < 25; ++trial) {
        const Mat u = random_orthonormal(10, 3, 800 + static_cast<uint64_t>(trial));
        const Mat r = random_orthonormal(3, 3, 900 + static_cast<uint64_t>(trial));
        EXPECT_NEAR(cca_similarity(u, matmul(u, r), 3), 1.0, 1e-10);
    }
}

TEST(Cca, SymmetricAndBounded) {
    RandomStream rng{31};
    for (int trial = 0; trial < 30; ++trial) {
        const Mat a = random_orthonormal(9, 3, 1300 + static_cast<uint64_t>(trial));
        const Mat b = random_orthonormal(9, 3, 1400 + static_cast<uint64_t>(trial));
        const int k = 1 + static_cast<int>(rng.next_below(3));
        const double ab = cca_similarity(a, b, k);
        const double ba = cca_similarity(b, a, k);
        EXPECT_NEAR(ab, ba, 1e-12);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0);
    }
}

TEST(Cca, ErrorsOnBadInputs) {
    const Mat a = random_orthonormal(6, 2, 41);
    const Mat b = random_orthonormal(7, 2, 42);
    EXPECT_THROW(cca_similarity(a, b, 2), std::invalid_argument);  // row mismatch
    Mat rank1(6, 2);
    rank1(0, 0) = 1.0;
    rank1(0, 1) = 2.0;  // second column collinear -> dropped
    EXPECT_THROW(cca_similarity(a, rank1, 2), std::runtime_error);
}

TEST(DriftReport, IdenticalCheckpointsAreFullyAligned) {
    const Checkpoint base = fake_checkpoint(61, 0);
    const Checkpoint a = fake_checkpoint(62, 20);
    const DriftReport rep = drift_report(base, a, a, 1);
    EXPECT_EQ(rep.per_matrix.size(), 12u);
    for (const auto& [name, sim] : rep.per_matrix) EXPECT_NEAR(sim, 1.0, 1e-10);
    for (const auto& fam : module_families()) {
        EXPECT_NEAR(rep.per_module_mean.at(fam), 1.0, 1e-10);
        EXPECT_LE(rep.per_module_worst.at(fam), rep.per_module_mean.at(fam) + 1e-15);
    }
    EXPECT_EQ(rep.checkpoint_pair.first, 20);
    EXPECT_EQ(rep.checkpoint_pair.second, 20);
}

TEST(DriftReport, ZeroDeltaMatrixIsReportedMissing) {
    const Checkpoint base = fake_checkpoint(71, 0);
    Checkpoint a = fake_checkpoint(72, 20);
    Checkpoint b = fake_checkpoint(73, 80);
    a.tensors.at("layers.0.q_proj") = base.tensors.at("layers.0.q_proj");  // zero delta in a
    const DriftReport rep = drift_report(base, a, b, 1);
    ASSERT_EQ(rep.missing.size(), 1u);
    EXPECT_EQ(rep.missing[0], "layers.0.q_proj");
    EXPECT_EQ(rep.per_matrix.count("layers.0.q_proj"), 0u);
    // q_proj aggregates still exist from layer 1.
    EXPECT_EQ(rep.per_module_mean.count("q_proj"), 1u);
}

TEST(DriftReport, CsvFormat) {
    const Checkpoint base = fake_checkpoint(81, 0);
    const Checkpoint a = fake_checkpoint(82, 20);
    const Checkpoint b = fake_checkpoint(83, 80);
    const DriftReport rep = drift_report(base, a, b, 1);
    const std::string csv = drift_report_csv(rep);
    EXPECT_EQ(csv.rfind("matrix,module,layer,k,cca\n", 0), 0u);
    EXPECT_NE(csv.find("layers.0.q_proj,q_proj,0,1,"), std::string::npos);
    EXPECT_NE(csv.find("__mean__,q_proj,,1,"), std::string::npos);
    EXPECT_NE(csv.find("__worst__,down_proj,,1,"), std::string::npos);
    // 12 matrices + 6 means + 6 worsts + header
    int lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    EXPECT_EQ(lines, 25);
}

TEST(MatrixNames, ParseAndReject) {
    int layer = -1;
    std::string module;
    EXPECT_TRUE(parse_matrix_name("layers.3.up_proj", &layer, &module));
    EXPECT_EQ(layer, 3);
    EXPECT_EQ(module, "up_proj");
    EXPECT_FALSE(parse_matrix_name("tok_embed", nullptr, nullptr));
    EXPECT_FALSE(parse_matrix_name("layers.x.up_proj", nullptr, nullptr));
    EXPECT_FALSE(parse_matrix_name("layers.2.gate_proj", nullptr, nullptr));
}
