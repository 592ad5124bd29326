#include <gtest/gtest.h>

#include <numbers>

#include "generators.h"
#include "oracles.h"
#include "skelpose/codebook.h"
#include "skelpose/errors.h"

using namespace skelpose;
using namespace skelpose::testing;

namespace {

std::vector<RotationMatrix> tight_cluster(Rng &rng, const RotationMatrix &center, int n, double max_deg) {
    std::vector<RotationMatrix> out;
    for (int i = 0; i < n; ++i)
        out.push_back(random_small_rotation(rng, max_deg) * center);
    return out;
}

Mat3 mean_of(const std::vector<RotationMatrix> &rs) {
    Mat3 m = Mat3::Zero();
    for (const auto &r : rs)
        m += r.matrix();
    return m / static_cast<double>(rs.size());
}

std::vector<double> random_probabilities(Rng &rng, int k) {
    std::vector<double> p(k);
    double s = 0.0;
    for (double &v : p) {
        v = uniform(rng, 0.0, 1.0);
        s += v;
    }
    for (double &v : p)
        v /= s;
    return p;
}

} // namespace

TEST(ClassProbabilities, Validation) {
    EXPECT_THROW(ClassProbabilities({0.5, 0.6}), Error);
    EXPECT_THROW(ClassProbabilities({1.5, -0.5}), Error);
    EXPECT_NO_THROW(ClassProbabilities({0.25, 0.75}));
    const ClassProbabilities s = ClassProbabilities::softmax({1000.0, 0.0, -1000.0});
    EXPECT_NEAR(s[0], 1.0, 1e-12);
    const ClassProbabilities u = ClassProbabilities::uniform(4);
    EXPECT_EQ(u[2], 0.25);
}

TEST(BuildCodebook, SingleClusterOfIdenticalSamples) {
    Rng rng(1);
    const RotationMatrix r = random_rotation(rng);
    const RotationCodebook cb = build_codebook(std::vector<RotationMatrix>(20, r), 1, 3);
    ASSERT_EQ(cb.size(), 1);
    EXPECT_LT((cb.centers[0] - r.matrix()).norm(), 1e-15);
}

TEST(BuildCodebook, TwoTightClustersRecoverMeans) {
    Rng rng(2);
    const auto a = tight_cluster(rng, RotationMatrix::identity(), 50, 5.0);
    const auto b = tight_cluster(rng, from_axis_angle(Vec3::UnitZ(), std::numbers::pi), 50, 5.0);
    std::vector<RotationMatrix> all = a;
    all.insert(all.end(), b.begin(), b.end());
    const RotationCodebook cb = build_codebook(all, 2, 11);
    ASSERT_EQ(cb.size(), 2);
    const Mat3 ma = mean_of(a), mb = mean_of(b);
    const bool first_is_a = (cb.centers[0] - ma).norm() < (cb.centers[0] - mb).norm();
    EXPECT_LT((cb.centers[first_is_a ? 0 : 1] - ma).norm(), 1e-6);
    EXPECT_LT((cb.centers[first_is_a ? 1 : 0] - mb).norm(), 1e-6);
}

TEST(BuildCodebook, BeatsRandomAssignment) {
    Rng rng(3);
    std::vector<RotationMatrix> rs;
    for (int i = 0; i < 10000; ++i)
        rs.push_back(random_rotation(rng));
    const int k = 200;
    const RotationCodebook cb = build_codebook(rs, k, 5);
    ASSERT_EQ(cb.size(), k);

    std::vector<Mat3> sums(k, Mat3::Zero());
    std::vector<int> counts(k, 0), label(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
        label[i] = static_cast<int>(rng() % k);
        sums[label[i]] += rs[i].matrix();
        ++counts[label[i]];
    }
    double baseline = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i)
        baseline += (rs[i].matrix() - sums[label[i]] / std::max(counts[label[i]], 1)).squaredNorm();
    EXPECT_LT(within_cluster_ss(cb, rs), baseline);
}

TEST(BuildCodebook, DeterministicGivenSeed) {
    Rng rng(4);
    std::vector<RotationMatrix> rs;
    for (int i = 0; i < 500; ++i)
        rs.push_back(random_rotation(rng));
    const RotationCodebook a = build_codebook(rs, 10, 9), b = build_codebook(rs, 10, 9);
    for (int k = 0; k < 10; ++k)
        EXPECT_EQ(a.centers[k], b.centers[k]);
}

TEST(BuildCodebook, InsufficientData) {
    try {
        build_codebook(std::vector<RotationMatrix>(3), 4, 0);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
    }
}

TEST(BuildCodebook, MembersSitAtKMeansFixedPoint) {
    Rng rng(5);
    std::vector<RotationMatrix> rs;
    for (int c = 0; c < 4; ++c) {
        const auto cl = tight_cluster(rng, random_rotation(rng), 30, 20.0);
        rs.insert(rs.end(), cl.begin(), cl.end());
    }
    const RotationCodebook cb = build_codebook(rs, 4, 1);
    std::vector<Mat3> sums(4, Mat3::Zero());
    std::vector<int> counts(4, 0);
    for (const auto &r : rs) {
        const int k = classify(cb, r.matrix()).index;
        sums[k] += r.matrix();
        ++counts[k];
    }
    for (int k = 0; k < 4; ++k) {
        ASSERT_GT(counts[k], 0);
        EXPECT_LT((sums[k] / counts[k] - cb.centers[k]).norm(), 1e-12);
    }
}

TEST(Blend, OneHotSelectsCenter) {
    Rng rng(6);
    RotationCodebook cb;
    for (int k = 0; k < 5; ++k)
        cb.centers.push_back(random_matrix(rng));
    for (int k = 0; k < 5; ++k)
        EXPECT_EQ(blend(cb, ClassProbabilities::one_hot(k, 5)), cb.centers[k]);
}

TEST(Blend, OpposedCentersCollapseAndGsRejects) {
    RotationCodebook cb;
    cb.centers.push_back(Mat3::Identity());
    cb.centers.push_back(Eigen::Vector3d(-1.0, -1.0, 1.0).asDiagonal());
    const Mat3 m = blend(cb, ClassProbabilities::uniform(2));
    EXPECT_EQ(m, Mat3(Eigen::Vector3d(0.0, 0.0, 1.0).asDiagonal()));
    EXPECT_THROW(gram_schmidt(m), Error);
}

TEST(Blend, MatchesWeightedSumOracleAndIsLinear) {
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
        const int k = 1 + static_cast<int>(rng() % 20);
        RotationCodebook cb;
        for (int i = 0; i < k; ++i)
            cb.centers.push_back(random_matrix(rng));
        const auto p = random_probabilities(rng, k), q = random_probabilities(rng, k);
        Mat3 oracle = Mat3::Zero();
        for (int i = 0; i < k; ++i)
            oracle += p[i] * cb.centers[i];
        EXPECT_LT((blend(cb, ClassProbabilities(p)) - oracle).cwiseAbs().maxCoeff(), 1e-12);

        const double a = uniform(rng, 0.0, 1.0);
        std::vector<double> mix(k);
        for (int i = 0; i < k; ++i)
            mix[i] = a * p[i] + (1 - a) * q[i];
        const Mat3 lhs = blend(cb, ClassProbabilities(mix));
        const Mat3 rhs = a * blend(cb, ClassProbabilities(p)) + (1 - a) * blend(cb, ClassProbabilities(q));
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Blend, BackwardIsFrobeniusInnerProduct) {
    Rng rng(8);
    RotationCodebook cb;
    for (int i = 0; i < 6; ++i)
        cb.centers.push_back(random_matrix(rng));
    const Mat3 up = random_matrix(rng);
    const auto g = blend_backward(cb, up);
    for (int i = 0; i < 6; ++i)
        EXPECT_NEAR(g[i], cb.centers[i].cwiseProduct(up).sum(), 1e-12);
}

TEST(Blend, TightClusterCenterSurvivesGs) {
    Rng rng(9);
    const RotationMatrix c = random_rotation(rng);
    const RotationCodebook cb = build_codebook(tight_cluster(rng, c, 100, 5.0), 1, 2);
    EXPECT_LT((gram_schmidt(blend(cb, ClassProbabilities::one_hot(0, 1))).matrix() - cb.centers[0]).norm(), 1e-2);
}

TEST(Classify, CenterTieAndBruteForce) {
    Rng rng(10);
    RotationCodebook cb;
    for (int k = 0; k < 10; ++k)
        cb.centers.push_back(random_rotation(rng).matrix());
    for (int k = 0; k < 10; ++k) {
        const Classification c = classify(cb, cb.centers[k]);
        EXPECT_EQ(c.index, k);
        EXPECT_EQ(c.probabilities[k], 1.0);
    }

    RotationCodebook tie;
    for (int k = 0; k < 10; ++k)
        tie.centers.push_back(-5.0 * Mat3::Identity());
    Mat3 e = Mat3::Zero();
    e(0, 1) = 0.3;
    tie.centers[3] = Mat3::Identity() + e;
    tie.centers[7] = Mat3::Identity() - e;
    EXPECT_EQ(classify(tie, Mat3::Identity()).index, 3);

    for (int t = 0; t < 1000; ++t) {
        const Mat3 r = random_rotation(rng).matrix();
        EXPECT_EQ(classify(cb, r).index, oracle::nearest_center(cb.centers, r));
    }
}
