#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "generators.h"
#include "skelpose/errors.h"
#include "skelpose/trainer.h"

using namespace skelpose;
using namespace skelpose::testing;

namespace {

RotationCodebook three_clusters() {
    RotationCodebook cb;
    cb.centers.push_back(Mat3::Identity());
    cb.centers.push_back(from_axis_angle(Vec3::UnitY(), rad(100.0)).matrix());
    cb.centers.push_back(from_axis_angle(Vec3::UnitX(), rad(70.0)).matrix());
    return cb;
}

std::string temp_path(const std::string &name) {
    return (std::filesystem::temp_directory_path() / ("skelpose_trainer_" + name)).string();
}

TrainOptions small_options(int epochs, double lr, std::uint64_t seed) {
    TrainOptions o;
    o.epochs = epochs;
    o.lr = lr;
    o.batch_size = 4;
    o.hidden = 16;
    o.seed = seed;
    return o;
}

bool same_model(const ToyModel &a, const ToyModel &b) {
    return a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2 && a.w3 == b.w3 && a.b3 == b.b3 &&
           a.residual == b.residual;
}

} // namespace

TEST(SyntheticDataset, EmptyAndInvalidRequestsThrow) {
    const Skeleton skel = default_skeleton();
    EXPECT_THROW(make_synthetic_dataset(0, skel, three_clusters(), 0.0, 1), Error);
    EXPECT_THROW(make_synthetic_dataset(5, skel, RotationCodebook{}, 0.0, 1), Error);
    EXPECT_THROW(make_synthetic_dataset(5, skel, three_clusters(), -1.0, 1), Error);
}

TEST(SyntheticDataset, SeedDeterminesEverything) {
    const Skeleton skel = default_skeleton();
    const auto a = make_synthetic_dataset(10, skel, three_clusters(), 0.01, 5);
    const auto b = make_synthetic_dataset(10, skel, three_clusters(), 0.01, 5);
    const auto c = make_synthetic_dataset(10, skel, three_clusters(), 0.01, 6);
    bool differs = false;
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(a[i].features, b[i].features);
        EXPECT_EQ(a[i].label, b[i].label);
        for (int j = 0; j < skel.num_joints(); ++j)
            EXPECT_EQ(a[i].pose.joints[j], b[i].pose.joints[j]);
        differs = differs || a[i].features != c[i].features;
    }
    EXPECT_TRUE(differs);
}

TEST(SyntheticDataset, NoiseFreeFeaturesComeFromPoses) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const auto data = make_synthetic_dataset(20, skel, cb, 0.0, 7);
    for (const ToySample &s : data) {
        EXPECT_EQ(s.features, toy_features(s.pose.joints));
        const int m = skel.num_joints();
        ASSERT_EQ(s.features.size(), 4 * m);
        for (int j = 0; j < m; ++j) {
            EXPECT_EQ(s.features[2 * j], s.pose.joints[j].x() / 1000.0);
            EXPECT_EQ(s.features[2 * j + 1], s.pose.joints[j].y() / 1000.0);
            EXPECT_EQ(s.features[2 * m + 2 * j], s.pose.joints[j].z() / 1000.0);
        }
        EXPECT_EQ(s.label, classify(cb, s.pose.global.matrix()).index);
        EXPECT_LT(geodesic_deg(s.pose.global, gram_schmidt(cb.centers[s.label])), 5.0 + 1e-9);
        EXPECT_TRUE(s.heatmap.well_formed());
        EXPECT_EQ(s.heatmap.num_joints(), skel.num_joints());
        EXPECT_EQ(s.heatmap.rows(), kToyGrid);
    }
}

TEST(Flip, MirrorsJointsAndSwapsSides) {
    Rng rng(1);
    const Skeleton skel = default_skeleton();
    for (int t = 0; t < 50; ++t) {
        const Pose p = random_pose(rng, skel, 40.0);
        const Pose f = flip_pose(skel, p);
        for (int j = 0; j < skel.num_joints(); ++j) {
            const Vec3 &src = p.joints[skel.mirror_joint(j)];
            EXPECT_LT((f.joints[j] - Vec3(-src.x(), src.y(), src.z())).norm(), 1e-9);
        }
        const Pose back = flip_pose(skel, f);
        EXPECT_LT((back.global.matrix() - p.global.matrix()).norm(), 1e-12);
        for (int b = 0; b < skel.num_bones(); ++b)
            EXPECT_LT((back.bone_rel[b].matrix() - p.bone_rel[b].matrix()).norm(), 1e-12);
    }
}

TEST(Flip, SampleKeepsMaskAndRelabels) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    ToySample s = make_synthetic_dataset(1, skel, cb, 0.0, 8).front();
    s.mask = SupervisionMask::rotation_only();
    const ToySample f = flip_sample(skel, cb, s);
    EXPECT_FALSE(f.mask.pos);
    EXPECT_FALSE(f.mask.rot);
    EXPECT_EQ(f.label, classify(cb, f.pose.global.matrix()).index);
    EXPECT_EQ(f.features, toy_features(f.pose.joints));
}

TEST(ToyModel, InitIsSeededAndShaped) {
    const ToyModel a = ToyModel::init(64, 16, 3, 15, 16, 32, 4);
    const ToyModel b = ToyModel::init(64, 16, 3, 15, 16, 32, 4);
    EXPECT_TRUE(same_model(a, b));
    EXPECT_EQ(a.w1.rows(), 16);
    EXPECT_EQ(a.w1.cols(), 64);
    EXPECT_EQ(a.w2.rows(), 3);
    EXPECT_EQ(a.w3.rows(), 9 * 15);
    EXPECT_EQ(a.residual.rows(), 2 * 16 * 32);
    EXPECT_EQ(a.residual.cols(), 32);
    EXPECT_TRUE(a.finite());
    EXPECT_THROW(ToyModel::init(0, 16, 3, 15, 16, 32, 4), Error);
}

TEST(TrainToy, EmptyDatasetAndBadOptionsThrow) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    try {
        train_toy({}, skel, cb, LossWeights{}, small_options(1, 0.1, 1));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
    }
    const auto data = make_synthetic_dataset(2, skel, cb, 0.0, 2);
    TrainOptions o = small_options(1, 0.1, 1);
    o.batch_size = 0;
    EXPECT_THROW(train_toy(data, skel, cb, LossWeights{}, o), Error);
    o = small_options(-1, 0.1, 1);
    EXPECT_THROW(train_toy(data, skel, cb, LossWeights{}, o), Error);
    o = small_options(1, -0.1, 1);
    EXPECT_THROW(train_toy(data, skel, cb, LossWeights{}, o), Error);
}

TEST(TrainToy, ZeroLearningRateGivesConstantCurve) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const auto data = make_synthetic_dataset(6, skel, cb, 0.01, 3);
    const TrainResult r = train_toy(data, skel, cb, LossWeights{}, small_options(5, 0.0, 3));
    ASSERT_EQ(r.curve.size(), 5u);
    for (const ToyLoss &l : r.curve) {
        EXPECT_EQ(l.total, r.curve.front().total);
        EXPECT_EQ(l.rotg, r.curve.front().rotg);
        EXPECT_EQ(l.hm, r.curve.front().hm);
    }
    EXPECT_TRUE(same_model(r.model, ToyModel::init(static_cast<int>(data.front().features.size()), 16, 3, 15, 16,
                                                   kToyGrid, 3)));
}

TEST(TrainToy, CurveIsMeanOfPerSampleLosses) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const LossWeights w;
    const auto data = make_synthetic_dataset(5, skel, cb, 0.01, 4);
    const TrainOptions o = small_options(1, 0.0, 4);
    const TrainResult r = train_toy(data, skel, cb, w, o);
    double total = 0.0, rotg = 0.0;
    for (const ToySample &s : data) {
        const ToyLoss l = evaluate_toy(r.model, s, skel, cb, w, o);
        total += l.total;
        rotg += l.rotg;
    }
    EXPECT_NEAR(r.curve.front().total, total / 5.0, 1e-12 * total);
    EXPECT_NEAR(r.curve.front().rotg, rotg / 5.0, 1e-12 * rotg);
}

TEST(TrainToy, DeterministicGivenSeed) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const auto data = make_synthetic_dataset(12, skel, cb, 0.01, 5);
    const TrainResult a = train_toy(data, skel, cb, LossWeights{}, small_options(3, 0.05, 5));
    const TrainResult b = train_toy(data, skel, cb, LossWeights{}, small_options(3, 0.05, 5));
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (std::size_t e = 0; e < a.curve.size(); ++e)
        EXPECT_EQ(a.curve[e].total, b.curve[e].total);
    EXPECT_TRUE(same_model(a.model, b.model));
    const TrainResult c = train_toy(data, skel, cb, LossWeights{}, small_options(3, 0.05, 6));
    EXPECT_FALSE(same_model(a.model, c.model));
}

TEST(TrainToy, RotationOnlyMaskStillTrainsRotationBranch) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const LossWeights w;
    auto data = make_synthetic_dataset(30, skel, cb, 0.005, 6);
    for (ToySample &s : data)
        s.mask = SupervisionMask::rotation_only();
    const TrainResult r = train_toy(data, skel, cb, w, small_options(25, 0.05, 6));
    ASSERT_FALSE(r.diverged);
    const double first = r.curve.front().rotg + w.alpha * r.curve.front().rotb;
    const double last = r.curve.back().rotg + w.alpha * r.curve.back().rotb;
    EXPECT_LT(last, 0.7 * first);
    for (const ToyLoss &l : r.curve)
        EXPECT_NEAR(l.total, l.rotg + w.alpha * l.rotb + w.lambda * l.hm, 1e-9 * l.total);
}

TEST(TrainToy, HugeStepIsFlaggedAsDivergence) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const auto data = make_synthetic_dataset(8, skel, cb, 0.01, 7);
    const TrainResult r = train_toy(data, skel, cb, LossWeights{}, small_options(50, 1e12, 7));
    EXPECT_TRUE(r.diverged);
    EXPECT_LT(r.curve.size(), 50u);
    for (const ToyLoss &l : r.curve)
        EXPECT_TRUE(std::isfinite(l.total));
}

TEST(TrainToy, ContinuingFromModelMatchesOneLongRun) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const auto data = make_synthetic_dataset(4, skel, cb, 0.0, 8);
    TrainOptions o = small_options(2, 0.05, 8);
    o.batch_size = 4;
    const TrainResult first = train_toy(data, skel, cb, LossWeights{}, o);
    const TrainResult second = train_toy(data, skel, cb, LossWeights{}, o, first.model);
    EXPECT_LT(second.curve.back().total, first.curve.front().total);
    EXPECT_FALSE(same_model(first.model, second.model));
}

TEST(TrainToy, AccuracyAndPredictionRange) {
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const auto data = make_synthetic_dataset(10, skel, cb, 0.01, 9);
    const ToyModel m = ToyModel::init(static_cast<int>(data.front().features.size()), 8, 3, 15, 16, kToyGrid, 9);
    for (const ToySample &s : data) {
        const int k = predict_class(m, s.features);
        EXPECT_GE(k, 0);
        EXPECT_LT(k, 3);
    }
    const double acc = classification_accuracy(m, data);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    EXPECT_THROW(predict_class(m, Eigen::VectorXd::Zero(3)), Error);
}

TEST(LossCsv, HeaderAndRows) {
    std::vector<ToyLoss> curve = {{1.5, 0.1, 0.2, 0.3, 0.4, 0.5}, {1.25, 0.1, 0.2, 0.3, 0.4, 0.5}};
    const std::string text = loss_csv(curve);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "epoch,total,rotg,rotb,rot,pos,hm");
    std::getline(in, line);
    EXPECT_EQ(line.rfind("0,1.5,", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line.rfind("1,1.25,", 0), 0u);
    EXPECT_FALSE(std::getline(in, line));

    const std::string path = temp_path("curve.csv");
    write_loss_csv(curve, path);
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    EXPECT_EQ(ss.str(), text);
    std::filesystem::remove(path);
    EXPECT_THROW(write_loss_csv(curve, "/nonexistent/dir/curve.csv"), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
    const ToyModel m = ToyModel::init(64, 16, 3, 15, 16, 32, 10);
    const std::string path = temp_path("model.json");
    write_checkpoint(m, path);
    EXPECT_TRUE(same_model(read_checkpoint(path), m));
    std::filesystem::remove(path);
}

TEST(Checkpoint, MalformedFilesAreRejected) {
    const std::string path = temp_path("bad.json");
    {
        std::ofstream f(path);
        f << R"({"w1": [[1, 2], [3]], "b1": [], "w2": [], "b2": [], "w3": [], "b3": [], "residual": []})";
    }
    EXPECT_THROW(read_checkpoint(path), Error);
    {
        std::ofstream f(path);
        f << R"({"w1": [[1]]})";
    }
    try {
        read_checkpoint(path);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
    }
    std::filesystem::remove(path);
    EXPECT_THROW(read_checkpoint("/nonexistent/model.json"), Error);
}
