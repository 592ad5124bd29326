#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "generators.h"
#include "skelpose/errors.h"
#include "skelpose/serialization.h"

using namespace skelpose;
using namespace skelpose::testing;

namespace {

std::string temp_path(const std::string &name) {
    return (std::filesystem::temp_directory_path() / ("skelpose_serialization_" + name)).string();
}

template <class F> ErrorKind kind_of(F &&f) {
    try {
        f();
    } catch (const Error &e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::Validation;
}

json through_text(const json &j) { return json::parse(j.dump()); }

} // namespace

TEST(MatrixJson, RowMajorOrder) {
    Mat3 m;
    m << 1, 2, 3, 4, 5, 6, 7, 8, 9;
    EXPECT_EQ(matrix_to_json(m), json::parse("[1,2,3,4,5,6,7,8,9]"));
    EXPECT_EQ(matrix_from_json(json::parse("[1,2,3,4,5,6,7,8,9]")), m);
    EXPECT_EQ(kind_of([] { matrix_from_json(json::parse("[1,2,3]")); }), ErrorKind::ShapeMismatch);
    EXPECT_EQ(kind_of([] { matrix_from_json(json::parse(R"([1,2,3,4,5,6,7,8,"x"])")); }), ErrorKind::Validation);
    EXPECT_THROW(rotation_from_json(matrix_to_json(m)), Error);
    EXPECT_THROW(vec3_from_json(json::parse("[1,2]")), Error);
}

TEST(SkeletonJson, RoundTripAndShippedFile) {
    const Skeleton skel = default_skeleton();
    const Skeleton back = skeleton_from_json(through_text(skeleton_to_json(skel)));
    EXPECT_EQ(back.joint_names(), skel.joint_names());
    EXPECT_EQ(back.parents(), skel.parents());
    for (int j = 0; j < skel.num_joints(); ++j)
        EXPECT_EQ(back.rest_positions()[j], skel.rest_positions()[j]);

    const Skeleton shipped = read_skeleton(SKELPOSE_DATA_DIR "/skeleton_mpii16.json");
    EXPECT_EQ(shipped.joint_names(), skel.joint_names());
    EXPECT_EQ(shipped.parents(), skel.parents());
    double total = 0.0;
    for (int b = 0; b < shipped.num_bones(); ++b)
        total += shipped.rest_length(b);
    EXPECT_NEAR(total, 4000.0, 1e-9);

    EXPECT_THROW(skeleton_from_json(json::parse(R"({"bones": []})")), Error);
    EXPECT_THROW(skeleton_from_json(json::parse(R"({"joints": [{"name": "a", "parent": 0.5, "rest": [0,0,0]}]})")),
                 Error);
}

TEST(PoseJson, RoundTripThroughText) {
    Rng rng(1);
    const Skeleton skel = default_skeleton();
    for (int t = 0; t < 20; ++t) {
        const Pose p = random_pose(rng, skel);
        const json j = through_text(pose_to_json(p));
        EXPECT_EQ(j["bones"].size(), 15u);
        EXPECT_EQ(j["global"].size(), 9u);
        const Pose back = pose_from_json(j, skel);
        EXPECT_EQ(back.global.matrix(), p.global.matrix());
        for (int b = 0; b < 15; ++b)
            EXPECT_EQ(back.bone_rel[b].matrix(), p.bone_rel[b].matrix());
        for (int k = 0; k < 16; ++k)
            EXPECT_LT((back.joints[k] - p.joints[k]).norm(), 1e-9);
    }
}

TEST(PoseJson, WrongBoneCountAndNonRotationRejected) {
    Rng rng(2);
    const Skeleton skel = default_skeleton();
    json j = pose_to_json(random_pose(rng, skel));
    json short_pose = j;
    short_pose["bones"].erase(0);
    EXPECT_EQ(kind_of([&] { pose_from_json(short_pose, skel); }), ErrorKind::LengthMismatch);
    json sheared = j;
    sheared["global"][1] = 0.5;
    EXPECT_THROW(pose_from_json(sheared, skel), Error);
    EXPECT_EQ(kind_of([&] { pose_from_json(json::object(), skel); }), ErrorKind::Validation);
}

TEST(FinalPoseJson, JointsComeFromX) {
    Rng rng(3);
    const Skeleton skel = default_skeleton();
    FinalPose f = final_pose_from(random_pose(rng, skel));
    f.joints[3] += Vec3(1.5, -2.0, 0.25);
    const json j = through_text(final_pose_to_json(f));
    EXPECT_EQ(j["x"].size(), 16u);
    const FinalPose back = final_pose_from_json(j, skel);
    for (int k = 0; k < 16; ++k)
        EXPECT_EQ(back.joints[k], f.joints[k]);
    for (int b = 0; b < 15; ++b)
        EXPECT_LT((back.absolute[b].matrix() - f.absolute[b].matrix()).norm(), 1e-12);
    json bad = j;
    bad["x"].erase(0);
    EXPECT_EQ(kind_of([&] { final_pose_from_json(bad, skel); }), ErrorKind::LengthMismatch);
}

TEST(CodebookJson, RoundTripAndCountCheck) {
    Rng rng(4);
    RotationCodebook cb;
    for (int k = 0; k < 5; ++k)
        cb.centers.push_back(random_rotation(rng).matrix());
    const json j = through_text(codebook_to_json(cb));
    EXPECT_EQ(j["K"], 5);
    const RotationCodebook back = codebook_from_json(j);
    ASSERT_EQ(back.size(), 5);
    for (int k = 0; k < 5; ++k)
        EXPECT_EQ(back.centers[k], cb.centers[k]);
    json bad = j;
    bad["K"] = 4;
    EXPECT_EQ(kind_of([&] { codebook_from_json(bad); }), ErrorKind::LengthMismatch);
}

TEST(PcaBasisJson, RoundTrip) {
    Rng rng(5);
    PCABasis b;
    b.mean = Eigen::VectorXd::Random(48);
    b.basis = Eigen::MatrixXd::Random(4, 48);
    b.variances = Eigen::VectorXd::LinSpaced(4, 4.0, 1.0);
    const PCABasis back = pca_basis_from_json(through_text(pca_basis_to_json(b)));
    EXPECT_EQ(back.mean, b.mean);
    EXPECT_EQ(back.basis, b.basis);
    EXPECT_EQ(back.variances, b.variances);
    json bad = pca_basis_to_json(b);
    bad["mean"].erase(0);
    EXPECT_THROW(pca_basis_from_json(bad), Error);
}

TEST(KeypointJson, RoundTripAndValidation) {
    KeypointSample s{"frame_001", {Vec2(1.5, 2.5), Vec2(-3.0, 4.0)}};
    const KeypointSample back = keypoint_sample_from_json(through_text(keypoint_sample_to_json(s)));
    EXPECT_EQ(back.id, s.id);
    EXPECT_EQ(back.keypoints, s.keypoints);
    EXPECT_EQ(kind_of([] { keypoint_sample_from_json(json::parse(R"({"id": "a", "keypoints": [[1]]})")); }),
              ErrorKind::ShapeMismatch);
    EXPECT_EQ(kind_of([] { keypoint_sample_from_json(json::parse(R"({"id": "a", "keypoints": [[1, null]]})")); }),
              ErrorKind::Validation);
    for (const char *id : {"", "..", "a/b", "a\\b"})
        EXPECT_THROW(keypoint_sample_from_json(json{{"id", id}, {"keypoints", json::array()}}), Error) << id;
    EXPECT_THROW(keypoint_sample_from_json(json::parse(R"({"id": 3, "keypoints": []})")), Error);
}

TEST(SkinWeightsJson, RoundTrip) {
    const std::vector<VertexWeights> w = {{{0, 1.0}}, {{1, 0.25}, {4, 0.75}}, {}};
    const auto back = skin_weights_from_json(through_text(skin_weights_to_json(w)));
    EXPECT_EQ(back, w);
    EXPECT_THROW(skin_weights_from_json(json::parse("[[[0.5, 1.0]]]")), Error);
    EXPECT_THROW(skin_weights_from_json(json::parse("{}")), Error);
}

TEST(LiftResultJson, FieldsPresent) {
    LiftResult r;
    r.joints3d = {Vec3(1, 2, 3)};
    r.camera.scale = 2.0;
    r.camera.translation = Vec2(4, 5);
    r.coefficients = {{3, 0.5}, {0, -1.0}};
    r.reprojection_error = 0.125;
    r.verdict = Verdict::Acceptable;
    const json j = through_text(lift_result_to_json(r));
    EXPECT_EQ(j["joints3d"], json::parse("[[1.0, 2.0, 3.0]]"));
    EXPECT_EQ(j["camera"]["scale"], 2.0);
    EXPECT_EQ(j["camera"]["translation"], json::parse("[4.0, 5.0]"));
    EXPECT_EQ(j["camera"]["rotation"].size(), 9u);
    EXPECT_EQ(j["coefficients"], json::parse("[[3, 0.5], [0, -1.0]]"));
    EXPECT_EQ(j["reprojection_error"], 0.125);
    EXPECT_EQ(j["verdict"], "acceptable");
    EXPECT_EQ(j["converged"], true);
}

TEST(MetricsJson, ReportHasSamplesAndAggregate) {
    const std::vector<SampleMetrics> s = {{"a", 10.0, 4.0, 2.0, 6.0}, {"b", 20.0, 8.0, 4.0, 12.0}};
    const json j = through_text(metrics_report(s));
    ASSERT_EQ(j["samples"].size(), 2u);
    EXPECT_EQ(j["samples"][1]["id"], "b");
    EXPECT_EQ(j["samples"][0]["mpjpe_mm"], 10.0);
    EXPECT_DOUBLE_EQ(j["aggregate"]["mpjpe_mm"].get<double>(), 15.0);
    EXPECT_DOUBLE_EQ(j["aggregate"]["recon_mm"].get<double>(), 6.0);
    EXPECT_DOUBLE_EQ(j["aggregate"]["global_rot_deg"].get<double>(), 3.0);
    EXPECT_DOUBLE_EQ(j["aggregate"]["bone_rot_deg"].get<double>(), 9.0);
}

TEST(JsonFiles, WriteReadAndErrors) {
    const std::string path = temp_path("x.json");
    const json j = {{"a", 1}, {"b", json::array({1.25, 2.5})}};
    write_json_file(j, path);
    EXPECT_EQ(read_json_file(path), j);
    {
        std::ofstream f(path);
        f << "{not json";
    }
    EXPECT_EQ(kind_of([&] { read_json_file(path); }), ErrorKind::Validation);
    std::filesystem::remove(path);
    EXPECT_EQ(kind_of([&] { read_json_file(path); }), ErrorKind::IO);
    EXPECT_EQ(kind_of([&] { write_json_file(j, "/nonexistent/dir/x.json"); }), ErrorKind::IO);
}
