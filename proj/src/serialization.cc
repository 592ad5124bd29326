#include "skelpose/serialization.h"

#include <fstream>

#include "skelpose/errors.h"

namespace skelpose {

namespace {

void require(bool ok, const std::string &what) {
    if (!ok)
        throw Error(ErrorKind::Validation, what);
}

const json &field(const json &j, const char *name) {
    require(j.is_object() && j.contains(name), std::string("missing field \"") + name + "\"");
    return j.at(name);
}

double number(const json &j) {
    require(j.is_number(), "expected a number");
    return j.get<double>();
}

} // namespace

json read_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::IO, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw Error(ErrorKind::Validation, path + ": " + e.what());
    }
}

void write_json_file(const json &j, const std::string &path) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::IO, "cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out)
        throw Error(ErrorKind::IO, "write failed: " + path);
}

json matrix_to_json(const Mat3 &m) {
    json a = json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            a.push_back(m(r, c));
    return a;
}

Mat3 matrix_from_json(const json &j) {
    if (!j.is_array() || j.size() != 9)
        throw Error(ErrorKind::ShapeMismatch, "rotation must have 9 entries");
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            m(r, c) = number(j[3 * r + c]);
    return m;
}

RotationMatrix rotation_from_json(const json &j) { return RotationMatrix::from_matrix(matrix_from_json(j), 1e-6); }

json vec_to_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json &j) {
    if (!j.is_array() || j.size() != 3)
        throw Error(ErrorKind::ShapeMismatch, "point must have 3 entries");
    return {number(j[0]), number(j[1]), number(j[2])};
}

json skeleton_to_json(const Skeleton &skel) {
    json joints = json::array();
    for (int j = 0; j < skel.num_joints(); ++j)
        joints.push_back({{"name", skel.joint_names()[j]},
                          {"parent", skel.parents()[j]},
                          {"rest", vec_to_json(skel.rest_positions()[j])}});
    return {{"joints", joints}};
}

Skeleton skeleton_from_json(const json &j) {
    const json &joints = field(j, "joints");
    require(joints.is_array(), "\"joints\" must be an array");
    std::vector<std::string> names;
    std::vector<int> parents;
    Joints rest;
    for (const json &e : joints) {
        require(field(e, "name").is_string(), "joint name must be a string");
        require(field(e, "parent").is_number_integer(), "joint parent must be an integer");
        names.push_back(e["name"].get<std::string>());
        parents.push_back(e["parent"].get<int>());
        rest.push_back(vec3_from_json(field(e, "rest")));
    }
    return Skeleton(names, parents, rest);
}

Skeleton read_skeleton(const std::string &path) { return skeleton_from_json(read_json_file(path)); }

json pose_to_json(const Pose &pose) {
    json bones = json::array();
    for (const RotationMatrix &r : pose.bone_rel)
        bones.push_back(matrix_to_json(r.matrix()));
    return {{"global", matrix_to_json(pose.global.matrix())}, {"bones", bones}};
}

Pose pose_from_json(const json &j, const Skeleton &skel) {
    const json &bones = field(j, "bones");
    if (!bones.is_array() || static_cast<int>(bones.size()) != skel.num_bones())
        throw Error(ErrorKind::LengthMismatch, "pose has " + std::to_string(bones.size()) + " bones, skeleton has " +
                                                   std::to_string(skel.num_bones()));
    std::vector<RotationMatrix> rel;
    for (const json &b : bones)
        rel.push_back(rotation_from_json(b));
    return forward_kinematics(skel, rotation_from_json(field(j, "global")), rel);
}

json final_pose_to_json(const FinalPose &pose) {
    json bones = json::array();
    for (const RotationMatrix &r : pose.bone_rel())
        bones.push_back(matrix_to_json(r.matrix()));
    json x = json::array();
    for (const Vec3 &p : pose.joints)
        x.push_back(vec_to_json(p));
    return {{"global", matrix_to_json(pose.global.matrix())}, {"bones", bones}, {"x", x}};
}

FinalPose final_pose_from_json(const json &j, const Skeleton &skel) {
    FinalPose p = final_pose_from(pose_from_json(j, skel));
    if (j.contains("x")) {
        const json &x = j["x"];
        if (!x.is_array() || static_cast<int>(x.size()) != skel.num_joints())
            throw Error(ErrorKind::LengthMismatch, "\"x\" does not match the skeleton's joint count");
        for (int i = 0; i < skel.num_joints(); ++i)
            p.joints[i] = vec3_from_json(x[i]);
    }
    return p;
}

json codebook_to_json(const RotationCodebook &cb) {
    json centers = json::array();
    for (const Mat3 &c : cb.centers)
        centers.push_back(matrix_to_json(c));
    return {{"K", cb.size()}, {"centers", centers}};
}

RotationCodebook codebook_from_json(const json &j) {
    const json &centers = field(j, "centers");
    require(centers.is_array(), "\"centers\" must be an array");
    RotationCodebook cb;
    for (const json &c : centers)
        cb.centers.push_back(matrix_from_json(c));
    if (j.contains("K") && j["K"].get<int>() != cb.size())
        throw Error(ErrorKind::LengthMismatch, "codebook K does not match the number of centers");
    require(cb.size() > 0, "codebook is empty");
    return cb;
}

json pca_basis_to_json(const PCABasis &basis) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < basis.basis.rows(); ++r)
        rows.push_back(std::vector<double>(basis.basis.row(r).begin(), basis.basis.row(r).end()));
    return {{"mean", std::vector<double>(basis.mean.begin(), basis.mean.end())},
            {"basis", rows},
            {"variances", std::vector<double>(basis.variances.begin(), basis.variances.end())}};
}

PCABasis pca_basis_from_json(const json &j) {
    const auto mean = field(j, "mean").get<std::vector<double>>();
    const auto rows = field(j, "basis").get<std::vector<std::vector<double>>>();
    require(mean.size() % 3 == 0 && !mean.empty(), "basis mean must hold 3 values per joint");
    PCABasis b;
    b.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
    b.basis.resize(rows.size(), mean.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != mean.size())
            throw Error(ErrorKind::ShapeMismatch, "basis row length does not match the mean");
        b.basis.row(r) = Eigen::Map<const Eigen::RowVectorXd>(rows[r].data(), rows[r].size());
    }
    b.variances = Eigen::VectorXd::Zero(rows.size());
    if (j.contains("variances")) {
        const auto v = j["variances"].get<std::vector<double>>();
        if (v.size() == rows.size())
            b.variances = Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
    }
    return b;
}

json lift_result_to_json(const LiftResult &r) {
    json x = json::array();
    for (const Vec3 &p : r.joints3d)
        x.push_back(vec_to_json(p));
    json coeffs = json::array();
    for (const auto &[k, w] : r.coefficients)
        coeffs.push_back({k, w});
    return {{"joints3d", x},
            {"camera",
             {{"scale", r.camera.scale},
              {"rotation", matrix_to_json(r.camera.rotation.matrix())},
              {"translation", {r.camera.translation.x(), r.camera.translation.y()}}}},
            {"coefficients", coeffs},
            {"reprojection_error", r.reprojection_error},
            {"verdict", to_string(r.verdict)},
            {"converged", r.converged}};
}

json keypoint_sample_to_json(const KeypointSample &s) {
    json k = json::array();
    for (const Vec2 &p : s.keypoints)
        k.push_back({p.x(), p.y()});
    return {{"id", s.id}, {"keypoints", k}};
}

KeypointSample keypoint_sample_from_json(const json &j) {
    KeypointSample s;
    require(field(j, "id").is_string(), "\"id\" must be a string");
    s.id = j["id"].get<std::string>();
    require(!s.id.empty() && s.id.find_first_of("/\\") == std::string::npos && s.id != "." && s.id != "..",
            "invalid sample id: " + s.id);
    const json &k = field(j, "keypoints");
    require(k.is_array(), "\"keypoints\" must be an array");
    for (const json &p : k) {
        if (!p.is_array() || p.size() != 2)
            throw Error(ErrorKind::ShapeMismatch, "keypoint must have 2 entries");
        if (p[0].is_null() || p[1].is_null())
            throw Error(ErrorKind::Validation, "missing keypoint in sample " + s.id);
        s.keypoints.emplace_back(number(p[0]), number(p[1]));
    }
    return s;
}

json annotated_sample_to_json(const AnnotatedSample &a) {
    json out = keypoint_sample_to_json({a.id, a.keypoints});
    out["lift"] = lift_result_to_json(a.lift);
    out["pose"] = final_pose_to_json(a.pose);
    out["fit_converged"] = a.fit_converged;
    out["verdict"] = to_string(a.lift.verdict);
    return out;
}

json skin_weights_to_json(const std::vector<VertexWeights> &w) {
    json out = json::array();
    for (const VertexWeights &v : w) {
        json e = json::array();
        for (const auto &[b, x] : v)
            e.push_back({b, x});
        out.push_back(e);
    }
    return out;
}

std::vector<VertexWeights> skin_weights_from_json(const json &j) {
    require(j.is_array(), "skin weights must be an array");
    std::vector<VertexWeights> out;
    for (const json &v : j) {
        require(v.is_array(), "vertex weights must be an array");
        VertexWeights w;
        for (const json &e : v) {
            require(e.is_array() && e.size() == 2 && e[0].is_number_integer(), "weight entry must be [bone, w]");
            w.emplace_back(e[0].get<int>(), number(e[1]));
        }
        out.push_back(std::move(w));
    }
    return out;
}

json metrics_to_json(const SampleMetrics &m) {
    return {{"id", m.id},
            {"mpjpe_mm", m.mpjpe_mm},
            {"recon_mm", m.recon_mm},
            {"global_rot_deg", m.global_rot_deg},
            {"bone_rot_deg", m.bone_rot_deg}};
}

json metrics_report(const std::vector<SampleMetrics> &samples) {
    json s = json::array();
    for (const SampleMetrics &m : samples)
        s.push_back(metrics_to_json(m));
    return {{"samples", s}, {"aggregate", metrics_to_json(aggregate_metrics(samples))}};
}

} // namespace skelpose
