#include "skelpose/skeleton.h"

#include <algorithm>
#include <queue>

#include "skelpose/errors.h"

namespace skelpose {

Skeleton::Skeleton(std::vector<std::string> names, std::vector<int> parents, Joints rest)
    : names_(std::move(names)), parents_(std::move(parents)), rest_(std::move(rest)) {
    const int m = static_cast<int>(names_.size());
    if (m < 2 || static_cast<int>(parents_.size()) != m || static_cast<int>(rest_.size()) != m)
        throw Error(ErrorKind::Validation, "skeleton: need >= 2 joints with matching parent/rest arrays");

    std::vector<std::vector<int>> children(m);
    for (int j = 0; j < m; ++j) {
        const int p = parents_[j];
        if (p < 0) {
            if (root_ >= 0)
                throw Error(ErrorKind::Validation, "skeleton: more than one root");
            root_ = j;
        } else if (p >= m || p == j) {
            throw Error(ErrorKind::Validation, "skeleton: parent index out of range");
        } else {
            children[p].push_back(j);
        }
        if (!rest_[j].allFinite())
            throw Error(ErrorKind::Validation, "skeleton: non-finite rest position");
    }
    if (root_ < 0)
        throw Error(ErrorKind::Validation, "skeleton: no root joint");

    joint_bone_.assign(m, -1);
    std::queue<int> frontier;
    frontier.push(root_);
    while (!frontier.empty()) {
        const int j = frontier.front();
        frontier.pop();
        for (int c : children[j]) {
            joint_bone_[c] = static_cast<int>(bones_.size());
            bones_.push_back({j, c});
            frontier.push(c);
        }
    }
    if (static_cast<int>(bones_.size()) != m - 1)
        throw Error(ErrorKind::Validation, "skeleton: parent graph is not a tree");

    child_bones_.resize(bones_.size());
    for (std::size_t b = 0; b < bones_.size(); ++b) {
        const Vec3 v = rest_[bones_[b].child] - rest_[bones_[b].parent];
        if (v.norm() <= 0.0)
            throw Error(ErrorKind::Validation, "skeleton: zero-length rest bone");
        rest_bones_.push_back(v);
        const int pb = joint_bone_[bones_[b].parent];
        if (pb >= 0)
            child_bones_[pb].push_back(static_cast<int>(b));
        else
            root_bones_.push_back(static_cast<int>(b));
    }
}

double Skeleton::total_rest_length() const {
    double s = 0.0;
    for (const Vec3 &v : rest_bones_)
        s += v.norm();
    return s;
}

int Skeleton::joint_index(const std::string &name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

int Skeleton::mirror_joint(int j) const {
    const std::string &n = names_[j];
    if (n.size() > 2 && n[1] == '_' && (n[0] == 'l' || n[0] == 'r')) {
        const int other = joint_index(std::string(1, n[0] == 'l' ? 'r' : 'l') + n.substr(1));
        if (other >= 0)
            return other;
    }
    return j;
}

Skeleton default_skeleton() {
    // MPII joint order. Right side on −x.
    std::vector<std::string> names = {"r_ankle",    "r_knee",     "r_hip",      "l_hip",
                                      "l_knee",     "l_ankle",    "pelvis",     "thorax",
                                      "upper_neck", "head_top",   "r_wrist",    "r_elbow",
                                      "r_shoulder", "l_shoulder", "l_elbow",    "l_wrist"};
    std::vector<int> parents = {1, 2, 6, 6, 3, 4, -1, 6, 7, 8, 11, 12, 7, 7, 13, 14};

    const double hip = 120.0, thigh = 430.0, shin = 420.0;
    const double spine = 480.0, neck = 100.0, head = 180.0;
    const double clavicle = 160.0, upper_arm = 280.0, forearm = 210.0;

    Joints rest(16);
    rest[6] = Vec3(0, 0, 0);
    rest[2] = Vec3(-hip, 0, 0);
    rest[1] = rest[2] + Vec3(0, -thigh, 0);
    rest[0] = rest[1] + Vec3(0, -shin, 0);
    rest[3] = Vec3(hip, 0, 0);
    rest[4] = rest[3] + Vec3(0, -thigh, 0);
    rest[5] = rest[4] + Vec3(0, -shin, 0);
    rest[7] = Vec3(0, spine, 0);
    rest[8] = rest[7] + Vec3(0, neck, 0);
    rest[9] = rest[8] + Vec3(0, head, 0);
    rest[12] = rest[7] + Vec3(-clavicle, 0, 0);
    rest[11] = rest[12] + Vec3(-upper_arm, 0, 0);
    rest[10] = rest[11] + Vec3(-forearm, 0, 0);
    rest[13] = rest[7] + Vec3(clavicle, 0, 0);
    rest[14] = rest[13] + Vec3(upper_arm, 0, 0);
    rest[15] = rest[14] + Vec3(forearm, 0, 0);
    return Skeleton(std::move(names), std::move(parents), std::move(rest));
}

Joints integrate_bones(const Skeleton &skel, const std::vector<Mat3> &absolute) {
    if (static_cast<int>(absolute.size()) != skel.num_bones())
        throw Error(ErrorKind::LengthMismatch, "integrate_bones: one transform per bone required");
    Joints joints(skel.num_joints(), Vec3::Zero());
    for (int b = 0; b < skel.num_bones(); ++b) {
        const Bone &bone = skel.bone(b);
        joints[bone.child] = joints[bone.parent] + absolute[b] * skel.rest_bone(b);
    }
    return joints;
}

std::vector<Mat3> integrate_bones_backward(const Skeleton &skel, const Joints &upstream) {
    if (static_cast<int>(upstream.size()) != skel.num_joints())
        throw Error(ErrorKind::LengthMismatch, "integrate_bones_backward: one gradient per joint required");
    // Each bone vector contributes to every joint in its child's subtree, so
    // its gradient is the subtree sum of joint gradients.
    Joints subtree = upstream;
    std::vector<Mat3> grads(skel.num_bones());
    for (int b = skel.num_bones() - 1; b >= 0; --b) {
        const Bone &bone = skel.bone(b);
        grads[b] = subtree[bone.child] * skel.rest_bone(b).transpose();
        subtree[bone.parent] += subtree[bone.child];
    }
    return grads;
}

Pose forward_kinematics(const Skeleton &skel, const RotationMatrix &global,
                        const std::vector<RotationMatrix> &bone_rel) {
    if (static_cast<int>(bone_rel.size()) != skel.num_bones())
        throw Error(ErrorKind::LengthMismatch, "forward_kinematics: one rotation per bone required");
    Pose pose;
    pose.global = global;
    pose.bone_rel = bone_rel;
    pose.absolute.reserve(bone_rel.size());
    std::vector<Mat3> abs_m;
    abs_m.reserve(bone_rel.size());
    for (const RotationMatrix &r : bone_rel) {
        pose.absolute.push_back(global * r);
        abs_m.push_back(pose.absolute.back().matrix());
    }
    pose.joints = integrate_bones(skel, abs_m);
    return pose;
}

FkGradients fk_backward(const Skeleton &skel, const RotationMatrix &global,
                        const std::vector<RotationMatrix> &bone_rel, const Joints &upstream) {
    if (static_cast<int>(bone_rel.size()) != skel.num_bones())
        throw Error(ErrorKind::LengthMismatch, "fk_backward: one rotation per bone required");
    const std::vector<Mat3> g_abs = integrate_bones_backward(skel, upstream);
    FkGradients out;
    out.bone_rel.resize(bone_rel.size());
    for (std::size_t b = 0; b < bone_rel.size(); ++b) {
        out.bone_rel[b] = global.matrix().transpose() * g_abs[b];
        out.global += g_abs[b] * bone_rel[b].matrix().transpose();
    }
    return out;
}

std::vector<Vec3> bone_vectors(const Skeleton &skel, const Joints &joints) {
    if (static_cast<int>(joints.size()) != skel.num_joints())
        throw Error(ErrorKind::LengthMismatch, "bone_vectors: joint count does not match skeleton");
    std::vector<Vec3> out;
    out.reserve(skel.num_bones());
    for (const Bone &b : skel.bones())
        out.push_back(joints[b.child] - joints[b.parent]);
    return out;
}

double total_bone_length(const Skeleton &skel, const Joints &joints) {
    double s = 0.0;
    for (const Vec3 &v : bone_vectors(skel, joints))
        s += v.norm();
    return s;
}

Joints normalize_lengths(const Skeleton &skel, const Joints &pred, double l_ave) {
    const double l_pred = total_bone_length(skel, pred);
    if (l_pred < 1e-9)
        throw Error(ErrorKind::DegenerateInput, "normalize_lengths: predicted skeleton has no length");
    const double scale = l_ave / l_pred;
    const Vec3 root = pred[skel.root()];
    Joints out(pred.size());
    for (std::size_t j = 0; j < pred.size(); ++j)
        out[j] = (pred[j] - root) * scale;
    return out;
}

} // namespace skelpose
