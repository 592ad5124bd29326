#include "skelpose/assembly.h"

#include <cmath>
#include <numbers>

#include "skelpose/errors.h"

namespace skelpose {

std::vector<RotationMatrix> FinalPose::bone_rel() const {
    std::vector<RotationMatrix> out;
    out.reserve(absolute.size());
    for (const RotationMatrix &r : absolute)
        out.push_back(global.transpose() * r);
    return out;
}

FinalPose final_pose_from(const Pose &pose) { return FinalPose{pose.global, pose.absolute, pose.joints}; }

InitialPose initial_pose(const RotationCodebook &cb, const ClassProbabilities &p,
                         const std::vector<LinearTransform> &bone_transforms, const Skeleton &skel) {
    if (static_cast<int>(bone_transforms.size()) != skel.num_bones())
        throw Error(ErrorKind::LengthMismatch, "initial_pose: one transform per bone required");
    const RotationMatrix global = gram_schmidt(blend(cb, p));
    std::vector<RotationMatrix> rel;
    rel.reserve(bone_transforms.size());
    for (const LinearTransform &t : bone_transforms)
        rel.push_back(gram_schmidt(t));
    Pose pose = forward_kinematics(skel, global, rel);
    return InitialPose{pose.global, std::move(pose.bone_rel), std::move(pose.absolute), std::move(pose.joints)};
}

RotationMatrix minimal_rotation(const Vec3 &from, const Vec3 &to) {
    const double nf = from.norm(), nt = to.norm();
    if (nf < 1e-9 || nt < 1e-9)
        throw Error(ErrorKind::DegenerateInput, "minimal_rotation: zero-length vector");
    const Vec3 a = from / nf, b = to / nt;
    const Vec3 axis = a.cross(b);
    const double s = axis.norm();
    const double c = a.dot(b);
    if (s < 1e-15) {
        if (c > 0.0)
            return RotationMatrix::identity();
        int k = 0;
        for (int i = 1; i < 3; ++i) {
            if (std::abs(a[i]) < std::abs(a[k]))
                k = i;
        }
        const Vec3 perp = a.cross(Vec3::Unit(k)).normalized();
        return from_axis_angle(perp, std::numbers::pi);
    }
    return from_axis_angle(axis / s, std::atan2(s, c));
}

std::vector<RotationMatrix> alignment_rotations(const Joints &from, const Joints &to, const Skeleton &skel) {
    const std::vector<Vec3> vf = bone_vectors(skel, from);
    const std::vector<Vec3> vt = bone_vectors(skel, to);
    std::vector<RotationMatrix> out;
    out.reserve(vf.size());
    for (std::size_t b = 0; b < vf.size(); ++b) {
        if (vt[b].norm() < 1e-9)
            throw Error(ErrorKind::DegenerateInput, "refine_rotations: zero-length final bone");
        out.push_back(minimal_rotation(vf[b], vt[b]));
    }
    return out;
}

FinalPose refine_rotations(const InitialPose &init, const Joints &x_final, const Skeleton &skel) {
    const std::vector<RotationMatrix> d_r = alignment_rotations(init.joints, x_final, skel);
    FinalPose out;
    out.global = init.global;
    out.joints = x_final;
    out.absolute.reserve(d_r.size());
    for (std::size_t b = 0; b < d_r.size(); ++b)
        out.absolute.push_back(d_r[b] * init.absolute[b]);
    return out;
}

} // namespace skelpose
