#pragma once

#include <string>
#include <vector>

#include "skelpose/rotations.h"

namespace skelpose {

using Joints = std::vector<Vec3>;

struct Bone {
    int parent = -1; // joint index
    int child = -1;  // joint index
};

// Joint tree with a rest pose in millimetres (right-handed, y-up). Immutable
// after construction. Bones are indexed in topological order of their child
// joint, so iterating bones front to back is a valid root-to-leaf sweep.
class Skeleton {
  public:
    Skeleton(std::vector<std::string> names, std::vector<int> parents, Joints rest);

    int num_joints() const { return static_cast<int>(names_.size()); }
    int num_bones() const { return static_cast<int>(bones_.size()); }
    int root() const { return root_; }

    const std::vector<std::string> &joint_names() const { return names_; }
    const std::vector<int> &parents() const { return parents_; }
    const Joints &rest_positions() const { return rest_; }
    const std::vector<Bone> &bones() const { return bones_; }
    const Bone &bone(int b) const { return bones_[b]; }

    // Bone whose child is joint j; -1 for the root.
    int bone_of_joint(int j) const { return joint_bone_[j]; }
    // Rest-pose vector of bone b (child − parent).
    const Vec3 &rest_bone(int b) const { return rest_bones_[b]; }
    double rest_length(int b) const { return rest_bones_[b].norm(); }
    double total_rest_length() const;

    // Bones whose parent joint is the child joint of b.
    const std::vector<int> &child_bones(int b) const { return child_bones_[b]; }
    // Bones hanging directly off the root joint.
    const std::vector<int> &root_bones() const { return root_bones_; }

    int joint_index(const std::string &name) const; // -1 if absent
    // Left/right counterpart by "l_"/"r_" name prefix; the joint itself when
    // it has none.
    int mirror_joint(int j) const;

  private:
    std::vector<std::string> names_;
    std::vector<int> parents_;
    Joints rest_;
    int root_ = -1;
    std::vector<Bone> bones_;
    std::vector<int> joint_bone_;
    Joints rest_bones_;
    std::vector<std::vector<int>> child_bones_;
    std::vector<int> root_bones_;
};

// 16-joint MPII-convention skeleton rooted at the pelvis, symmetric T-pose,
// bone lengths summing to 4000 mm.
Skeleton default_skeleton();

struct Pose {
    RotationMatrix global;
    std::vector<RotationMatrix> bone_rel; // relative to the root frame
    std::vector<RotationMatrix> absolute; // global * bone_rel[b]
    Joints joints;                        // joints[root] = 0
};

// Linear integration: joints[child] = joints[parent] + (G·B_b)·rest_bone(b).
Pose forward_kinematics(const Skeleton &skel, const RotationMatrix &global,
                        const std::vector<RotationMatrix> &bone_rel);

// Joint positions from absolute bone rotations (root at the origin). Accepts
// any 3x3 matrices so it can run on unorthogonalized values.
Joints integrate_bones(const Skeleton &skel, const std::vector<Mat3> &absolute);

// For a scalar L of the joints: ∂L/∂A_b for every absolute bone transform.
std::vector<Mat3> integrate_bones_backward(const Skeleton &skel, const Joints &upstream);

struct FkGradients {
    Mat3 global = Mat3::Zero();
    std::vector<Mat3> bone_rel;
};

FkGradients fk_backward(const Skeleton &skel, const RotationMatrix &global,
                        const std::vector<RotationMatrix> &bone_rel, const Joints &upstream);

std::vector<Vec3> bone_vectors(const Skeleton &skel, const Joints &joints);
double total_bone_length(const Skeleton &skel, const Joints &joints);

// Root-centres the joints and rescales them so the bone lengths sum to l_ave.
Joints normalize_lengths(const Skeleton &skel, const Joints &pred, double l_ave);

} // namespace skelpose
