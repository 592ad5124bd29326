#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "skelpose/assembly.h"
#include "skelpose/skeleton.h"

namespace skelpose {

using Face = std::array<int, 3>;
// Sparse per-vertex weights: (bone index, weight) pairs.
using VertexWeights = std::vector<std::pair<int, double>>;

inline constexpr int kMaxInfluences = 4;

struct SkinnedMesh {
    std::vector<Vec3> vertices; // bind pose, mm
    std::vector<Face> faces;
    std::vector<VertexWeights> weights;
    FinalPose bind_pose;

    // Throws Validation when weights do not sum to one, exceed kMaxInfluences,
    // reference unknown bones, or faces index out of range.
    void validate(int num_bones) const;
};

// Linear blend skinning. Each bone moves its vertices rigidly about its
// parent joint: v' = Σ_b w_b (R_b R_b^bindᵀ (v − j_b^bind) + x_b).
std::vector<Vec3> skin(const SkinnedMesh &mesh, const Skeleton &skel, const FinalPose &pose);

// Inverse-distance weights to the two nearest bone segments.
std::vector<VertexWeights> auto_weights(const std::vector<Vec3> &vertices, const Skeleton &skel,
                                        const Joints &bind_joints);

// Tube around every bone of the skeleton's rest pose, auto-weighted. Stands
// in for an actor mesh in previews.
SkinnedMesh make_demo_body(const Skeleton &skel, double radius = 40.0, int sides = 8, int rings = 4);

void export_obj(const std::vector<Vec3> &vertices, const std::vector<Face> &faces, const std::string &path);
std::string obj_string(const std::vector<Vec3> &vertices, const std::vector<Face> &faces);

struct ObjMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
};

ObjMesh read_obj(const std::string &path);

} // namespace skelpose
