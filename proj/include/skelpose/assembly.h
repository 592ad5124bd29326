#pragma once

#include <vector>

#include "skelpose/codebook.h"
#include "skelpose/skeleton.h"

namespace skelpose {

struct InitialPose {
    RotationMatrix global;
    std::vector<RotationMatrix> bone_rel;
    std::vector<RotationMatrix> absolute; // R_init
    Joints joints;
};

struct FinalPose {
    RotationMatrix global;
    std::vector<RotationMatrix> absolute; // R
    Joints joints;                        // x

    // Rotations relative to the root frame, Gᵀ·R_b.
    std::vector<RotationMatrix> bone_rel() const;
};

FinalPose final_pose_from(const Pose &pose);

// R^g = GS(blend(cb, p)), R^b = GS(bone transform), R_init = R^g·R^b, joints by FK.
InitialPose initial_pose(const RotationCodebook &cb, const ClassProbabilities &p,
                         const std::vector<LinearTransform> &bone_transforms, const Skeleton &skel);

// Shortest-arc rotation taking the direction of `from` onto that of `to`.
// Antiparallel inputs rotate by π about from × e_k, where e_k is the
// coordinate axis least aligned with `from` (lowest index on ties).
RotationMatrix minimal_rotation(const Vec3 &from, const Vec3 &to);

// R_b = dR_b·R_init_b with dR_b the minimal rotation between the initial and
// final bone vectors. The global rotation is carried over from `init`.
FinalPose refine_rotations(const InitialPose &init, const Joints &x_final, const Skeleton &skel);

// Alignment rotations alone, one per bone.
std::vector<RotationMatrix> alignment_rotations(const Joints &from, const Joints &to, const Skeleton &skel);

} // namespace skelpose
