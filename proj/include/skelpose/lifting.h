#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "skelpose/assembly.h"
#include "skelpose/skeleton.h"

namespace skelpose {

// Mean pose and principal directions of root-centred, flattened poses
// ([x0, y0, z0, x1, ...], mm).
struct PCABasis {
    Eigen::VectorXd mean;      // 3m
    Eigen::MatrixXd basis;     // B x 3m, orthonormal rows
    Eigen::VectorXd variances; // B, descending

    int num_components() const { return static_cast<int>(basis.rows()); }
    int num_joints() const { return static_cast<int>(mean.size() / 3); }
    Joints pose(const Eigen::VectorXd &coefficients) const; // all B coefficients
};

Eigen::VectorXd flatten(const Joints &joints);
Joints unflatten(const Eigen::VectorXd &v);

PCABasis build_pca_basis(const std::vector<Joints> &poses, int num_components, int root_index);

// u = s·(R X)_xy + t
struct WeakPerspectiveCamera {
    double scale = 1.0;
    RotationMatrix rotation;
    Vec2 translation = Vec2::Zero();

    Vec2 project(const Vec3 &p) const;
    std::vector<Vec2> project(const Joints &joints) const;
};

// Least-squares weak-perspective camera for known 3D points. `initial`, when
// given, is kept as a starting candidate so refits never get worse.
WeakPerspectiveCamera fit_weak_perspective(const Joints &points, const std::vector<Vec2> &keypoints,
                                           const WeakPerspectiveCamera *initial = nullptr);

// RMS 2D distance in pixels.
double reprojection_rms(const WeakPerspectiveCamera &cam, const Joints &points, const std::vector<Vec2> &keypoints);

enum class Verdict { Unreviewed, Acceptable, Bad };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string &s);

struct LiftResult {
    Joints joints3d;
    WeakPerspectiveCamera camera;
    std::vector<std::pair<int, double>> coefficients; // (component, weight) in selection order
    double reprojection_error = 0.0;                  // RMS, pixels
    Verdict verdict = Verdict::Unreviewed;
    bool converged = true;
};

struct PmpOptions {
    double min_relative_improvement = 1e-4;
    int refine_iterations = 200; // joint camera/coefficient LM steps per selected component
};

// Projected matching pursuit: greedily add the basis vector that most reduces
// the reprojection residual, then refine camera and all selected coefficients
// jointly. Runs from the camera fitted to the mean pose and from its mirror
// alternative, keeping the lower residual.
LiftResult pmp_lift(const std::vector<Vec2> &keypoints, const PCABasis &basis, int max_components,
                    const PmpOptions &opt = {});

struct FitOptions {
    double w_pos = 1.0;
    double w_smooth = 0.1;
    int max_iterations = 100;
    double min_relative_decrease = 1e-6;
};

struct FitResult {
    Pose pose;
    std::vector<double> energy; // initial energy, then one entry per sweep
    bool converged = false;
};

// Fits the rest skeleton to target joints. Bone lengths are fixed by
// construction (rotations + forward kinematics); the energy balances joint
// positions against smoothness between the absolute rotations of parent and
// child bones. Each sweep solves every bone's rotation exactly (Procrustes)
// with the others held fixed and re-integrates positions.
FitResult fit_skeleton(const Joints &target, const Skeleton &skel, const FitOptions &opt = {});

double fit_energy(const Skeleton &skel, const std::vector<Mat3> &absolute, const Joints &centred_target,
                  const FitOptions &opt);

// Rotation taking the rest root-bone directions onto those of `joints`
// (falls back to the next bone level when the root bones are collinear).
RotationMatrix root_frame(const Skeleton &skel, const Joints &joints);

struct KeypointSample {
    std::string id;
    std::vector<Vec2> keypoints;
};

std::vector<KeypointSample> read_keypoint_lines(const std::string &path);

struct AnnotatedSample {
    std::string id;
    std::vector<Vec2> keypoints;
    LiftResult lift;
    FinalPose pose;
    bool fit_converged = false;
};

struct AnnotateOptions {
    int max_components = 10;
    PmpOptions pmp;
    FitOptions fit;
};

// One <id>.json (lift result + fitted pose, verdict unreviewed) and one
// <id>.obj skinned preview per input line.
std::vector<AnnotatedSample> annotate_batch(const std::string &keypoint_file, const PCABasis &basis,
                                            const Skeleton &skel, const std::string &out_dir,
                                            const AnnotateOptions &opt = {});

} // namespace skelpose
