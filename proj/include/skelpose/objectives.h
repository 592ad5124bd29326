#pragma once

#include <string>
#include <vector>

#include "skelpose/assembly.h"
#include "skelpose/codebook.h"
#include "skelpose/heatmaps.h"
#include "skelpose/skeleton.h"

namespace skelpose {

struct LossWeights {
    double alpha = 0.1;   // L_RotB
    double beta = 0.1;    // L_Rot
    double gamma = 0.1;   // L_pos
    double lambda = 0.001; // L_hm

    void validate() const;
};

// Which loss terms a sample supervises. Samples with unreliable 3D labels
// train the rotation branch and the xy heatmaps only.
struct SupervisionMask {
    bool pos = true;
    bool rot = true;
    bool hm_zy = true;

    static SupervisionMask full() { return {}; }
    static SupervisionMask rotation_only() { return {false, false, false}; }
};

struct ClassLoss {
    double value = 0.0;
    std::vector<double> grad; // ∂L/∂p
    bool clamped = false;
};

inline constexpr double kProbabilityClamp = 1e-12;

// −log p[label], with p[label] clamped from below.
ClassLoss loss_rotg(const ClassProbabilities &p, int label);

struct MatrixLoss {
    double value = 0.0;
    std::vector<Mat3> grad;
};

// Σ_i ‖vec(pred_i) − vec(gt_i)‖². Serves both L_RotB and L_Rot.
MatrixLoss loss_rot_mse(const std::vector<Mat3> &pred, const std::vector<Mat3> &gt);

struct PositionLoss {
    double value = 0.0;
    Joints grad;
};

PositionLoss loss_pos(const Joints &pred, const Joints &gt);

struct HeatmapLoss {
    double value = 0.0;
    double xy = 0.0;
    double zy = 0.0; // zero when masked out
    CrossHeatmap grad;
};

HeatmapLoss loss_hm(const CrossHeatmap &pred, const CrossHeatmap &gt, const SupervisionMask &mask);

struct LossComponents {
    double rotg = 0.0;
    double rotb = 0.0;
    double rot = 0.0;
    double pos = 0.0;
    double hm_xy = 0.0;
    double hm_zy = 0.0;

    double hm() const { return hm_xy + hm_zy; }
};

struct TotalLoss {
    double value = 0.0;
    LossComponents partials; // ∂L_total/∂component, zero where masked
};

// L_RotG + α L_RotB + β L_Rot + γ L_pos + λ L_hm.
TotalLoss total_loss(const LossWeights &w, const LossComponents &c, const SupervisionMask &mask);

// Mean joint distance over non-root joints after root alignment, with the
// prediction rescaled so its bone lengths sum to l_ave.
double mpjpe(const Joints &pred, const Joints &gt, const Skeleton &skel, double l_ave);
// Same, without the length normalization.
double mpjpe_unnormalized(const Joints &pred, const Joints &gt, const Skeleton &skel);

struct Similarity {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3 &p) const { return scale * rotation * p + translation; }
};

// Least-squares similarity taking `from` onto `to`, reflections excluded.
Similarity align_similarity(const Joints &from, const Joints &to);

// Mean joint distance after similarity alignment of pred onto gt.
double reconstruction_error(const Joints &pred, const Joints &gt);

struct RotationErrors {
    double global_deg = 0.0;
    double bone_deg = 0.0; // mean over bones, relative-to-root rotations
};

RotationErrors rotation_errors(const FinalPose &pred, const FinalPose &gt);

struct SampleMetrics {
    std::string id;
    double mpjpe_mm = 0.0;
    double recon_mm = 0.0;
    double global_rot_deg = 0.0;
    double bone_rot_deg = 0.0;
};

SampleMetrics evaluate_sample(const std::string &id, const FinalPose &pred, const FinalPose &gt,
                              const Skeleton &skel, double l_ave);
SampleMetrics aggregate_metrics(const std::vector<SampleMetrics> &samples);

} // namespace skelpose
