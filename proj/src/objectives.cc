#include "skelpose/objectives.h"

#include <cmath>

#include <Eigen/Dense>

#include "skelpose/errors.h"

namespace skelpose {

void LossWeights::validate() const {
    for (double v : {alpha, beta, gamma, lambda}) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw Error(ErrorKind::Validation, "loss weights must be finite and nonnegative");
    }
}

ClassLoss loss_rotg(const ClassProbabilities &p, int label) {
    if (label < 0 || label >= p.size())
        throw Error(ErrorKind::Validation, "loss_rotg: label out of range");
    ClassLoss out;
    out.grad.assign(p.size(), 0.0);
    double q = p[label];
    if (q < kProbabilityClamp) {
        q = kProbabilityClamp;
        out.clamped = true;
    } else {
        out.grad[label] = -1.0 / q;
    }
    out.value = -std::log(q);
    return out;
}

MatrixLoss loss_rot_mse(const std::vector<Mat3> &pred, const std::vector<Mat3> &gt) {
    if (pred.size() != gt.size())
        throw Error(ErrorKind::LengthMismatch, "loss_rot_mse: prediction and label counts differ");
    MatrixLoss out;
    out.grad.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const Mat3 d = pred[i] - gt[i];
        out.value += d.squaredNorm();
        out.grad.push_back(2.0 * d);
    }
    return out;
}

PositionLoss loss_pos(const Joints &pred, const Joints &gt) {
    if (pred.size() != gt.size())
        throw Error(ErrorKind::LengthMismatch, "loss_pos: prediction and label counts differ");
    PositionLoss out;
    out.grad.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const Vec3 d = pred[i] - gt[i];
        out.value += d.squaredNorm();
        out.grad.push_back(2.0 * d);
    }
    return out;
}

HeatmapLoss loss_hm(const CrossHeatmap &pred, const CrossHeatmap &gt, const SupervisionMask &mask) {
    if (!pred.well_formed() || !gt.well_formed() || pred.num_joints() != gt.num_joints() ||
        pred.rows() != gt.rows() || pred.cols() != gt.cols())
        throw Error(ErrorKind::ShapeMismatch, "loss_hm: heatmap shapes differ");
    HeatmapLoss out;
    for (int j = 0; j < pred.num_joints(); ++j) {
        const Heatmap dxy = pred.xy[j] - gt.xy[j];
        out.xy += dxy.squaredNorm();
        out.grad.xy.push_back(2.0 * dxy);
        if (mask.hm_zy) {
            const Heatmap dzy = pred.zy[j] - gt.zy[j];
            out.zy += dzy.squaredNorm();
            out.grad.zy.push_back(2.0 * dzy);
        } else {
            out.grad.zy.push_back(Heatmap::Zero(pred.rows(), pred.cols()));
        }
    }
    out.value = out.xy + out.zy;
    return out;
}

TotalLoss total_loss(const LossWeights &w, const LossComponents &c, const SupervisionMask &mask) {
    w.validate();
    TotalLoss out;
    out.partials.rotg = 1.0;
    out.partials.rotb = w.alpha;
    out.partials.rot = mask.rot ? w.beta : 0.0;
    out.partials.pos = mask.pos ? w.gamma : 0.0;
    out.partials.hm_xy = w.lambda;
    out.partials.hm_zy = mask.hm_zy ? w.lambda : 0.0;
    out.value = c.rotg + out.partials.rotb * c.rotb + out.partials.rot * c.rot + out.partials.pos * c.pos +
                out.partials.hm_xy * c.hm_xy + out.partials.hm_zy * c.hm_zy;
    return out;
}

namespace {

double mean_non_root_distance(const Joints &a, const Joints &b, const Skeleton &skel) {
    double s = 0.0;
    for (int j = 0; j < skel.num_joints(); ++j) {
        if (j != skel.root())
            s += (a[j] - b[j]).norm();
    }
    return s / (skel.num_joints() - 1);
}

void check_joint_counts(const Joints &pred, const Joints &gt, const Skeleton &skel) {
    if (pred.size() != gt.size() || static_cast<int>(gt.size()) != skel.num_joints())
        throw Error(ErrorKind::LengthMismatch, "mpjpe: joint counts differ");
}

Joints root_centered(const Joints &p, int root) {
    Joints out(p.size());
    for (std::size_t j = 0; j < p.size(); ++j)
        out[j] = p[j] - p[root];
    return out;
}

Eigen::Matrix3Xd to_matrix(const Joints &p) {
    Eigen::Matrix3Xd m(3, p.size());
    for (std::size_t j = 0; j < p.size(); ++j)
        m.col(j) = p[j];
    return m;
}

bool collinear(const Eigen::Matrix3Xd &centered) {
    const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3Xd>(centered).singularValues();
    return sv[0] < 1e-12 || sv[1] < 1e-9 * sv[0];
}

} // namespace

double mpjpe(const Joints &pred, const Joints &gt, const Skeleton &skel, double l_ave) {
    check_joint_counts(pred, gt, skel);
    return mean_non_root_distance(normalize_lengths(skel, pred, l_ave), root_centered(gt, skel.root()), skel);
}

double mpjpe_unnormalized(const Joints &pred, const Joints &gt, const Skeleton &skel) {
    check_joint_counts(pred, gt, skel);
    return mean_non_root_distance(root_centered(pred, skel.root()), root_centered(gt, skel.root()), skel);
}

Similarity align_similarity(const Joints &from, const Joints &to) {
    if (from.size() != to.size())
        throw Error(ErrorKind::LengthMismatch, "align_similarity: point counts differ");
    if (from.size() < 3)
        throw Error(ErrorKind::DegenerateInput, "align_similarity: need at least 3 points");
    const Eigen::Matrix3Xd x = to_matrix(from), y = to_matrix(to);
    const Vec3 mx = x.rowwise().mean(), my = y.rowwise().mean();
    const Eigen::Matrix3Xd xc = x.colwise() - mx, yc = y.colwise() - my;
    if (collinear(xc) || collinear(yc))
        throw Error(ErrorKind::DegenerateInput, "align_similarity: points are collinear");

    const Mat3 cov = yc * xc.transpose();
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 s = Vec3::Ones();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
        s[2] = -1.0;
    Similarity out;
    out.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    out.scale = svd.singularValues().dot(s) / xc.squaredNorm();
    out.translation = my - out.scale * out.rotation * mx;
    return out;
}

double reconstruction_error(const Joints &pred, const Joints &gt) {
    const Similarity t = align_similarity(pred, gt);
    double s = 0.0;
    for (std::size_t j = 0; j < pred.size(); ++j)
        s += (t.apply(pred[j]) - gt[j]).norm();
    return s / static_cast<double>(pred.size());
}

RotationErrors rotation_errors(const FinalPose &pred, const FinalPose &gt) {
    if (pred.absolute.size() != gt.absolute.size())
        throw Error(ErrorKind::LengthMismatch, "rotation_errors: bone counts differ");
    RotationErrors out;
    out.global_deg = geodesic_deg(pred.global, gt.global);
    const auto pr = pred.bone_rel(), gr = gt.bone_rel();
    if (!pr.empty()) {
        for (std::size_t b = 0; b < pr.size(); ++b)
            out.bone_deg += geodesic_deg(pr[b], gr[b]);
        out.bone_deg /= static_cast<double>(pr.size());
    }
    return out;
}

SampleMetrics evaluate_sample(const std::string &id, const FinalPose &pred, const FinalPose &gt,
                              const Skeleton &skel, double l_ave) {
    SampleMetrics m;
    m.id = id;
    m.mpjpe_mm = mpjpe(pred.joints, gt.joints, skel, l_ave);
    m.recon_mm = reconstruction_error(pred.joints, gt.joints);
    const RotationErrors r = rotation_errors(pred, gt);
    m.global_rot_deg = r.global_deg;
    m.bone_rot_deg = r.bone_deg;
    return m;
}

SampleMetrics aggregate_metrics(const std::vector<SampleMetrics> &samples) {
    SampleMetrics agg;
    agg.id = "mean";
    if (samples.empty())
        return agg;
    for (const SampleMetrics &s : samples) {
        agg.mpjpe_mm += s.mpjpe_mm;
        agg.recon_mm += s.recon_mm;
        agg.global_rot_deg += s.global_rot_deg;
        agg.bone_rot_deg += s.bone_rot_deg;
    }
    const double n = static_cast<double>(samples.size());
    agg.mpjpe_mm /= n;
    agg.recon_mm /= n;
    agg.global_rot_deg /= n;
    agg.bone_rot_deg /= n;
    return agg;
}

} // namespace skelpose
