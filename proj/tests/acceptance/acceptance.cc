// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "generators.h"
#include "oracles.h"
#include "skelpose/assembly.h"
#include "skelpose/diffgraph.h"
#include "skelpose/errors.h"
#include "skelpose/gradcheck_suite.h"
#include "skelpose/heatmaps.h"
#include "skelpose/lifting.h"
#include "skelpose/objectives.h"
#include "skelpose/trainer.h"

using namespace skelpose;
using namespace skelpose::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const std::string &name, bool ok, const std::string &detail) {
    std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok)
        ++failures;
}

std::string fmt(const char *f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void gradcheck_suite() {
    const auto t0 = Clock::now();
    const auto rows = run_gradcheck_suite(100, 20240601, 1e-4);
    const double secs = seconds_since(t0);
    const std::vector<std::string> required = {"gram_schmidt", "forward_kinematics", "soft_argmax", "blend",
                                               "loss_rotg",    "loss_rotb",          "loss_rot",    "loss_pos",
                                               "loss_hm"};
    bool ok = secs < 60.0;
    double worst = 0.0;
    int min_instances = 1 << 30;
    for (const std::string &name : required) {
        auto it = std::find_if(rows.begin(), rows.end(), [&](const LayerCheck &r) { return r.layer == name; });
        if (it == rows.end()) {
            ok = false;
            continue;
        }
        ok = ok && it->passed && it->instances >= 100;
        worst = std::max(worst, it->max_relative_error);
        min_instances = std::min(min_instances, it->instances);
    }
    for (const LayerCheck &r : rows)
        ok = ok && r.passed;
    report("gradcheck", ok,
           fmt("max rel err %.2e over %zu layers, >= %d instances each, %.1f s", worst, rows.size(), min_instances,
               secs));
}

void orthonormality() {
    Rng rng(1);
    double worst = 0.0, worst_det = 0.0;
    int degenerate = 0;
    for (int i = 0; i < 100000; ++i) {
        const Mat3 m = random_matrix(rng);
        try {
            const Mat3 q = gram_schmidt(m).matrix();
            worst = std::max(worst, (q.transpose() * q - Mat3::Identity()).norm());
            worst_det = std::max(worst_det, std::abs(q.determinant() - 1.0));
        } catch (const Error &) {
            ++degenerate;
        }
    }
    report("orthonormality", worst < 1e-9 && worst_det < 1e-9 && degenerate == 0,
           fmt("1e5 outputs: max |QtQ-I|_F %.2e, max |det-1| %.2e, degenerate %d", worst, worst_det, degenerate));
}

void fk_isometry() {
    Rng rng(2);
    const Skeleton skel = default_skeleton();
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const Pose p = random_pose(rng, skel);
        const auto bones = bone_vectors(skel, p.joints);
        for (int b = 0; b < skel.num_bones(); ++b)
            worst = std::max(worst, std::abs(bones[b].norm() - skel.rest_length(b)));
    }
    report("fk_isometry", worst < 1e-6, fmt("1e4 poses x 15 bones: max length error %.2e mm", worst));
}

void cross_heatmap_round_trip() {
    Rng rng(3);
    const Skeleton skel = default_skeleton();
    const VolumeBounds bounds;
    const double px_mm = kDefaultVolumeSide / kDefaultGrid;
    double worst = 0.0;
    int accepted = 0, rejected = 0;
    while (accepted < 1000) {
        const Pose p = random_pose(rng, skel, 90.0);
        const EncodedCross e = encode_cross(p.joints, bounds, kDefaultGrid, kDefaultSigma);
        if (std::any_of(e.out_of_bounds.begin(), e.out_of_bounds.end(), [](bool b) { return b; })) {
            ++rejected;
            continue;
        }
        ++accepted;
        const DecodedCross d = decode_cross(e.maps, bounds, kDefaultTemperature);
        for (int j = 0; j < skel.num_joints(); ++j)
            worst = std::max(worst, (d.joints[j] - p.joints[j]).cwiseAbs().maxCoeff());
    }
    const std::size_t cross = cross_heatmap_values(16, 64, 64);
    const std::size_t volume = volumetric_heatmap_values(16, 64, 64, 64);
    const bool ratio_ok = cross * 32 == volume;
    report("cross_heatmap", worst < 0.5 * px_mm && ratio_ok,
           fmt("1e3 in-volume poses (%d resampled): max error %.3f px; memory %zu/%zu = 1/%zu", rejected,
               worst / px_mm, cross, volume, volume / cross));
}

void refinement() {
    Rng rng(4);
    const Skeleton skel = default_skeleton();
    double worst_par = 0.0, worst_perp = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Pose p = random_pose(rng, skel);
        InitialPose init{p.global, p.bone_rel, p.absolute, p.joints};
        Joints x_final = p.joints;
        for (Vec3 &x : x_final)
            x += random_vec(rng, 60.0);
        const FinalPose f = refine_rotations(init, x_final, skel);
        const auto d_r = alignment_rotations(init.joints, x_final, skel);
        const auto vi = bone_vectors(skel, init.joints);
        const auto vf = bone_vectors(skel, x_final);
        for (int b = 0; b < skel.num_bones(); ++b) {
            const Vec3 mapped = (f.absolute[b].matrix() * skel.rest_bone(b)).normalized();
            const Vec3 target = vf[b].normalized();
            worst_par = std::max(worst_par, (mapped - target).norm());
            const AxisAngle aa = to_axis_angle(d_r[b]);
            if (aa.angle > 1e-6)
                worst_perp = std::max(worst_perp, std::abs(aa.axis.dot(vi[b].normalized())));
        }
    }
    report("refinement", worst_par < 1e-6 && worst_perp < 1e-6,
           fmt("1e3 cases: max |R r_hat - x_hat| %.2e, max |axis . init_dir| %.2e", worst_par, worst_perp));
}

void metrics() {
    Rng rng(5);
    const Skeleton skel = default_skeleton();
    double worst_recon = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Pose p = random_pose(rng, skel);
        const double s = uniform(rng, 0.2, 5.0);
        const Mat3 r = random_rotation(rng).matrix();
        const Vec3 t = random_vec(rng, 1000.0);
        Joints pred;
        for (const Vec3 &x : p.joints)
            pred.push_back(s * r * x + t);
        worst_recon = std::max(worst_recon, reconstruction_error(pred, p.joints));
    }

    // Exact-perturbation fixture: every non-root joint moved 10 mm along ±x.
    const Pose gt = random_pose(rng, skel);
    Joints pred = gt.joints;
    for (int j = 0; j < skel.num_joints(); ++j) {
        if (j != skel.root())
            pred[j].x() += (j % 2 == 0 ? 10.0 : -10.0);
    }
    const double mp = mpjpe(pred, gt.joints, skel, total_bone_length(skel, pred));

    // Global rotation off by 30° about y, bones unchanged.
    const FinalPose g = final_pose_from(gt);
    const FinalPose q = final_pose_from(
        forward_kinematics(skel, from_axis_angle(Vec3::UnitY(), rad(30.0)) * gt.global, gt.bone_rel));
    const RotationErrors re = rotation_errors(q, g);

    const bool ok = worst_recon < 1e-9 && std::abs(mp - 10.0) < 1e-9 && std::abs(re.global_deg - 30.0) < 1e-9 &&
                    std::abs(re.bone_deg) < 1e-9;
    report("metrics", ok,
           fmt("similarity recon max %.2e mm; mpjpe fixture %.12f mm; rotation errors (%.12f, %.2e) deg", worst_recon,
               mp, re.global_deg, re.bone_deg));
}

void total_loss_check() {
    const LossWeights w;
    const LossComponents ones{1.0, 1.0, 1.0, 1.0, 0.5, 0.5};
    const double v = total_loss(w, ones, SupervisionMask::full()).value;

    // Masked sample: gradients reaching the masked terms through the tape.
    Rng rng(6);
    const Skeleton skel = default_skeleton();
    const SupervisionMask mask = SupervisionMask::rotation_only();
    const TotalLoss tl = total_loss(w, ones, mask);
    Graph g;
    const NodeId x = g.leaf(joints_to_matrix(random_joints(rng, 16, 300.0)));
    const NodeId r = g.leaf(random_matrix(rng));
    const int grid = 8;
    CrossHeatmap gt;
    for (int j = 0; j < 16; ++j) {
        gt.xy.push_back(Heatmap::Random(grid, grid));
        gt.zy.push_back(Heatmap::Random(grid, grid));
    }
    const NodeId maps = g.leaf(Eigen::MatrixXd::Random(2 * 16 * grid, grid));
    const NodeId l_pos = ops::loss_pos(g, x, random_joints(rng, 16, 300.0));
    const NodeId l_rot = ops::loss_rot_mse(g, {r}, {random_rotation(rng).matrix()});
    const NodeId l_hm = ops::loss_hm(g, maps, gt, mask);
    const NodeId total = ops::weighted_sum(g, {l_pos, l_rot, l_hm}, {tl.partials.pos, tl.partials.rot, w.lambda});
    g.backward(total);
    const bool pos_zero = (g.grad(x).array() == 0.0).all();
    const bool rot_zero = (g.grad(r).array() == 0.0).all();
    const bool zy_zero = (g.grad(maps).bottomRows(16 * grid).array() == 0.0).all();
    const bool xy_live = (g.grad(maps).topRows(16 * grid).array() != 0.0).any();
    const bool partials_zero = tl.partials.pos == 0.0 && tl.partials.rot == 0.0 && tl.partials.hm_zy == 0.0;
    report("total_loss", std::abs(v - 1.301) < 1e-12 && pos_zero && rot_zero && zy_zero && xy_live && partials_zero,
           fmt("ones -> %.15f; masked grads exactly zero: pos %d rot %d zy %d (xy live %d)", v, pos_zero, rot_zero,
               zy_zero, xy_live));
}

PCABasis synthetic_basis(Rng &rng, const Skeleton &skel, int components) {
    std::vector<Joints> poses;
    for (int i = 0; i < 400; ++i)
        poses.push_back(forward_kinematics(skel, random_small_rotation(rng, 10.0),
                                           random_bone_rotations(rng, skel.num_bones(), 35.0))
                            .joints);
    return build_pca_basis(poses, components, skel.root());
}

void pmp() {
    Rng rng(7);
    const Skeleton skel = default_skeleton();
    const PCABasis basis = synthetic_basis(rng, skel, 10);
    const auto t0 = Clock::now();
    std::vector<double> err, floor;
    double worst_scale = 0.0;
    for (int i = 0; i < 50; ++i) {
        Eigen::VectorXd c(10);
        for (int k = 0; k < 10; ++k)
            c[k] = normal(rng, std::sqrt(basis.variances[k]));
        const Joints truth = basis.pose(c);
        WeakPerspectiveCamera cam;
        cam.scale = uniform(rng, 0.5, 2.0);
        cam.rotation = random_small_rotation(rng, 60.0);
        cam.translation = Vec2(uniform(rng, 200, 800), uniform(rng, 200, 800));
        const std::vector<Vec2> clean = cam.project(truth);
        std::vector<Vec2> noisy = clean;
        for (Vec2 &k : noisy)
            k += Vec2(normal(rng), normal(rng));

        const LiftResult exact = pmp_lift(clean, basis, 10);
        worst_scale = std::max(worst_scale, std::abs(exact.camera.scale / cam.scale - 1.0));
        const LiftResult lifted = pmp_lift(noisy, basis, 10);
        err.push_back(reconstruction_error(lifted.joints3d, truth));
        floor.push_back(reconstruction_error(oracle::full_ls_lift(noisy, basis, cam), truth));
    }
    const double secs = seconds_since(t0);
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    const double m_err = median(err), m_floor = median(floor);
    report("pmp", m_err <= 1.5 * m_floor && worst_scale < 0.01 && secs < 30.0,
           fmt("median recon %.3f mm vs oracle floor %.3f mm (ratio %.3f); max scale error %.2e; %.2f s", m_err,
               m_floor, m_err / m_floor, worst_scale, secs));
}

// Root bones carry the global rotation. Every other bone is its parent's frame
// followed by a swing: a hinge where the rest bones bend, any swing where they are collinear.
Pose swing_chain_pose(Rng &rng, const Skeleton &skel, double max_deg) {
    const RotationMatrix g = random_rotation(rng);
    std::vector<Mat3> a(skel.num_bones());
    for (int b = 0; b < skel.num_bones(); ++b) {
        const int pb = skel.bone_of_joint(skel.bone(b).parent);
        if (pb < 0) {
            a[b] = g.matrix();
            continue;
        }
        const Vec3 hinge = skel.rest_bone(pb).normalized().cross(skel.rest_bone(b).normalized());
        Vec3 axis;
        if (hinge.norm() > 1e-6)
            axis = a[pb] * hinge.normalized();
        else
            axis = (a[pb] * skel.rest_bone(b)).cross(random_unit(rng)).normalized();
        a[b] = from_axis_angle(axis, rad(uniform(rng, -max_deg, max_deg))).matrix() * a[pb];
    }
    std::vector<RotationMatrix> rel;
    for (const Mat3 &ab : a)
        rel.push_back(RotationMatrix::unchecked(g.matrix().transpose() * ab));
    return forward_kinematics(skel, g, rel);
}

void fit() {
    Rng rng(8);
    const Skeleton skel = default_skeleton();
    double worst_mean_geo = 0.0, worst_joint = 0.0;
    bool monotone = true;
    for (int i = 0; i < 200; ++i) {
        const Pose truth = swing_chain_pose(rng, skel, 10.0);
        const Vec3 offset = random_vec(rng, 500.0);
        Joints target = truth.joints;
        for (Vec3 &x : target)
            x += offset;
        const FitResult r = fit_skeleton(target, skel);
        double geo = 0.0;
        for (int b = 0; b < skel.num_bones(); ++b)
            geo += geodesic_deg(r.pose.absolute[b], truth.absolute[b]);
        worst_mean_geo = std::max(worst_mean_geo, geo / skel.num_bones());
        for (int j = 0; j < skel.num_joints(); ++j)
            worst_joint = std::max(worst_joint, (r.pose.joints[j] - truth.joints[j]).norm());
        for (std::size_t k = 1; k < r.energy.size(); ++k)
            monotone = monotone && r.energy[k] <= r.energy[k - 1] * (1.0 + 1e-12) + 1e-12;
    }
    report("fit_skeleton", worst_mean_geo < 0.5 && worst_joint < 1e-3 && monotone,
           fmt("200 poses, swings <= 10 deg: worst mean bone geodesic %.4f deg, worst joint error %.2e mm, energy monotone %d",
               worst_mean_geo, worst_joint, monotone));
}

RotationCodebook three_clusters() {
    RotationCodebook cb;
    cb.centers.push_back(Mat3::Identity());
    cb.centers.push_back(from_axis_angle(Vec3::UnitY(), rad(100.0)).matrix());
    cb.centers.push_back(from_axis_angle(Vec3::UnitX(), rad(70.0)).matrix());
    return cb;
}

void toy_training() {
    const auto t0 = Clock::now();
    const Skeleton skel = default_skeleton();
    const RotationCodebook cb = three_clusters();
    const LossWeights w;

    const auto one = make_synthetic_dataset(1, skel, cb, 0.0, 11);
    TrainOptions o1;
    o1.epochs = 300;
    o1.lr = 0.05;
    o1.batch_size = 1;
    o1.seed = 11;
    const TrainResult r1 = train_toy(one, skel, cb, w, o1);
    const double ratio = r1.curve.back().total / r1.curve.front().total;

    const auto data = make_synthetic_dataset(200, skel, cb, 0.005, 12);
    TrainOptions o2;
    o2.epochs = 30;
    o2.lr = 0.05;
    o2.batch_size = 8;
    o2.seed = 12;
    const TrainResult r2 = train_toy(data, skel, cb, w, o2);
    const double acc = classification_accuracy(r2.model, data);

    TrainOptions o3 = o2;
    o3.epochs = 3;
    const TrainResult a = train_toy(data, skel, cb, w, o3);
    const TrainResult b = train_toy(data, skel, cb, w, o3);
    bool same = a.curve.size() == b.curve.size() && a.model.w1 == b.model.w1 && a.model.w3 == b.model.w3 &&
                a.model.residual == b.model.residual;
    for (std::size_t e = 0; same && e < a.curve.size(); ++e)
        same = a.curve[e].total == b.curve[e].total;

    const double secs = seconds_since(t0);
    report("toy_training", ratio < 0.05 && acc > 0.9 && same && !r1.diverged && !r2.diverged && secs < 300.0,
           fmt("overfit final/initial %.4f; 3-cluster accuracy %.3f; deterministic %d; %.1f s", ratio, acc, same,
               secs));
}

} // namespace

int main() {
    const std::vector<std::function<void()>> criteria = {
        gradcheck_suite, orthonormality, fk_isometry, cross_heatmap_round_trip, refinement,
        metrics,         total_loss_check, pmp,        fit,                      toy_training};
    for (const auto &c : criteria) {
        try {
            c();
        } catch (const std::exception &e) {
            report("exception", false, e.what());
        }
    }
    std::printf("%s\n", failures == 0 ? "ALL PASS" : fmt("%d FAILED", failures).c_str());
    return failures == 0 ? 0 : 1;
}
