#include "skelpose/lifting.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

#include "skelpose/errors.h"
#include "skelpose/serialization.h"
#include "skelpose/skinning.h"

namespace skelpose {

Eigen::VectorXd flatten(const Joints &joints) {
    Eigen::VectorXd v(3 * joints.size());
    for (std::size_t j = 0; j < joints.size(); ++j)
        v.segment<3>(3 * j) = joints[j];
    return v;
}

Joints unflatten(const Eigen::VectorXd &v) {
    Joints out(v.size() / 3);
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = v.segment<3>(3 * j);
    return out;
}

Joints PCABasis::pose(const Eigen::VectorXd &coefficients) const {
    return unflatten(mean + basis.transpose() * coefficients);
}

PCABasis build_pca_basis(const std::vector<Joints> &poses, int num_components, int root_index) {
    if (num_components < 1)
        throw Error(ErrorKind::Validation, "build_pca_basis: need at least one component");
    if (static_cast<int>(poses.size()) < num_components + 1)
        throw Error(ErrorKind::InsufficientData, "build_pca_basis: need more poses than components");
    const std::size_t m = poses.front().size();
    if (num_components > static_cast<int>(3 * m))
        throw Error(ErrorKind::Validation, "build_pca_basis: more components than dimensions");
    if (root_index < 0 || root_index >= static_cast<int>(m))
        throw Error(ErrorKind::Validation, "build_pca_basis: root index out of range");

    Eigen::MatrixXd data(poses.size(), 3 * m);
    for (std::size_t i = 0; i < poses.size(); ++i) {
        if (poses[i].size() != m)
            throw Error(ErrorKind::LengthMismatch, "build_pca_basis: poses differ in joint count");
        Joints c = poses[i];
        const Vec3 root = c[root_index];
        for (Vec3 &p : c)
            p -= root;
        data.row(i) = flatten(c).transpose();
    }
    PCABasis out;
    out.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centred = data.rowwise() - out.mean.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeFullV);
    out.basis.resize(num_components, 3 * m);
    out.variances.resize(num_components);
    const Eigen::VectorXd &sv = svd.singularValues();
    for (int k = 0; k < num_components; ++k) {
        Eigen::VectorXd dir = svd.matrixV().col(k);
        Eigen::Index big = 0;
        dir.cwiseAbs().maxCoeff(&big);
        if (dir[big] < 0.0)
            dir = -dir;
        out.basis.row(k) = dir.transpose();
        const double s = k < sv.size() ? sv[k] : 0.0;
        out.variances[k] = s * s / static_cast<double>(poses.size() - 1);
    }
    return out;
}

Vec2 WeakPerspectiveCamera::project(const Vec3 &p) const {
    return scale * (rotation.matrix().topRows<2>() * p) + translation;
}

std::vector<Vec2> WeakPerspectiveCamera::project(const Joints &joints) const {
    std::vector<Vec2> out;
    out.reserve(joints.size());
    for (const Vec3 &p : joints)
        out.push_back(project(p));
    return out;
}

double reprojection_rms(const WeakPerspectiveCamera &cam, const Joints &points, const std::vector<Vec2> &keypoints) {
    double s = 0.0;
    for (std::size_t j = 0; j < points.size(); ++j)
        s += (cam.project(points[j]) - keypoints[j]).squaredNorm();
    return std::sqrt(s / static_cast<double>(points.size()));
}

namespace {

using Matrix23 = Eigen::Matrix<double, 2, 3>;

Mat3 complete_rotation(const Matrix23 &r2) {
    Mat3 r;
    r.row(0) = r2.row(0).normalized();
    r.row(1) = (r2.row(1) - r2.row(1).dot(r.row(0)) * r.row(0)).normalized();
    r.row(2) = r.row(0).cross(r.row(1));
    return r;
}

// Orthographic cost for centred data: Σ‖k̃ − s (R X̃)_xy‖².
double camera_cost(const Eigen::Matrix3Xd &x, const Eigen::Matrix2Xd &k, double s, const Mat3 &r) {
    return (k - s * (r.topRows<2>() * x)).squaredNorm();
}

struct CameraCandidate {
    double scale;
    Mat3 rotation;
    double cost;
};

CameraCandidate refine_camera(const Eigen::Matrix3Xd &x, const Eigen::Matrix2Xd &k, Mat3 r) {
    // Best scale for this rotation; a negative scale is absorbed by a half
    // turn about the optical axis.
    const Eigen::Matrix2Xd proj = r.topRows<2>() * x;
    const double denom = proj.squaredNorm();
    double s = denom > 0.0 ? proj.cwiseProduct(k).sum() / denom : 1.0;
    if (s < 0.0) {
        r = Eigen::Vector3d(-1.0, -1.0, 1.0).asDiagonal() * r;
        s = -s;
    }
    if (!(s > 0.0))
        s = 1.0;

    double cost = camera_cost(x, k, s, r);
    double mu = 1e-3;
    for (int iter = 0; iter < 50; ++iter) {
        Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
        Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const Vec3 y = r * x.col(j);
            const Vec2 res = k.col(j) - s * y.head<2>();
            Eigen::Matrix<double, 2, 4> jac;
            jac.leftCols<3>() = s * skew(y).topRows<2>();
            jac.col(3) = -y.head<2>();
            jtj += jac.transpose() * jac;
            jtr += jac.transpose() * res;
        }
        bool improved = false;
        for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
            Eigen::Matrix4d a = jtj;
            a.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
            const Eigen::Vector4d delta = -a.ldlt().solve(jtr);
            const double s_new = s + delta[3];
            if (s_new > 0.0) {
                const double angle = delta.head<3>().norm();
                const Mat3 r_new =
                    angle > 0.0 ? Mat3(from_axis_angle(delta.head<3>() / angle, angle).matrix() * r) : r;
                const double c_new = camera_cost(x, k, s_new, r_new);
                if (c_new < cost) {
                    const double rel = (cost - c_new) / std::max(cost, 1e-300);
                    r = r_new;
                    s = s_new;
                    cost = c_new;
                    mu = std::max(mu / 3.0, 1e-12);
                    improved = true;
                    if (rel < 1e-15)
                        return {s, r, cost};
                    break;
                }
            }
            mu *= 5.0;
        }
        if (!improved)
            break;
    }
    return {s, r, cost};
}

} // namespace

WeakPerspectiveCamera fit_weak_perspective(const Joints &points, const std::vector<Vec2> &keypoints,
                                           const WeakPerspectiveCamera *initial) {
    if (points.size() != keypoints.size() || points.size() < 3)
        throw Error(ErrorKind::LengthMismatch, "fit_weak_perspective: need >= 3 matched points");
    const Eigen::Index m = static_cast<Eigen::Index>(points.size());
    Eigen::Matrix3Xd x(3, m);
    Eigen::Matrix2Xd k(2, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        x.col(j) = points[j];
        k.col(j) = keypoints[j];
    }
    const Vec3 mx = x.rowwise().mean();
    const Vec2 mk = k.rowwise().mean();
    x.colwise() -= mx;
    k.colwise() -= mk;

    std::vector<Mat3> starts;
    const Matrix23 cross = k * x.transpose();
    const Mat3 cov = x * x.transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    if (eig.eigenvalues()[0] > 1e-10 * eig.eigenvalues()[2]) {
        // Affine fit, then its nearest scaled-orthographic factor.
        const Matrix23 affine = cross * cov.inverse();
        Eigen::JacobiSVD<Matrix23> svd(affine, Eigen::ComputeFullU | Eigen::ComputeFullV);
        starts.push_back(complete_rotation(svd.matrixU() * svd.matrixV().leftCols<2>().transpose()));
    }
    {
        Eigen::JacobiSVD<Matrix23> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
        starts.push_back(complete_rotation(svd.matrixU() * svd.matrixV().leftCols<2>().transpose()));
    }
    if (initial)
        starts.push_back(initial->rotation.matrix());

    CameraCandidate best{1.0, Mat3::Identity(), std::numeric_limits<double>::infinity()};
    for (const Mat3 &r0 : starts) {
        const CameraCandidate c = refine_camera(x, k, r0);
        if (c.cost < best.cost)
            best = c;
    }
    if (initial) {
        // Keep the incoming camera when nothing beats it.
        const double c0 = camera_cost(x, k, initial->scale, initial->rotation.matrix());
        if (c0 <= best.cost)
            best = {initial->scale, initial->rotation.matrix(), c0};
    }

    WeakPerspectiveCamera cam;
    cam.scale = best.scale;
    cam.rotation = gram_schmidt(best.rotation);
    cam.translation = mk - cam.scale * (cam.rotation.matrix().topRows<2>() * mx);
    return cam;
}

std::string to_string(Verdict v) {
    switch (v) {
    case Verdict::Unreviewed: return "unreviewed";
    case Verdict::Acceptable: return "acceptable";
    case Verdict::Bad: return "bad";
    }
    return "unreviewed";
}

Verdict verdict_from_string(const std::string &s) {
    if (s == "unreviewed")
        return Verdict::Unreviewed;
    if (s == "acceptable")
        return Verdict::Acceptable;
    if (s == "bad")
        return Verdict::Bad;
    throw Error(ErrorKind::Validation, "unknown verdict: " + s);
}

namespace {

struct CoefficientFit {
    Eigen::VectorXd coefficients; // one per selected component
    Vec2 translation = Vec2::Zero();
    double sse = 0.0;
};

// Selected coefficients and the image translation by linear least squares,
// camera scale and rotation held fixed.
CoefficientFit fit_coefficients(const std::vector<Vec2> &keypoints, const PCABasis &basis,
                                const std::vector<int> &selected, const WeakPerspectiveCamera &cam) {
    const Eigen::Index m = static_cast<Eigen::Index>(keypoints.size());
    const Eigen::Index n = static_cast<Eigen::Index>(selected.size());
    const Eigen::Matrix<double, 2, 3> proj = cam.scale * cam.rotation.matrix().topRows<2>();
    Eigen::MatrixXd design(2 * m, n + 2);
    Eigen::VectorXd rhs(2 * m);
    for (Eigen::Index j = 0; j < m; ++j) {
        rhs.segment<2>(2 * j) = keypoints[j] - proj * basis.mean.segment<3>(3 * j);
        for (Eigen::Index c = 0; c < n; ++c)
            design.block<2, 1>(2 * j, c) = proj * basis.basis.row(selected[c]).segment<3>(3 * j).transpose();
        design.block<2, 2>(2 * j, n) = Eigen::Matrix2d::Identity();
    }
    const Eigen::VectorXd sol = design.colPivHouseholderQr().solve(rhs);
    CoefficientFit out;
    out.coefficients = sol.head(n);
    out.translation = sol.tail<2>();
    out.sse = (rhs - design * sol).squaredNorm();
    return out;
}

Eigen::VectorXd full_coefficients(const PCABasis &basis, const std::vector<int> &selected,
                                  const Eigen::VectorXd &values) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.num_components());
    for (std::size_t i = 0; i < selected.size(); ++i)
        c[selected[i]] = values[static_cast<Eigen::Index>(i)];
    return c;
}

bool collinear_2d(const std::vector<Vec2> &pts) {
    Eigen::Matrix2Xd k(2, pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j)
        k.col(j) = pts[j];
    k.colwise() -= k.rowwise().mean();
    const Eigen::Vector2d sv = Eigen::JacobiSVD<Eigen::Matrix2Xd>(k).singularValues();
    return sv[0] < 1e-12 || sv[1] < 1e-9 * sv[0];
}

struct PursuitState {
    WeakPerspectiveCamera cam;
    std::vector<int> selected;
    Eigen::VectorXd values;
    double sse = 0.0;
    bool converged = true;
};

double pursuit_sse(const std::vector<Vec2> &keypoints, const PCABasis &basis, const PursuitState &st) {
    const Joints x = basis.pose(full_coefficients(basis, st.selected, st.values));
    double sse = 0.0;
    for (std::size_t j = 0; j < keypoints.size(); ++j)
        sse += (keypoints[j] - st.cam.project(x[j])).squaredNorm();
    return sse;
}

// Levenberg-Marquardt on camera rotation, scale, translation and the selected
// coefficients together.
bool refine_jointly(const std::vector<Vec2> &keypoints, const PCABasis &basis, PursuitState &st, int max_iter) {
    const Eigen::Index m = static_cast<Eigen::Index>(keypoints.size());
    const Eigen::Index n = static_cast<Eigen::Index>(st.selected.size());
    const Eigen::Index dim = 6 + n;
    double mu = 1e-3;
    st.sse = pursuit_sse(keypoints, basis, st);
    for (int iter = 0; iter < max_iter; ++iter) {
        const Joints x = basis.pose(full_coefficients(basis, st.selected, st.values));
        const Mat3 r = st.cam.rotation.matrix();
        const Eigen::Matrix<double, 2, 3> proj = st.cam.scale * r.topRows<2>();
        Eigen::MatrixXd jtj = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd jtr = Eigen::VectorXd::Zero(dim);
        Eigen::MatrixXd jac(2, dim);
        for (Eigen::Index j = 0; j < m; ++j) {
            const Vec3 y = r * x[j];
            const Vec2 res = keypoints[j] - st.cam.scale * y.head<2>() - st.cam.translation;
            jac.leftCols<3>() = st.cam.scale * skew(y).topRows<2>();
            jac.col(3) = -y.head<2>();
            jac.block<2, 2>(0, 4) = -Eigen::Matrix2d::Identity();
            for (Eigen::Index c = 0; c < n; ++c)
                jac.col(6 + c) = -proj * basis.basis.row(st.selected[c]).segment<3>(3 * j).transpose();
            jtj += jac.transpose() * jac;
            jtr += jac.transpose() * res;
        }
        bool improved = false;
        for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
            const Eigen::VectorXd delta = -a.ldlt().solve(jtr);
            PursuitState trial = st;
            trial.cam.scale += delta[3];
            if (trial.cam.scale > 0.0) {
                const Vec3 w = delta.head<3>();
                const double angle = w.norm();
                if (angle > 0.0)
                    trial.cam.rotation = gram_schmidt(from_axis_angle(w / angle, angle).matrix() * r);
                trial.cam.translation += delta.segment<2>(4);
                trial.values += delta.tail(n);
                const double sse = pursuit_sse(keypoints, basis, trial);
                if (sse < st.sse) {
                    const bool settled = st.sse - sse <= 1e-12 * st.sse + 1e-24;
                    st = std::move(trial);
                    st.sse = sse;
                    mu = std::max(mu / 3.0, 1e-12);
                    improved = true;
                    if (settled)
                        return true;
                    break;
                }
            }
            mu *= 5.0;
        }
        if (!improved)
            return true;
    }
    return false;
}

PursuitState start_from(const std::vector<Vec2> &keypoints, const PCABasis &basis, const PmpOptions &opt,
                        const WeakPerspectiveCamera &cam) {
    PursuitState st;
    st.cam = cam;
    st.cam.translation = fit_coefficients(keypoints, basis, st.selected, st.cam).translation;
    st.converged = refine_jointly(keypoints, basis, st, opt.refine_iterations);
    return st;
}

// Greedy additions from a refined state until max_components or the
// improvement stalls.
PursuitState pursue(const std::vector<Vec2> &keypoints, const PCABasis &basis, int max_components,
                    const PmpOptions &opt, PursuitState st) {
    std::vector<bool> used(basis.num_components(), false);
    for (int i : st.selected)
        used[i] = true;
    const int lm_iterations = opt.refine_iterations;

    while (static_cast<int>(st.selected.size()) < max_components && st.sse > 1e-20) {
        int best = -1;
        CoefficientFit best_fit;
        best_fit.sse = std::numeric_limits<double>::infinity();
        for (int i = 0; i < basis.num_components(); ++i) {
            if (used[i])
                continue;
            std::vector<int> trial = st.selected;
            trial.push_back(i);
            CoefficientFit f = fit_coefficients(keypoints, basis, trial, st.cam);
            if (f.sse < best_fit.sse) {
                best_fit = std::move(f);
                best = i;
            }
        }
        if (best < 0)
            break;
        // The improvement is judged after the camera has been refit with the
        // new component, not with the camera frozen.
        PursuitState next = st;
        next.selected.push_back(best);
        next.values = best_fit.coefficients;
        next.cam.translation = best_fit.translation;
        if (!refine_jointly(keypoints, basis, next, lm_iterations))
            next.converged = false;
        if ((st.sse - next.sse) / st.sse < opt.min_relative_improvement)
            break;
        st = std::move(next);
        used[best] = true;
    }
    return st;
}

// The mirror-image camera for a nearly planar shape: reflect the shape about
// its own plane and the view about the image plane.
WeakPerspectiveCamera necker_alternative(const WeakPerspectiveCamera &cam, const Joints &shape) {
    Eigen::Matrix3Xd x(3, shape.size());
    for (std::size_t j = 0; j < shape.size(); ++j)
        x.col(static_cast<Eigen::Index>(j)) = shape[j];
    x.colwise() -= x.rowwise().mean();
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(x * x.transpose());
    const Vec3 normal = eig.eigenvectors().col(0);
    const Mat3 h = Mat3::Identity() - 2.0 * normal * normal.transpose();
    WeakPerspectiveCamera alt = cam;
    alt.rotation = gram_schmidt(Eigen::Vector3d(1.0, 1.0, -1.0).asDiagonal() * cam.rotation.matrix() * h);
    return alt;
}

// For a fixed rotation the model k = sΠR(μ + Bc) + t is linear in
// (s, s·c, t), so the optimal scale, coefficients and translation are exact.
PursuitState solve_for_rotation(const std::vector<Vec2> &keypoints, const PCABasis &basis,
                                const std::vector<int> &selected, const Mat3 &rotation) {
    const Eigen::Index m = static_cast<Eigen::Index>(keypoints.size());
    const Eigen::Index n = static_cast<Eigen::Index>(selected.size());
    const Eigen::Matrix<double, 2, 3> proj = rotation.topRows<2>();
    Eigen::MatrixXd design(2 * m, n + 3);
    Eigen::VectorXd rhs(2 * m);
    for (Eigen::Index j = 0; j < m; ++j) {
        rhs.segment<2>(2 * j) = keypoints[j];
        design.block<2, 1>(2 * j, 0) = proj * basis.mean.segment<3>(3 * j);
        for (Eigen::Index c = 0; c < n; ++c)
            design.block<2, 1>(2 * j, 1 + c) = proj * basis.basis.row(selected[c]).segment<3>(3 * j).transpose();
        design.block<2, 2>(2 * j, n + 1) = Eigen::Matrix2d::Identity();
    }
    const Eigen::VectorXd sol = design.colPivHouseholderQr().solve(rhs);
    PursuitState st;
    st.selected = selected;
    st.sse = std::numeric_limits<double>::infinity();
    double a = sol[0];
    if (!(std::abs(a) > 1e-12))
        return st;
    Mat3 r = rotation;
    Eigen::VectorXd b = sol.segment(1, n);
    if (a < 0.0) {
        r = Eigen::Vector3d(-1.0, -1.0, 1.0).asDiagonal() * r;
        a = -a;
        b = -b;
    }
    st.cam.scale = a;
    st.cam.rotation = RotationMatrix::unchecked(r);
    st.cam.translation = sol.tail<2>();
    st.values = b / a;
    st.sse = (rhs - design * sol).squaredNorm();
    return st;
}

// Grid over unit quaternions (one per antipodal pair), linear solve at each,
// then joint refinement from the best few.
PursuitState search_rotations(const std::vector<Vec2> &keypoints, const PCABasis &basis,
                              const std::vector<int> &selected, const PmpOptions &opt) {
    const int steps = 6;
    std::vector<PursuitState> found;
    for (int face = 0; face < 4; ++face) {
        for (int i = 0; i < steps; ++i) {
            for (int j = 0; j < steps; ++j) {
                for (int k = 0; k < steps; ++k) {
                    Eigen::Vector4d q;
                    const double u[3] = {-1.0 + (2.0 * i + 1.0) / steps, -1.0 + (2.0 * j + 1.0) / steps,
                                         -1.0 + (2.0 * k + 1.0) / steps};
                    q[face] = 1.0;
                    for (int d = 0, e = 0; d < 4; ++d) {
                        if (d != face)
                            q[d] = u[e++];
                    }
                    q.normalize();
                    const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
                    PursuitState st = solve_for_rotation(keypoints, basis, selected, quat.toRotationMatrix());
                    if (std::isfinite(st.sse))
                        found.push_back(std::move(st));
                }
            }
        }
    }
    const std::size_t keep = std::min<std::size_t>(3, found.size());
    std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(keep), found.end(),
                      [](const PursuitState &x, const PursuitState &y) { return x.sse < y.sse; });
    PursuitState best;
    best.sse = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < keep; ++i) {
        PursuitState st = std::move(found[i]);
        if (!refine_jointly(keypoints, basis, st, opt.refine_iterations))
            st.converged = false;
        if (st.sse < best.sse)
            best = std::move(st);
    }
    return best;
}

} // namespace

LiftResult pmp_lift(const std::vector<Vec2> &keypoints, const PCABasis &basis, int max_components,
                    const PmpOptions &opt) {
    if (static_cast<int>(keypoints.size()) != basis.num_joints())
        throw Error(ErrorKind::LengthMismatch, "pmp_lift: keypoint count does not match basis");
    for (const Vec2 &k : keypoints) {
        if (!k.allFinite())
            throw Error(ErrorKind::Validation, "pmp_lift: missing or non-finite keypoint");
    }
    if (collinear_2d(keypoints))
        throw Error(ErrorKind::DegenerateInput, "pmp_lift: keypoints are collinear");
    max_components = std::clamp(max_components, 0, basis.num_components());

    const Joints mean = unflatten(basis.mean);
    const WeakPerspectiveCamera first = fit_weak_perspective(mean, keypoints);
    PursuitState best = pursue(keypoints, basis, max_components, opt, start_from(keypoints, basis, opt, first));
    PursuitState alt = pursue(keypoints, basis, max_components, opt,
                              start_from(keypoints, basis, opt, necker_alternative(first, mean)));
    if (alt.sse < best.sse)
        best = std::move(alt);
    if (best.sse > 1e-20) {
        // A camera search over the chosen components can escape a local
        // minimum; the pursuit then continues from there.
        PursuitState global = search_rotations(keypoints, basis, best.selected, opt);
        if (global.sse < best.sse)
            global = pursue(keypoints, basis, max_components, opt, std::move(global));
        if (global.sse < best.sse)
            best = std::move(global);
    }

    LiftResult out;
    out.joints3d = basis.pose(full_coefficients(basis, best.selected, best.values));
    out.camera = best.cam;
    out.converged = best.converged;
    for (std::size_t i = 0; i < best.selected.size(); ++i)
        out.coefficients.emplace_back(best.selected[i], best.values[static_cast<Eigen::Index>(i)]);
    out.reprojection_error = reprojection_rms(out.camera, out.joints3d, keypoints);
    return out;
}

RotationMatrix root_frame(const Skeleton &skel, const Joints &joints) {
    auto frame_from = [&](const std::vector<int> &bones, double *second_sv) {
        Mat3 h = Mat3::Zero();
        for (int b : bones) {
            const Vec3 t = joints[skel.bone(b).child] - joints[skel.bone(b).parent];
            if (t.norm() < 1e-12)
                continue;
            h += t.normalized() * skel.rest_bone(b).normalized().transpose();
        }
        Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
        *second_sv = svd.singularValues()[1] / std::max(svd.singularValues()[0], 1e-300);
        Vec3 s = Vec3::Ones();
        if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
            s[2] = -1.0;
        return RotationMatrix::unchecked(svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose());
    };

    std::vector<int> bones = skel.root_bones();
    double spread = 0.0;
    RotationMatrix r = frame_from(bones, &spread);
    if (spread > 1e-9)
        return r;
    for (int b : skel.root_bones())
        bones.insert(bones.end(), skel.child_bones(b).begin(), skel.child_bones(b).end());
    r = frame_from(bones, &spread);
    if (spread > 1e-9)
        return r;
    // Collinear chain: the swing of the first root bone is all that is defined.
    const int b0 = skel.root_bones().front();
    const Vec3 t = joints[skel.bone(b0).child] - joints[skel.bone(b0).parent];
    if (t.norm() < 1e-9)
        return RotationMatrix::identity();
    return minimal_rotation(skel.rest_bone(b0), t);
}

double fit_energy(const Skeleton &skel, const std::vector<Mat3> &absolute, const Joints &centred_target,
                  const FitOptions &opt) {
    const Joints x = integrate_bones(skel, absolute);
    double pos = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j)
        pos += (x[j] - centred_target[j]).squaredNorm();
    double smooth = 0.0;
    for (int b = 0; b < skel.num_bones(); ++b) {
        for (int c : skel.child_bones(b))
            smooth += (absolute[b] - absolute[c]).squaredNorm();
    }
    return opt.w_pos * pos + opt.w_smooth * smooth;
}

FitResult fit_skeleton(const Joints &target, const Skeleton &skel, const FitOptions &opt) {
    if (static_cast<int>(target.size()) != skel.num_joints())
        throw Error(ErrorKind::LengthMismatch, "fit_skeleton: target joint count does not match skeleton");
    for (const Vec3 &p : target) {
        if (!p.allFinite())
            throw Error(ErrorKind::Validation, "fit_skeleton: non-finite target");
    }
    const int n = skel.num_bones();
    Joints t(target.size());
    for (std::size_t j = 0; j < target.size(); ++j)
        t[j] = target[j] - target[skel.root()];

    // Initial rotations: a root frame from the root bones, then each bone
    // swung from its parent bone's frame onto its target direction.
    const RotationMatrix g0 = root_frame(skel, t);
    std::vector<Mat3> a(n);
    for (int b = 0; b < n; ++b) {
        const Bone &bone = skel.bone(b);
        const int pb = skel.bone_of_joint(bone.parent);
        const Mat3 frame = pb < 0 ? g0.matrix() : a[pb];
        const Vec3 dir = t[bone.child] - t[bone.parent];
        a[b] = dir.norm() < 1e-9 ? frame : minimal_rotation(frame * skel.rest_bone(b), dir).matrix() * frame;
    }

    // Joints below each bone, and the bones adjacent to it.
    std::vector<std::vector<int>> subtree(n), adjacent(n);
    for (int b = n - 1; b >= 0; --b) {
        subtree[b].push_back(skel.bone(b).child);
        for (int c : skel.child_bones(b)) {
            subtree[b].insert(subtree[b].end(), subtree[c].begin(), subtree[c].end());
            adjacent[b].push_back(c);
            adjacent[c].push_back(b);
        }
    }

    FitResult out;
    out.energy.push_back(fit_energy(skel, a, t, opt));
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        for (int b = 0; b < n; ++b) {
            const Joints x = integrate_bones(skel, a);
            const Bone &bone = skel.bone(b);
            const Vec3 &r = skel.rest_bone(b);
            Mat3 m = Mat3::Zero();
            for (int j : subtree[b]) {
                const Vec3 q = t[j] - x[bone.parent] - (x[j] - x[bone.child]);
                m += opt.w_pos * q * r.transpose();
            }
            for (int c : adjacent[b])
                m += opt.w_smooth * a[c];
            Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
            Vec3 s = Vec3::Ones();
            if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
                s[2] = -1.0;
            a[b] = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
        }
        const double e = fit_energy(skel, a, t, opt);
        const double prev = out.energy.back();
        out.energy.push_back(e);
        if (prev - e <= opt.min_relative_decrease * prev || e < 1e-18) {
            out.converged = true;
            break;
        }
    }

    const Joints x = integrate_bones(skel, a);
    const RotationMatrix g = root_frame(skel, x);
    std::vector<RotationMatrix> rel;
    rel.reserve(n);
    for (const Mat3 &ab : a)
        rel.push_back(RotationMatrix::unchecked(g.matrix().transpose() * ab));
    out.pose = forward_kinematics(skel, g, rel);
    return out;
}

std::vector<KeypointSample> read_keypoint_lines(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::IO, "cannot open " + path);
    std::vector<KeypointSample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            out.push_back(keypoint_sample_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception &e) {
            throw Error(ErrorKind::Validation, path + ": " + e.what());
        }
    }
    return out;
}

std::vector<AnnotatedSample> annotate_batch(const std::string &keypoint_file, const PCABasis &basis,
                                            const Skeleton &skel, const std::string &out_dir,
                                            const AnnotateOptions &opt) {
    const std::vector<KeypointSample> samples = read_keypoint_lines(keypoint_file);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw Error(ErrorKind::IO, "cannot create " + out_dir + ": " + ec.message());

    const SkinnedMesh body = make_demo_body(skel);
    std::vector<AnnotatedSample> out;
    out.reserve(samples.size());
    for (const KeypointSample &s : samples) {
        AnnotatedSample a;
        a.id = s.id;
        a.keypoints = s.keypoints;
        a.lift = pmp_lift(s.keypoints, basis, opt.max_components, opt.pmp);
        const FitResult fit = fit_skeleton(a.lift.joints3d, skel, opt.fit);
        a.fit_converged = fit.converged;
        a.pose = final_pose_from(fit.pose);

        const std::filesystem::path base = std::filesystem::path(out_dir) / s.id;
        write_json_file(annotated_sample_to_json(a), base.string() + ".json");
        export_obj(skin(body, skel, a.pose), body.faces, base.string() + ".obj");
        out.push_back(std::move(a));
    }
    return out;
}

} // namespace skelpose
