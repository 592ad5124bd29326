#include "skelpose/rotations.h"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "skelpose/errors.h"

namespace skelpose {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::BindMismatch: return "BindMismatch";
    case ErrorKind::GraphCycle: return "GraphCycle";
    case ErrorKind::Validation: return "Validation";
    case ErrorKind::IO: return "IO";
    case ErrorKind::Usage: return "Usage";
    }
    return "Unknown";
}

double orthonormality_error(const Mat3 &m) { return (m.transpose() * m - Mat3::Identity()).norm(); }

bool is_rotation(const Mat3 &m, double tol) {
    return m.allFinite() && orthonormality_error(m) < tol && std::abs(m.determinant() - 1.0) < tol;
}

RotationMatrix RotationMatrix::from_matrix(const Mat3 &m, double tol) {
    if (!is_rotation(m, tol))
        throw Error(ErrorKind::Validation, "matrix is not a proper rotation");
    return RotationMatrix(m);
}

Mat3 skew(const Vec3 &v) {
    Mat3 k;
    k << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return k;
}

namespace {

// Intermediate quantities of the column-wise Gram-Schmidt pass, kept for the
// backward sweep.
struct GramSchmidtTrace {
    Vec3 e1, e2, e3; // normalized columns before the determinant fix
    double n1 = 0.0, n2 = 0.0, n3 = 0.0;
    double sign = 1.0; // applied to e3
};

GramSchmidtTrace gram_schmidt_trace(const Mat3 &m) {
    if (!m.allFinite())
        throw Error(ErrorKind::DegenerateInput, "gram_schmidt: non-finite input");
    GramSchmidtTrace t;
    const Vec3 c1 = m.col(0), c2 = m.col(1), c3 = m.col(2);

    t.n1 = c1.norm();
    if (t.n1 < kGramSchmidtMinNorm)
        throw Error(ErrorKind::DegenerateInput, "gram_schmidt: first column vanishes");
    t.e1 = c1 / t.n1;

    const Vec3 u2 = c2 - t.e1.dot(c2) * t.e1;
    t.n2 = u2.norm();
    if (t.n2 < kGramSchmidtMinNorm)
        throw Error(ErrorKind::DegenerateInput, "gram_schmidt: second column is dependent");
    t.e2 = u2 / t.n2;

    const Vec3 u3 = c3 - t.e1.dot(c3) * t.e1 - t.e2.dot(c3) * t.e2;
    t.n3 = u3.norm();
    if (t.n3 < kGramSchmidtMinNorm)
        throw Error(ErrorKind::DegenerateInput, "gram_schmidt: third column is dependent");
    t.e3 = u3 / t.n3;

    t.sign = t.e1.cross(t.e2).dot(t.e3) < 0.0 ? -1.0 : 1.0;
    return t;
}

// Backward of e = u / |u|.
Vec3 normalize_backward(const Vec3 &e, double norm, const Vec3 &grad_e) {
    return (grad_e - e * e.dot(grad_e)) / norm;
}

} // namespace

RotationMatrix gram_schmidt(const LinearTransform &m) {
    const GramSchmidtTrace t = gram_schmidt_trace(m);
    Mat3 q;
    q.col(0) = t.e1;
    q.col(1) = t.e2;
    q.col(2) = t.sign * t.e3;
    return RotationMatrix::unchecked(q);
}

Mat3 gram_schmidt_backward(const LinearTransform &m, const Mat3 &upstream) {
    const GramSchmidtTrace t = gram_schmidt_trace(m);
    const Vec3 c2 = m.col(1), c3 = m.col(2);

    Vec3 g_e1 = upstream.col(0);
    Vec3 g_e2 = upstream.col(1);
    const Vec3 g_e3 = t.sign * upstream.col(2);
    Mat3 grad = Mat3::Zero();

    // u3 = c3 - (e1·c3) e1 - (e2·c3) e2
    const Vec3 g_u3 = normalize_backward(t.e3, t.n3, g_e3);
    grad.col(2) = g_u3 - t.e1 * t.e1.dot(g_u3) - t.e2 * t.e2.dot(g_u3);
    g_e1 -= t.e1.dot(c3) * g_u3 + c3 * t.e1.dot(g_u3);
    g_e2 -= t.e2.dot(c3) * g_u3 + c3 * t.e2.dot(g_u3);

    // u2 = c2 - (e1·c2) e1
    const Vec3 g_u2 = normalize_backward(t.e2, t.n2, g_e2);
    grad.col(1) = g_u2 - t.e1 * t.e1.dot(g_u2);
    g_e1 -= t.e1.dot(c2) * g_u2 + c2 * t.e1.dot(g_u2);

    grad.col(0) = normalize_backward(t.e1, t.n1, g_e1);
    return grad;
}

double rotation_angle(const Mat3 &r) {
    const Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    const double s = 0.5 * w.norm();
    const double c = 0.5 * (r.trace() - 1.0);
    return std::atan2(s, c);
}

AxisAngle to_axis_angle(const RotationMatrix &rot) {
    const Mat3 &r = rot.matrix();
    const Vec3 w = 0.5 * Vec3(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    const double s = w.norm();
    const double c = 0.5 * (r.trace() - 1.0);
    AxisAngle out;
    out.angle = std::atan2(s, c);
    if (out.angle < 1e-12)
        return out;

    if (c > 0.0) {
        out.axis = w / s;
        return out;
    }

    // Near π the antisymmetric part vanishes; recover the axis from the
    // symmetric part (R + Rᵀ)/2 = cos θ I + (1 − cos θ) a aᵀ instead.
    const Mat3 b = (0.5 * (r + r.transpose()) - c * Mat3::Identity()) / (1.0 - c);
    Eigen::Index k = 0;
    b.diagonal().maxCoeff(&k);
    Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
    axis.normalize();
    if (s > 1e-12) {
        if (axis.dot(w) < 0.0)
            axis = -axis;
    } else {
        for (int i = 0; i < 3; ++i) {
            if (std::abs(axis[i]) > 1e-12) {
                if (axis[i] < 0.0)
                    axis = -axis;
                break;
            }
        }
    }
    out.axis = axis;
    return out;
}

RotationMatrix from_axis_angle(const Vec3 &axis, double angle) {
    const double n = axis.norm();
    if (n < 1e-300 || angle == 0.0)
        return RotationMatrix::identity();
    const Mat3 k = skew(axis / n);
    const Mat3 r = Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
    return RotationMatrix::unchecked(r);
}

RotationMatrix from_axis_angle(const AxisAngle &a) { return from_axis_angle(a.axis, a.angle); }

double geodesic_deg(const RotationMatrix &r1, const RotationMatrix &r2) {
    return rotation_angle(r1.matrix().transpose() * r2.matrix()) * 180.0 / std::numbers::pi;
}

} // namespace skelpose
