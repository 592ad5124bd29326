#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace skelpose {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

// An arbitrary 3x3 transform (regressed, blended, or otherwise not yet
// projected onto SO(3)).
using LinearTransform = Mat3;

// 3x3 proper rotation. Construction through `from_matrix` validates
// orthonormality and det = +1; `unchecked` is for values produced by code in
// this library that already guarantees it.
class RotationMatrix {
  public:
    RotationMatrix() : m_(Mat3::Identity()) {}

    static RotationMatrix identity() { return RotationMatrix(); }
    static RotationMatrix from_matrix(const Mat3 &m, double tol = 1e-9);
    static RotationMatrix unchecked(const Mat3 &m) { return RotationMatrix(m); }

    const Mat3 &matrix() const { return m_; }
    RotationMatrix transpose() const { return RotationMatrix(m_.transpose()); }

    RotationMatrix operator*(const RotationMatrix &o) const { return RotationMatrix(m_ * o.m_); }
    Vec3 operator*(const Vec3 &v) const { return m_ * v; }

  private:
    explicit RotationMatrix(const Mat3 &m) : m_(m) {}
    Mat3 m_;
};

bool is_rotation(const Mat3 &m, double tol = 1e-9);

// Frobenius norm of QᵀQ − I.
double orthonormality_error(const Mat3 &m);

struct AxisAngle {
    Vec3 axis{1.0, 0.0, 0.0};
    double angle = 0.0; // radians, [0, π]
};

// Gram-Schmidt over the columns c1, c2, c3 in order. When the input has a
// negative determinant the third column is negated so the result is a proper
// rotation. Throws DegenerateInput when an intermediate column norm falls
// below kGramSchmidtMinNorm.
RotationMatrix gram_schmidt(const LinearTransform &m);

// ∂L/∂M given ∂L/∂Q for Q = gram_schmidt(M).
Mat3 gram_schmidt_backward(const LinearTransform &m, const Mat3 &upstream);

inline constexpr double kGramSchmidtMinNorm = 1e-12;

AxisAngle to_axis_angle(const RotationMatrix &r);
RotationMatrix from_axis_angle(const AxisAngle &a);
RotationMatrix from_axis_angle(const Vec3 &axis, double angle);

// Angle of R1ᵀR2 in degrees, [0, 180].
double geodesic_deg(const RotationMatrix &r1, const RotationMatrix &r2);

// Angle of a rotation in radians, computed with atan2 so it stays accurate
// near 0 and π.
double rotation_angle(const Mat3 &r);

Mat3 skew(const Vec3 &v);

} // namespace skelpose
