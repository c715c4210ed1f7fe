#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tro::se3 {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Width of the refusal band around a rotation angle of pi in log_map.
inline constexpr double kSingularBand = 1e-6;

/// Lie-algebra coordinates of an SE(3) element, stacked as [rho; theta].
/// Translation is recovered through the SO(3) left Jacobian: t = V(theta) rho.
struct Pose6 {
  Vector3 rho = Vector3::Zero();
  Vector3 theta = Vector3::Zero();

  static Pose6 from_vector(const Vector6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vector6 vector() const {
    Vector6 v;
    v << rho, theta;
    return v;
  }
};

/// Rigid transform (rotation, translation). Rotation is kept orthonormal with
/// det +1 by every operation in this namespace.
struct Transform {
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  static Transform identity() { return {}; }
  static Transform from_translation(const Vector3& t) { return {Matrix3::Identity(), t}; }
  Vector3 apply(const Vector3& p) const { return rotation * p + translation; }
  Eigen::Matrix4d matrix() const;
};

Matrix3 hat(const Vector3& v);
Vector3 vee(const Matrix3& m);

Matrix3 exp_so3(const Vector3& theta);
/// Rotation vector of R. Inside the singular band the axis is taken from the
/// symmetric part with its largest component made positive.
Vector3 log_so3(const Matrix3& r);
/// Rotation angle of R in [0, pi].
double rotation_angle(const Matrix3& r);

Matrix3 left_jacobian_so3(const Vector3& theta);
Matrix3 left_jacobian_inverse_so3(const Vector3& theta);
inline Matrix3 right_jacobian_so3(const Vector3& theta) { return left_jacobian_so3(-theta); }

Transform exp_map(const Pose6& psi);
/// Throws SingularityError when the rotation angle lies within kSingularBand of pi.
Pose6 log_map(const Transform& t);
/// Total variant of log_map used where a representative must always exist
/// (edge construction). Identical to log_map outside the singular band.
Pose6 log_map_nearest(const Transform& t);

Transform compose(const Transform& a, const Transform& b);
Transform inverse(const Transform& a);

/// 6x6 SE(3) left Jacobian: exp(psi + d) ~= exp(Jl d) exp(psi).
Matrix6 left_jacobian(const Pose6& psi);
Matrix6 left_jacobian_inverse(const Pose6& psi);
/// exp(psi + d) ~= exp(psi) exp(Jr d).
inline Matrix6 right_jacobian(const Pose6& psi) {
  return left_jacobian(Pose6{-psi.rho, -psi.theta});
}
inline Matrix6 right_jacobian_inverse(const Pose6& psi) {
  return left_jacobian_inverse(Pose6{-psi.rho, -psi.theta});
}
/// Adjoint acting on [v; w] twists: exp(Ad(T) xi) = T exp(xi) T^-1.
Matrix6 adjoint(const Transform& t);

/// arccos((tr(R1 R2^T) - 1) / 2) with the argument clamped to [-1, 1].
double geodesic_so3(const Matrix3& r1, const Matrix3& r2);
/// Gradient of geodesic_so3(reference, exp_so3(theta)) with respect to theta.
/// Zero when the two rotations coincide.
Vector3 geodesic_so3_gradient(const Matrix3& reference, const Vector3& theta);

/// URDF convention: R = Rz(yaw) * Ry(pitch) * Rx(roll).
Matrix3 rpy_to_matrix(const Vector3& rpy);

bool is_rotation(const Matrix3& r, double tol = 1e-9);
bool is_finite(const Pose6& psi);

}  // namespace tro::se3
