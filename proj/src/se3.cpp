#include "trograph/se3.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "trograph/errors.hpp"

namespace tro::se3 {
namespace {

constexpr double kTaylorBelow = 1e-3;

// sin(x)/x
double coeff_a(double x) {
  if (x < kTaylorBelow) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0));
  }
  return std::sin(x) / x;
}

// (1 - cos x)/x^2
double coeff_b(double x) {
  if (x < kTaylorBelow) {
    const double x2 = x * x;
    return 0.5 - x2 / 24.0 + x2 * x2 / 720.0 - x2 * x2 * x2 / 40320.0;
  }
  const double s = std::sin(0.5 * x);
  return 2.0 * s * s / (x * x);
}

// (x - sin x)/x^3
double coeff_c(double x) {
  if (x < kTaylorBelow) {
    const double x2 = x * x;
    return 1.0 / 6.0 - x2 / 120.0 + x2 * x2 / 5040.0 - x2 * x2 * x2 / 362880.0;
  }
  return (x - std::sin(x)) / (x * x * x);
}

// 1/x^2 - (1 + cos x)/(2 x sin x)
double coeff_d(double x) {
  if (x < kTaylorBelow) {
    const double x2 = x * x;
    return 1.0 / 12.0 + x2 / 720.0 + x2 * x2 / 30240.0;
  }
  return 1.0 / (x * x) - (1.0 + std::cos(x)) / (2.0 * x * std::sin(x));
}

// (x^2 + 2 cos x - 2)/(2 x^4)
double coeff_e(double x) {
  if (x < 1e-2) {
    const double x2 = x * x;
    return 1.0 / 24.0 - x2 / 720.0 + x2 * x2 / 40320.0;
  }
  return (x * x + 2.0 * std::cos(x) - 2.0) / (2.0 * x * x * x * x);
}

// (2x - 3 sin x + x cos x)/(2 x^5)
double coeff_f(double x) {
  if (x < 1e-2) {
    const double x2 = x * x;
    return 1.0 / 120.0 - x2 / 2520.0 + x2 * x2 / 120960.0;
  }
  return (2.0 * x - 3.0 * std::sin(x) + x * std::cos(x)) / (2.0 * std::pow(x, 5));
}

// Q block of the SE(3) left Jacobian.
Matrix3 q_block(const Vector3& rho, const Vector3& theta) {
  const double phi = theta.norm();
  const Matrix3 rx = hat(rho);
  const Matrix3 px = hat(theta);
  const Matrix3 pxrx = px * rx;
  const Matrix3 rxpx = rx * px;
  const Matrix3 pxrxpx = pxrx * px;
  return 0.5 * rx + coeff_c(phi) * (pxrx + rxpx + pxrxpx) +
         coeff_e(phi) * (px * pxrx + rxpx * px - 3.0 * pxrxpx) +
         coeff_f(phi) * (pxrxpx * px + px * pxrxpx);
}

Vector3 axis_near_pi(const Matrix3& r, double cos_angle) {
  // R + R^T = 2 cos I + 2 (1 - cos) a a^T
  const Matrix3 aat = (0.5 * (r + r.transpose()) - cos_angle * Matrix3::Identity()) / (1.0 - cos_angle);
  Eigen::Index k = 0;
  aat.diagonal().maxCoeff(&k);
  Vector3 axis = aat.col(k) / std::sqrt(std::max(aat(k, k), 1e-300));
  return axis.normalized();
}

}  // namespace

Eigen::Matrix4d Transform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Matrix3 hat(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Vector3 vee(const Matrix3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Matrix3 exp_so3(const Vector3& theta) {
  const double phi = theta.norm();
  const Matrix3 k = hat(theta);
  return Matrix3::Identity() + coeff_a(phi) * k + coeff_b(phi) * k * k;
}

double rotation_angle(const Matrix3& r) {
  const double s = 0.5 * vee(r - r.transpose()).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

namespace {

Vector3 log_so3_impl(const Matrix3& r, bool refuse_singular) {
  const Vector3 w = 0.5 * vee(r - r.transpose());
  const double s = w.norm();
  const double c = 0.5 * (r.trace() - 1.0);
  const double angle = std::atan2(s, c);
  if (angle > std::numbers::pi - kSingularBand) {
    if (refuse_singular) {
      throw SingularityError("log_map: rotation angle within singular band of pi");
    }
    Vector3 axis = axis_near_pi(r, std::clamp(c, -1.0, 1.0));
    if (axis.dot(w) < 0.0) axis = -axis;
    return angle * axis;
  }
  if (c < -0.5) {
    // Axis from the symmetric part is better conditioned than sin(angle) here.
    Vector3 axis = axis_near_pi(r, c);
    if (axis.dot(w) < 0.0) axis = -axis;
    return angle * axis;
  }
  return w / coeff_a(angle);
}

}  // namespace

Vector3 log_so3(const Matrix3& r) { return log_so3_impl(r, false); }

Matrix3 left_jacobian_so3(const Vector3& theta) {
  const double phi = theta.norm();
  const Matrix3 k = hat(theta);
  return Matrix3::Identity() + coeff_b(phi) * k + coeff_c(phi) * k * k;
}

Matrix3 left_jacobian_inverse_so3(const Vector3& theta) {
  const double phi = theta.norm();
  const Matrix3 k = hat(theta);
  return Matrix3::Identity() - 0.5 * k + coeff_d(phi) * k * k;
}

Transform exp_map(const Pose6& psi) {
  if (!is_finite(psi)) throw InvalidArgument("exp_map: non-finite input");
  return {exp_so3(psi.theta), left_jacobian_so3(psi.theta) * psi.rho};
}

Pose6 log_map(const Transform& t) {
  const Vector3 theta = log_so3_impl(t.rotation, true);
  return {left_jacobian_inverse_so3(theta) * t.translation, theta};
}

Pose6 log_map_nearest(const Transform& t) {
  const Vector3 theta = log_so3_impl(t.rotation, false);
  // V is invertible for angles below 2 pi, so the translation stays exact.
  return {left_jacobian_so3(theta).partialPivLu().solve(t.translation), theta};
}

Transform compose(const Transform& a, const Transform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Transform inverse(const Transform& a) {
  const Matrix3 rt = a.rotation.transpose();
  return {rt, -rt * a.translation};
}

Matrix6 left_jacobian(const Pose6& psi) {
  Matrix6 j = Matrix6::Zero();
  const Matrix3 jl = left_jacobian_so3(psi.theta);
  j.topLeftCorner<3, 3>() = jl;
  j.bottomRightCorner<3, 3>() = jl;
  j.topRightCorner<3, 3>() = q_block(psi.rho, psi.theta);
  return j;
}

Matrix6 left_jacobian_inverse(const Pose6& psi) {
  Matrix6 j = Matrix6::Zero();
  const Matrix3 jinv = left_jacobian_inverse_so3(psi.theta);
  j.topLeftCorner<3, 3>() = jinv;
  j.bottomRightCorner<3, 3>() = jinv;
  j.topRightCorner<3, 3>() = -jinv * q_block(psi.rho, psi.theta) * jinv;
  return j;
}

Matrix6 adjoint(const Transform& t) {
  Matrix6 ad = Matrix6::Zero();
  ad.topLeftCorner<3, 3>() = t.rotation;
  ad.bottomRightCorner<3, 3>() = t.rotation;
  ad.topRightCorner<3, 3>() = hat(t.translation) * t.rotation;
  return ad;
}

double geodesic_so3(const Matrix3& r1, const Matrix3& r2) {
  const double c = 0.5 * ((r1 * r2.transpose()).trace() - 1.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Vector3 geodesic_so3_gradient(const Matrix3& reference, const Vector3& theta) {
  const Matrix3 m = reference.transpose() * exp_so3(theta);
  const Vector3 w = vee(m - m.transpose());
  const double n = w.norm();  // 2 sin(angle)
  if (n < 1e-12) return Vector3::Zero();
  return right_jacobian_so3(theta).transpose() * (w / n);
}

Matrix3 rpy_to_matrix(const Vector3& rpy) {
  const Eigen::AngleAxisd rx(rpy.x(), Vector3::UnitX());
  const Eigen::AngleAxisd ry(rpy.y(), Vector3::UnitY());
  const Eigen::AngleAxisd rz(rpy.z(), Vector3::UnitZ());
  return (rz * ry * rx).toRotationMatrix();
}

bool is_rotation(const Matrix3& r, double tol) {
  return (r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

bool is_finite(const Pose6& psi) { return psi.rho.allFinite() && psi.theta.allFinite(); }

}  // namespace tro::se3
