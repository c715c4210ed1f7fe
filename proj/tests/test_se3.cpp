#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "trograph/errors.hpp"
#include "trograph/rng.hpp"
#include "trograph/se3.hpp"

using namespace tro;
using namespace tro::se3;

namespace {

constexpr double kPi = std::numbers::pi;

Vector3 random_vec(Rng& rng, double scale) {
  return {rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
}

Pose6 random_pose(Rng& rng, double max_angle) {
  Vector3 axis = random_vec(rng, 1.0).normalized();
  return {random_vec(rng, 2.0), axis * rng.uniform(0.0, max_angle)};
}

Transform random_transform(Rng& rng) { return exp_map(random_pose(rng, 3.0)); }

// Oracle for V(theta) = int_0^1 exp(s [theta]x) ds, composite Simpson.
Matrix3 v_by_quadrature(const Vector3& theta) {
  const int n = 2000;
  Matrix3 acc = Matrix3::Zero();
  for (int i = 0; i <= n; ++i) {
    const double s = static_cast<double>(i) / n;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * Eigen::AngleAxisd(s * theta.norm(), theta.normalized()).toRotationMatrix();
  }
  return acc / (3.0 * n);
}

}  // namespace

TEST_CASE("exp_map of zero is identity") {
  const Transform t = exp_map(Pose6{});
  CHECK(t.rotation.isApprox(Matrix3::Identity(), 0.0));
  CHECK(t.translation.norm() == 0.0);
}

TEST_CASE("exp_map quarter turn about z matches Rodrigues") {
  const Transform t = exp_map(Pose6{Vector3::Zero(), Vector3(0, 0, kPi / 2)});
  Matrix3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((t.rotation - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(t.translation.norm() == 0.0);
}

TEST_CASE("exp_map pure translation") {
  const Transform t = exp_map(Pose6{Vector3(1, 2, 3), Vector3::Zero()});
  CHECK(t.rotation == Matrix3::Identity());
  CHECK(t.translation == Vector3(1, 2, 3));
}

TEST_CASE("exp_map rejects non-finite input") {
  CHECK_THROWS_AS(exp_map(Pose6{Vector3(NAN, 0, 0), Vector3::Zero()}), InvalidArgument);
}

TEST_CASE("exp_map translation equals quadrature of the rotation path") {
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Pose6 p = random_pose(rng, 3.0);
    const Transform t = exp_map(p);
    const Vector3 oracle = v_by_quadrature(p.theta) * p.rho;
    CHECK((t.translation - oracle).norm() < 1e-10);
    const Matrix3 rod = Eigen::AngleAxisd(p.theta.norm(), p.theta.normalized()).toRotationMatrix();
    CHECK((t.rotation - rod).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("log_map inverts exp_map") {
  CHECK(log_map(Transform::identity()).vector().norm() == 0.0);
  Rng rng(11);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Pose6 p = random_pose(rng, 3.0);
    worst = std::max(worst, (log_map(exp_map(p)).vector() - p.vector()).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("log_map small angles stay accurate") {
  for (double a : {1e-12, 1e-9, 1e-7, 1e-5, 1e-3, 2e-3}) {
    const Pose6 p{Vector3(0.3, -0.2, 0.1), Vector3(a, -0.5 * a, 0.25 * a)};
    CHECK((log_map(exp_map(p)).vector() - p.vector()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("log_map refuses the singular band near pi") {
  const Transform t{Eigen::AngleAxisd(kPi - 1e-12, Vector3::UnitZ()).toRotationMatrix(),
                    Vector3(0.1, 0, 0)};
  CHECK_THROWS_AS(log_map(t), SingularityError);
  // the total variant still yields an exact representative
  const Pose6 p = log_map_nearest(t);
  const Transform back = exp_map(p);
  CHECK((back.rotation - t.rotation).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((back.translation - t.translation).norm() < 1e-9);
}

TEST_CASE("compose and inverse") {
  Rng rng(5);
  const Transform a = random_transform(rng);
  const Transform id = Transform::identity();
  const Transform ca = compose(id, a);
  CHECK(ca.rotation == a.rotation);
  CHECK(ca.translation == a.translation);
  CHECK(inverse(id).rotation == Matrix3::Identity());
  CHECK(inverse(id).translation.norm() == 0.0);
  for (int k = 0; k < 200; ++k) {
    const Transform x = random_transform(rng);
    const Transform r = compose(x, inverse(x));
    CHECK((r.rotation - Matrix3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.translation.norm() < 1e-12);
  }
}

TEST_CASE("compose is associative") {
  Rng rng(8);
  for (int k = 0; k < 200; ++k) {
    const Transform a = random_transform(rng), b = random_transform(rng), c = random_transform(rng);
    const Transform l = compose(compose(a, b), c);
    const Transform r = compose(a, compose(b, c));
    CHECK((l.rotation - r.rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((l.translation - r.translation).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("geodesic_so3 examples") {
  const Matrix3 rz90 = exp_so3(Vector3(0, 0, kPi / 2));
  const Matrix3 rz180 = Eigen::AngleAxisd(kPi, Vector3::UnitZ()).toRotationMatrix();
  CHECK(geodesic_so3(rz90, rz90) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(geodesic_so3(Matrix3::Identity(), rz90) == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(geodesic_so3(Matrix3::Identity(), rz180) == doctest::Approx(kPi).epsilon(1e-12));
}

TEST_CASE("geodesic_so3 is a metric on sampled triples") {
  Rng rng(21);
  for (int k = 0; k < 500; ++k) {
    const Matrix3 a = random_transform(rng).rotation;
    const Matrix3 b = random_transform(rng).rotation;
    const Matrix3 c = random_transform(rng).rotation;
    const double ab = geodesic_so3(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab <= kPi);
    CHECK(std::abs(ab - geodesic_so3(b, a)) < 1e-9);
    CHECK(ab <= geodesic_so3(a, c) + geodesic_so3(c, b) + 1e-9);
  }
}

TEST_CASE("geodesic gradient matches central differences") {
  Rng rng(4);
  const double h = 1e-6;
  int checked = 0;
  while (checked < 100) {
    const Matrix3 ref = random_transform(rng).rotation;
    const Vector3 theta = random_pose(rng, 2.5).theta;
    const double angle = geodesic_so3(ref, exp_so3(theta));
    if (angle < 0.1 || angle > kPi - 0.1) continue;
    const Vector3 g = geodesic_so3_gradient(ref, theta);
    Vector3 fd;
    for (int i = 0; i < 3; ++i) {
      Vector3 tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      fd[i] = (geodesic_so3(ref, exp_so3(tp)) - geodesic_so3(ref, exp_so3(tm))) / (2 * h);
    }
    CHECK((g - fd).norm() / fd.norm() < 1e-5);
    ++checked;
  }
  const Vector3 theta(0.2, -0.4, 0.9);
  CHECK(geodesic_so3_gradient(exp_so3(theta), theta).norm() == 0.0);
}

TEST_CASE("SE(3) Jacobians match finite differences") {
  Rng rng(17);
  const double h = 1e-6;
  for (int k = 0; k < 50; ++k) {
    const Pose6 p = random_pose(rng, 2.8);
    const Transform base = exp_map(p);
    const Matrix6 jl = left_jacobian(p);
    const Matrix6 jr = right_jacobian(p);
    Matrix6 fd_l, fd_r;
    for (int i = 0; i < 6; ++i) {
      Vector6 d = Vector6::Zero();
      d[i] = h;
      const Transform tp = exp_map(Pose6::from_vector(p.vector() + d));
      const Transform tm = exp_map(Pose6::from_vector(p.vector() - d));
      fd_l.col(i) = (log_map(compose(tp, inverse(base))).vector() -
                     log_map(compose(tm, inverse(base))).vector()) / (2 * h);
      fd_r.col(i) = (log_map(compose(inverse(base), tp)).vector() -
                     log_map(compose(inverse(base), tm)).vector()) / (2 * h);
    }
    CHECK((jl - fd_l).norm() / jl.norm() < 1e-7);
    CHECK((jr - fd_r).norm() / jr.norm() < 1e-7);
    CHECK((left_jacobian_inverse(p) * jl - Matrix6::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  }
  // tiny angles exercise the series branches
  const Pose6 small{Vector3(0.4, 0.1, -0.3), Vector3(3e-3, -2e-3, 1e-3)};
  CHECK((left_jacobian_inverse(small) * left_jacobian(small) - Matrix6::Identity())
            .cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adjoint conjugates twists") {
  Rng rng(2);
  const Transform t = random_transform(rng);
  const Pose6 xi = random_pose(rng, 1.0);
  const Transform lhs = exp_map(Pose6::from_vector(adjoint(t) * xi.vector()));
  const Transform rhs = compose(compose(t, exp_map(xi)), inverse(t));
  CHECK((lhs.rotation - rhs.rotation).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((lhs.translation - rhs.translation).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rpy uses the fixed-axis Z*Y*X composition") {
  const Vector3 rpy(0.3, -0.2, 1.1);
  const Matrix3 expected = exp_so3(Vector3(0, 0, 1.1)) * exp_so3(Vector3(0, -0.2, 0)) *
                           exp_so3(Vector3(0.3, 0, 0));
  CHECK((rpy_to_matrix(rpy) - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(is_rotation(rpy_to_matrix(rpy)));
}
