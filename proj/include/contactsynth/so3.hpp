#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

#include "rng.hpp"

namespace contactsynth {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Isometry = Eigen::Isometry3d;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Rotation matrix of a rotation vector (axis times angle).
inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

/// Rotation vector with angle in [0, pi].
inline Vec3 so3_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  if (angle > M_PI) {
    angle = 2.0 * M_PI - angle;
    axis = -axis;
  }
  return axis * angle;
}

/// Maps a rotation vector onto the chart with magnitude <= pi.
inline Vec3 canonical_rotation(const Vec3& w) {
  const double theta = w.norm();
  if (theta <= M_PI) return w;
  return so3_log(so3_exp(w));
}

/// Right Jacobian of SO(3): exp(w + dw) ~= exp(w) exp(J_r(w) dw).
inline Mat3 so3_right_jacobian(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  if (theta < 1e-6) return Mat3::Identity() - 0.5 * k + k * k / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * k +
         (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

/// Geodesic angle between two rotations.
inline double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

/// Pose as a 6-vector: translation then rotation vector.
inline Isometry pose_from_vector(const Vec6& v) {
  Isometry t = Isometry::Identity();
  t.linear() = so3_exp(v.tail<3>());
  t.translation() = v.head<3>();
  return t;
}

inline Vec6 pose_to_vector(const Isometry& t) {
  Vec6 v;
  v.head<3>() = t.translation();
  v.tail<3>() = so3_log(t.linear());
  return v;
}

/// Uniformly distributed unit vector.
inline Vec3 random_unit_vector(Rng& rng) {
  Vec3 v(standard_normal(rng), standard_normal(rng), standard_normal(rng));
  while (v.norm() < 1e-12) v = Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng));
  return v.normalized();
}

/// Haar-uniform random rotation.
inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(standard_normal(rng), standard_normal(rng), standard_normal(rng),
                       standard_normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

/// Any unit vector orthogonal to `n`, chosen deterministically.
inline Vec3 orthogonal_unit(const Vec3& n) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return n.cross(helper).normalized();
}

/// Rotation taking unit vector `from` onto unit vector `to` by the shortest arc.
inline Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  const Vec3 a = from.normalized(), b = to.normalized();
  const double c = a.dot(b);
  if (c < -1.0 + 1e-12) return Eigen::AngleAxisd(M_PI, orthogonal_unit(a)).toRotationMatrix();
  return Eigen::Quaterniond::FromTwoVectors(a, b).toRotationMatrix();
}

}  // namespace contactsynth
