#pragma once

/**
 * @file
 * @brief Wrench algebra about the object's center of mass: grasp maps,
 * friction cones and their inner pyramids, the inverse-dynamics target
 * wrench, the optimal contact-force solve and joint-space projection.
 */

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "qp.hpp"
#include "so3.hpp"

namespace contactsynth {

using Wrench = Vec6;

constexpr int kDefaultPyramidFacets = 8;

/// Coulomb friction cone around an inward contact axis.
struct FrictionCone {
  Vec3 axis = Vec3::UnitZ();
  double mu = 0.0;
  /// Direction whose tangential part fixes the pyramid's roll; zero or
  /// normal-aligned values fall back to a fixed helper axis.
  Vec3 reference = Vec3::Zero();

  /// Exact quadratic-cone membership, with absolute slack `tol`.
  bool contains(const Vec3& f, double tol = 0.0) const {
    const double fn = f.dot(axis);
    if (fn < -tol) return false;
    return (f - fn * axis).norm() <= mu * fn + tol;
  }

  /// Tangent basis (t1, t2) completing `axis` to a right-handed frame.
  std::pair<Vec3, Vec3> tangents() const {
    const Vec3 t = reference - reference.dot(axis) * axis;
    const Vec3 t1 = usable_reference(reference) ? Vec3(t.normalized()) : orthogonal_unit(axis);
    return {t1, axis.cross(t1)};
  }

  bool usable_reference(const Vec3& v) const {
    const double tn = (v - v.dot(axis) * axis).norm();
    return tn > 1e-12 && tn > 1e-6 * v.norm();
  }

  /// Rows C with C f >= 0 describing the inscribed K-facet pyramid: K facet
  /// rows plus a non-negative normal component. The pyramid's edges lie on
  /// the cone surface, so its facets sit at mu cos(pi/K) from the axis.
  Eigen::Matrix<double, Eigen::Dynamic, 3> pyramid_rows(int facets) const {
    Eigen::Matrix<double, Eigen::Dynamic, 3> c(facets + 1, 3);
    const auto [t1, t2] = tangents();
    const double inner = mu * std::cos(M_PI / facets);
    for (int k = 0; k < facets; ++k) {
      const double phi = 2.0 * M_PI * (k + 0.5) / facets;
      const Vec3 d = std::cos(phi) * t1 + std::sin(phi) * t2;
      c.row(k) = (inner * axis - d).transpose();
    }
    c.row(facets) = axis.transpose();
    return c;
  }
};

/// Linear map from a contact force at `point` to the wrench it applies
/// about the origin.
struct GraspMap {
  Eigen::Matrix<double, 6, 3> matrix;
  Vec3 point;
  FrictionCone cone;

  Wrench apply(const Vec3& f) const { return matrix * f; }
};

inline Eigen::Matrix<double, 6, 3> grasp_matrix(const Vec3& p) {
  Eigen::Matrix<double, 6, 3> g;
  g.topRows<3>().setIdentity();
  g.bottomRows<3>() = skew(p);
  return g;
}

/// Torques use `p` itself; the cone axis is the inward normal at the
/// surface projection of `p`, so off-surface fingertips are handled too.
inline GraspMap grasp_map(const Vec3& p, const OrientedPointCloud& cloud, double mu) {
  const auto sq = nearest_surface_point(cloud, p);
  return GraspMap{grasp_matrix(p), p, FrictionCone{-sq.outward_normal, mu}};
}

/// Copy of `maps` whose pyramids are rolled toward the contact centroid
/// (or the lever arm when that is normal-aligned), so the discretization
/// turns with the grasp.
inline std::vector<GraspMap> with_oriented_pyramids(std::span<const GraspMap> maps) {
  std::vector<GraspMap> out(maps.begin(), maps.end());
  Vec3 c = Vec3::Zero();
  for (const auto& g : maps) c += g.point;
  if (!maps.empty()) c /= static_cast<double>(maps.size());
  for (auto& g : out) {
    const Vec3 toward = c - g.point;
    g.cone.reference = g.cone.usable_reference(toward) ? toward : g.point;
  }
  return out;
}

inline std::vector<GraspMap> grasp_maps(std::span<const Vec3> points, const OrientedPointCloud& cloud, double mu) {
  std::vector<GraspMap> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(grasp_map(p, cloud, mu));
  return out;
}

/// Target wrench from a rigid motion, assuming the motion starts at rest
/// under a constant wrench over `dt`: w = normalize((2/dt^2)[dx/M; I^-1 dtheta]).
inline Wrench target_wrench(const Vec3& dx, const Vec3& dtheta, const MassProperties& mp, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  if (!(mp.mass > 0.0)) throw Error(ErrorKind::InvalidArgument, "mass must be positive");
  if (dx.isZero(0.0) && dtheta.isZero(0.0))
    throw Error(ErrorKind::ZeroMotion, "target motion is zero; wrench direction undefined");
  Wrench raw;
  const double k = 2.0 / (dt * dt);
  raw.head<3>() = k * dx / mp.mass;
  raw.tail<3>() = k * mp.inertia.ldlt().solve(dtheta);
  const double len = raw.norm();
  if (!(len > 0.0) || !std::isfinite(len))
    throw Error(ErrorKind::ZeroMotion, "target wrench has zero or non-finite norm");
  return raw / len;
}

struct ContactForceSet {
  std::vector<Vec3> forces;
  Eigen::VectorXd residual;  // 6-D for free objects, d-D in joint space

  double residual_norm() const { return residual.norm(); }
};

/// Sum of G_i f_i.
inline Wrench total_wrench(std::span<const GraspMap> maps, std::span<const Vec3> forces) {
  Wrench w = Wrench::Zero();
  for (std::size_t i = 0; i < maps.size(); ++i) w += maps[i].apply(forces[i]);
  return w;
}

/// Projection of object wrenches into a d-dimensional task space; identity
/// for free objects.
struct TaskProjection {
  Eigen::Matrix<double, Eigen::Dynamic, 6> matrix = Eigen::Matrix<double, 6, 6>::Identity();
  Eigen::VectorXd target = Wrench::Zero();

  static TaskProjection free_object(const Wrench& w) {
    TaskProjection t;
    t.target = w;
    return t;
  }
};

/// Minimizes ||P (sum G_i f_i) - t||^2 over forces inside each contact's
/// inner friction pyramid. Throws SolverFailure if the QP does not reach
/// its KKT tolerance within the iteration budget.
inline ContactForceSet optimal_contact_forces(std::span<const GraspMap> raw_maps, const TaskProjection& task,
                                              int facets = kDefaultPyramidFacets, const QpSettings& settings = {}) {
  if (raw_maps.empty()) throw Error(ErrorKind::InvalidArgument, "at least one contact is required");
  const std::vector<GraspMap> maps = with_oriented_pyramids(raw_maps);
  const auto m = static_cast<Eigen::Index>(maps.size());
  const Eigen::Index d = task.matrix.rows();
  Eigen::MatrixXd b(d, 3 * m);
  for (Eigen::Index i = 0; i < m; ++i) b.middleCols<3>(3 * i) = task.matrix * maps[i].matrix;

  QpProblem pb;
  pb.P = 2.0 * b.transpose() * b;
  pb.q = -2.0 * b.transpose() * task.target;
  const Eigen::Index rows_per = facets + 1;
  pb.A = Eigen::MatrixXd::Zero(rows_per * m, 3 * m);
  for (Eigen::Index i = 0; i < m; ++i)
    pb.A.block(rows_per * i, 3 * i, rows_per, 3) = maps[i].cone.pyramid_rows(facets);
  pb.l = Eigen::VectorXd::Zero(rows_per * m);
  pb.u = Eigen::VectorXd::Constant(rows_per * m, detail::kInf);

  const QpSolution sol = solve_qp(pb, settings);
  if (sol.status != QpStatus::Solved)
    throw Error(ErrorKind::SolverFailure, "contact-force QP did not converge in " + std::to_string(sol.iterations) +
                                              " iterations");
  ContactForceSet out;
  for (Eigen::Index i = 0; i < m; ++i) out.forces.push_back(sol.x.segment<3>(3 * i));
  out.residual = b * sol.x - task.target;
  return out;
}

inline ContactForceSet optimal_contact_forces(std::span<const GraspMap> maps, const Wrench& w,
                                              int facets = kDefaultPyramidFacets, const QpSettings& settings = {}) {
  return optimal_contact_forces(maps, TaskProjection::free_object(w), facets, settings);
}

/// One row of an articulated object's joint projection.
struct ArticulatedJoint {
  enum class Type { Revolute, Prismatic } type = Type::Revolute;
  Vec3 axis = Vec3::UnitZ();
  Vec3 origin = Vec3::Zero();
};

/// Rows map an object wrench to generalized joint forces: revolute rows are
/// [(o x a)', a'], prismatic rows [a', 0].
struct JointProjection {
  Eigen::Matrix<double, Eigen::Dynamic, 6> matrix;

  Eigen::VectorXd project(const Wrench& w) const { return matrix * w; }
};

inline JointProjection joint_projection(std::span<const ArticulatedJoint> joints) {
  JointProjection jp;
  jp.matrix.resize(static_cast<Eigen::Index>(joints.size()), 6);
  for (std::size_t r = 0; r < joints.size(); ++r) {
    const auto& j = joints[r];
    if (std::abs(j.axis.norm() - 1.0) > 1e-9)
      throw Error(ErrorKind::InvalidArgument, "joint axis must be a unit vector");
    if (j.type == ArticulatedJoint::Type::Revolute) {
      jp.matrix.row(r) << j.origin.cross(j.axis).transpose(), j.axis.transpose();
    } else {
      jp.matrix.row(r) << j.axis.transpose(), 0.0, 0.0, 0.0;
    }
  }
  return jp;
}

inline JointProjection joint_projection(const ArticulatedJoint& joint) {
  return joint_projection(std::span<const ArticulatedJoint>(&joint, 1));
}

constexpr double kClosureResidualTol = 1e-6;

/// True iff every unit wrench +-e_j is reachable with residual below 1e-6.
inline bool is_force_closure(std::span<const GraspMap> maps, int facets = kDefaultPyramidFacets,
                             const QpSettings& settings = {}) {
  if (maps.empty()) return false;
  for (int j = 0; j < 6; ++j) {
    for (double sign : {1.0, -1.0}) {
      Wrench w = Wrench::Zero();
      w[j] = sign;
      if (optimal_contact_forces(maps, w, facets, settings).residual_norm() >= kClosureResidualTol) return false;
    }
  }
  return true;
}

}  // namespace contactsynth
