#pragma once

/**
 * @file
 * @brief Iterative convex refinement of hand configuration and contact forces.
 *
 * Each iteration evaluates kinematics, the object SDF and the optimal contact
 * forces at the current configuration, linearizes the wrench residual, the
 * fingertip-surface distances and the collision constraints, and solves the
 * resulting QP inside a trust region. Friction cones use the inner pyramid.
 */

#include <Eigen/Dense>

#include <optional>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "kinematics.hpp"
#include "qp.hpp"
#include "wrench.hpp"

namespace contactsynth {

struct TrustRegion {
  double s_q = 0.05;  // rad or m per configuration component
  double s_f = 0.1;   // normalized force units per component
};

struct RefinementOptions {
  double mu = 0.5;
  int max_iters = 100;
  double residual_tol = 1e-6;
  double surface_tol = 0.005;
  double penetration_tol = 1e-4;
  TrustRegion trust;
  int facets = kDefaultPyramidFacets;
  double slack_weight = 1e3;
  /// Proximal weight on ||dq||^2 + ||df||^2 in each subproblem.
  double damping = 1e-5;
  QpSettings qp;
};

struct RefinementProblem {
  const HandModel& hand;
  const OrientedPointCloud& object;
  TaskProjection task;
  RefinementOptions options;
};

enum class RefinementStatus { Converged, IterationLimit, SolverFailure };

inline const char* to_string(RefinementStatus s) {
  switch (s) {
    case RefinementStatus::Converged: return "Converged";
    case RefinementStatus::IterationLimit: return "IterationLimit";
    case RefinementStatus::SolverFailure: return "SolverFailure";
  }
  return "Unknown";
}

struct IterationRecord {
  double residual_norm;
  double sum_phi_squared;
  double max_penetration;
};

struct RefinementResult {
  JointConfig q_star;
  ContactForceSet forces;
  RefinementStatus status = RefinementStatus::IterationLimit;
  int iterations = 0;  // subproblems solved
  std::vector<IterationRecord> history;
  std::optional<bool> force_closure;
  std::string message;
};

/// Everything the subproblem needs at one configuration.
struct IterateState {
  JointConfig q;
  std::vector<Vec3> tips;
  std::vector<PointJacobian> tip_jacobians;
  std::vector<SurfaceQuery> tip_surface;
  std::vector<GraspMap> maps;
  ContactForceSet forces;
  std::vector<Vec3> centers;
  std::vector<PointJacobian> center_jacobians;
  std::vector<SurfaceQuery> center_surface;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  double sum_phi_squared() const {
    double s = 0.0;
    for (const auto& t : tip_surface) s += t.signed_distance * t.signed_distance;
    return s;
  }

  double max_abs_phi() const {
    double s = 0.0;
    for (const auto& t : tip_surface) s = std::max(s, std::abs(t.signed_distance));
    return s;
  }
};

/// Geometric checks recomputed from a configuration alone.
struct GraspCheck {
  double residual_norm = 0.0;
  double max_surface_distance = 0.0;  // max_i |Phi(p_i)|
  double max_sphere_penetration = 0.0;  // max_k (eps_k - Phi(c_k)), floored at 0
  double max_pair_overlap = 0.0;        // max over non-adjacent pairs, floored at 0
  ContactForceSet forces;
};

inline double max_penetration(const HandModel& hand, const std::vector<Vec3>& centers,
                              const std::vector<SurfaceQuery>& surface,
                              const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                              double* pair_overlap = nullptr) {
  double pen = 0.0, overlap = 0.0;
  for (std::size_t k = 0; k < centers.size(); ++k)
    pen = std::max(pen, hand.spheres()[k].radius - surface[k].signed_distance);
  for (const auto& [a, b] : pairs) {
    const double need = hand.spheres()[a].radius + hand.spheres()[b].radius;
    overlap = std::max(overlap, need - (centers[a] - centers[b]).norm());
  }
  if (pair_overlap) *pair_overlap = overlap;
  return std::max(pen, overlap);
}

/// Surface distance and intersection values at `q` (forces left empty).
inline GraspCheck verify_grasp_geometry(const HandModel& hand, const OrientedPointCloud& object, const JointConfig& q) {
  const KinematicState ks(hand, q);
  GraspCheck c;
  for (const auto& p : ks.fingertips())
    c.max_surface_distance = std::max(c.max_surface_distance, std::abs(signed_distance(object, p)));
  for (std::size_t k = 0; k < hand.spheres().size(); ++k) {
    const double phi = signed_distance(object, ks.sphere_center(k));
    c.max_sphere_penetration = std::max(c.max_sphere_penetration, hand.spheres()[k].radius - phi);
  }
  for (const auto& [a, b] : hand.non_adjacent_sphere_pairs()) {
    const double need = hand.spheres()[a].radius + hand.spheres()[b].radius;
    c.max_pair_overlap = std::max(c.max_pair_overlap, need - (ks.sphere_center(a) - ks.sphere_center(b)).norm());
  }
  return c;
}

/// Fresh kinematics, SDF and force solve at `q`, independent of any solver state.
inline GraspCheck verify_grasp(const HandModel& hand, const OrientedPointCloud& object, const JointConfig& q,
                               const TaskProjection& task, double mu, int facets = kDefaultPyramidFacets,
                               const QpSettings& qp = {}) {
  GraspCheck c = verify_grasp_geometry(hand, object, q);
  const auto maps = grasp_maps(fingertip_positions(hand, q), object, mu);
  c.forces = optimal_contact_forces(maps, task, facets, qp);
  c.residual_norm = c.forces.residual_norm();
  return c;
}

inline IterateState evaluate_iterate(const RefinementProblem& pb, const JointConfig& q) {
  const KinematicState ks(pb.hand, q);
  IterateState s;
  s.q = q;
  for (std::size_t i = 0; i < pb.hand.num_fingertips(); ++i) {
    s.tips.push_back(ks.fingertip(i));
    s.tip_jacobians.push_back(ks.fingertip_jacobian(i));
    s.tip_surface.push_back(nearest_surface_point(pb.object, s.tips.back()));
    s.maps.push_back(GraspMap{grasp_matrix(s.tips.back()), s.tips.back(),
                              FrictionCone{-s.tip_surface.back().outward_normal, pb.options.mu}});
  }
  s.maps = with_oriented_pyramids(s.maps);
  s.forces = optimal_contact_forces(s.maps, pb.task, pb.options.facets, pb.options.qp);
  for (std::size_t k = 0; k < pb.hand.spheres().size(); ++k) {
    s.centers.push_back(ks.sphere_center(k));
    s.center_jacobians.push_back(ks.sphere_jacobian(k));
    s.center_surface.push_back(nearest_surface_point(pb.object, s.centers.back()));
  }
  s.pairs = pb.hand.non_adjacent_sphere_pairs();
  return s;
}

/// Linearized subproblem in x = [dq; df; slack].
struct ConvexSubproblem {
  QpProblem qp;
  double constant = 0.0;  // objective value of the squared terms at x = 0
  Eigen::Index n_q = 0;
  Eigen::Index n_f = 0;
  Eigen::Index n_slack = 0;

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(qp.P * x) + qp.q.dot(x) + constant;
  }
};

/// Jacobian of the task residual with respect to q at fixed forces:
/// d/dq P sum_i [f_i; p_i x f_i] = P sum_i [0; -[f_i]x J_i].
inline Eigen::MatrixXd residual_q_jacobian(const RefinementProblem& pb, const IterateState& s) {
  const auto nq = static_cast<Eigen::Index>(pb.hand.dof());
  Eigen::Matrix<double, 6, Eigen::Dynamic> dw = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, nq);
  for (std::size_t i = 0; i < s.tips.size(); ++i)
    dw.bottomRows<3>() -= skew(s.forces.forces[i]) * s.tip_jacobians[i];
  return pb.task.matrix * dw;
}

inline ConvexSubproblem build_subproblem(const RefinementProblem& pb, const IterateState& s, bool with_slack) {
  using detail::kInf;
  const auto& opt = pb.options;
  const auto nq = static_cast<Eigen::Index>(pb.hand.dof());
  const auto m = static_cast<Eigen::Index>(s.tips.size());
  const Eigen::Index nf = 3 * m;
  const auto n_sph = static_cast<Eigen::Index>(s.centers.size());
  const auto n_pair = static_cast<Eigen::Index>(s.pairs.size());
  const Eigen::Index ns = with_slack ? n_sph + n_pair : 0;
  const Eigen::Index n = nq + nf + ns;

  ConvexSubproblem sp;
  sp.n_q = nq;
  sp.n_f = nf;
  sp.n_slack = ns;

  // Residual term ||r + Bq dq + Bf df||^2.
  const Eigen::Index d = pb.task.matrix.rows();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, n);
  b.leftCols(nq) = residual_q_jacobian(pb, s);
  for (Eigen::Index i = 0; i < m; ++i) b.block(0, nq + 3 * i, d, 3) = pb.task.matrix * s.maps[i].matrix;
  const Eigen::VectorXd& r = s.forces.residual;

  // Surface term sum_i (Phi_i + g_i' dq)^2.
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, n);
  Eigen::VectorXd phi(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    g.block(i, 0, 1, nq) = s.tip_surface[i].outward_normal.transpose() * s.tip_jacobians[i];
    phi[i] = s.tip_surface[i].signed_distance;
  }
  sp.qp.P = 2.0 * (b.transpose() * b + g.transpose() * g);
  sp.qp.P.diagonal().head(nq + nf).array() += 2.0 * opt.damping;
  sp.qp.q = 2.0 * (b.transpose() * r + g.transpose() * phi);
  if (ns) sp.qp.q.tail(ns).setConstant(opt.slack_weight);
  sp.constant = r.squaredNorm() + phi.squaredNorm();

  const Eigen::Index rows_per = opt.facets + 1;
  const Eigen::Index rows = rows_per * m + nq + nf + n_sph + n_pair + ns;
  sp.qp.A = Eigen::MatrixXd::Zero(rows, n);
  sp.qp.l.resize(rows);
  sp.qp.u.resize(rows);
  Eigen::Index row = 0;

  // Friction pyramids on f + df.
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto c = s.maps[i].cone.pyramid_rows(opt.facets);
    sp.qp.A.block(row, nq + 3 * i, rows_per, 3) = c;
    sp.qp.l.segment(row, rows_per) = -(c * s.forces.forces[i]);
    sp.qp.u.segment(row, rows_per).setConstant(kInf);
    row += rows_per;
  }
  // Joint limits intersected with the trust region on dq.
  const Eigen::VectorXd q = s.q.stacked();
  const Eigen::VectorXd lo = pb.hand.lower_limits(), hi = pb.hand.upper_limits();
  for (Eigen::Index k = 0; k < nq; ++k, ++row) {
    sp.qp.A(row, k) = 1.0;
    sp.qp.l[row] = std::max(lo[k] - q[k], -opt.trust.s_q);
    sp.qp.u[row] = std::min(hi[k] - q[k], opt.trust.s_q);
    if (sp.qp.l[row] > sp.qp.u[row]) sp.qp.l[row] = sp.qp.u[row] = std::clamp(0.0, sp.qp.l[row], sp.qp.u[row]);
  }
  for (Eigen::Index k = 0; k < nf; ++k, ++row) {
    sp.qp.A(row, nq + k) = 1.0;
    sp.qp.l[row] = -opt.trust.s_f;
    sp.qp.u[row] = opt.trust.s_f;
  }
  // Hand-object non-penetration: Phi(c_k) + n_k' J_k dq >= eps_k.
  for (Eigen::Index k = 0; k < n_sph; ++k, ++row) {
    sp.qp.A.block(row, 0, 1, nq) = s.center_surface[k].outward_normal.transpose() * s.center_jacobians[k];
    if (ns) sp.qp.A(row, nq + nf + k) = 1.0;
    sp.qp.l[row] = pb.hand.spheres()[k].radius - s.center_surface[k].signed_distance;
    sp.qp.u[row] = kInf;
  }
  // Self-collision, linearized along the current separation direction.
  for (Eigen::Index k = 0; k < n_pair; ++k, ++row) {
    const auto [a, bb] = s.pairs[k];
    const Vec3 diff = s.centers[a] - s.centers[bb];
    const double dist = diff.norm();
    const Vec3 dir = dist > 1e-12 ? Vec3(diff / dist) : Vec3::UnitX();
    sp.qp.A.block(row, 0, 1, nq) = dir.transpose() * (s.center_jacobians[a] - s.center_jacobians[bb]);
    if (ns) sp.qp.A(row, nq + nf + n_sph + k) = 1.0;
    sp.qp.l[row] = pb.hand.spheres()[a].radius + pb.hand.spheres()[bb].radius - dist;
    sp.qp.u[row] = kInf;
  }
  for (Eigen::Index k = 0; k < ns; ++k, ++row) {
    sp.qp.A(row, nq + nf + k) = 1.0;
    sp.qp.l[row] = 0.0;
    sp.qp.u[row] = kInf;
  }
  return sp;
}

/// Runs the refinement loop for any task projection (free object wrench,
/// zero wrench for force closure, or articulated joint torques).
inline RefinementResult refine_grasp(const RefinementProblem& pb, const JointConfig& q0) {
  const auto& opt = pb.options;
  RefinementResult res;
  JointConfig q = pb.hand.clamp(q0);
  const Eigen::VectorXd lo = pb.hand.lower_limits(), hi = pb.hand.upper_limits();
  res.q_star = q;
  for (int it = 0;; ++it) {
    IterateState s;
    try {
      s = evaluate_iterate(pb, q);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SolverFailure) throw;
      res.status = RefinementStatus::SolverFailure;
      res.message = e.what();
      break;
    }
    const double pen = max_penetration(pb.hand, s.centers, s.center_surface, s.pairs);
    res.history.push_back({s.forces.residual_norm(), s.sum_phi_squared(), std::max(0.0, pen)});
    res.q_star = q;
    res.forces = s.forces;
    res.iterations = it;
    if (s.forces.residual_norm() < opt.residual_tol && s.max_abs_phi() < opt.surface_tol &&
        pen <= opt.penetration_tol) {
      res.status = RefinementStatus::Converged;
      break;
    }
    if (it >= opt.max_iters) {
      res.status = RefinementStatus::IterationLimit;
      break;
    }

    ConvexSubproblem sp = build_subproblem(pb, s, false);
    QpSolution sol = solve_qp(sp.qp, opt.qp);
    if (sol.status == QpStatus::PrimalInfeasible) {
      sp = build_subproblem(pb, s, true);
      sol = solve_qp(sp.qp, opt.qp);
    }
    if (sol.status != QpStatus::Solved) {
      res.status = RefinementStatus::SolverFailure;
      res.message = "subproblem QP failed at iteration " + std::to_string(it);
      break;
    }
    Eigen::VectorXd qv = q.stacked() + sol.x.head(sp.n_q);
    qv = qv.cwiseMax(lo).cwiseMin(hi);
    q = pb.hand.clamp(JointConfig::from_stacked(qv));
  }
  return res;
}

inline RefinementResult refine_articulated(const HandModel& hand, const OrientedPointCloud& object,
                                           const JointProjection& projection, const Eigen::VectorXd& torque,
                                           const RefinementOptions& options, const JointConfig& q0) {
  if (torque.size() != projection.matrix.rows())
    throw Error(ErrorKind::InvalidArgument, "torque dimension does not match the joint projection");
  TaskProjection task;
  task.matrix = projection.matrix;
  task.target = torque;
  return refine_grasp(RefinementProblem{hand, object, task, options}, q0);
}

/// Refinement toward the zero wrench; success additionally requires the
/// final contacts to pass the 12-wrench closure test.
inline RefinementResult force_closure_refine(const HandModel& hand, const OrientedPointCloud& object,
                                             const RefinementOptions& options, const JointConfig& q0) {
  RefinementResult res =
      refine_grasp(RefinementProblem{hand, object, TaskProjection::free_object(Wrench::Zero()), options}, q0);
  if (res.status == RefinementStatus::SolverFailure) return res;
  const auto tips = fingertip_positions(hand, res.q_star);
  const auto maps = grasp_maps(tips, object, options.mu);
  res.force_closure = is_force_closure(maps, options.facets, options.qp);
  return res;
}

}  // namespace contactsynth
