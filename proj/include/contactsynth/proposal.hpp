#pragma once

/**
 * @file
 * @brief Contact selection from per-point heatmaps, palm-pose initialization
 * by fingertip/contact matching, and the direct-grasp baseline.
 */

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "kinematics.hpp"
#include "wrench.hpp"

namespace contactsynth {

struct ContactHeatmap {
  std::vector<double> scores;
};

struct ForceMap {
  std::vector<Vec3> vectors;
};

struct RegionMask {
  std::vector<bool> allowed;

  static RegionMask all(std::size_t n) { return RegionMask{std::vector<bool>(n, true)}; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(allowed.begin(), allowed.end(), true)); }
};

struct ContactSolution {
  std::vector<std::size_t> indices;
  std::vector<Vec3> points;
  std::vector<Vec3> forces;  // zero when no force map was supplied
};

struct ProposalParams {
  double heatmap_sigma = 0.01;
  double iou_threshold = 0.5;
  double nms_radius = 0.03;
};

/// Clamps scores into [0, 1]; NaN becomes 0.
inline ContactHeatmap clamped(ContactHeatmap h) {
  for (double& s : h.scores) s = std::isnan(s) ? 0.0 : std::clamp(s, 0.0, 1.0);
  return h;
}

/// Greedy non-maximum suppression. Candidates are visited by descending
/// score, ties by ascending index; masked-out points are never chosen.
inline std::vector<std::size_t> select_contacts_nms(const OrientedPointCloud& cloud, const ContactHeatmap& heatmap,
                                                    const RegionMask& mask, std::size_t count, double radius) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "at least one contact must be requested");
  if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "NMS radius must be positive");
  if (heatmap.scores.size() != cloud.size() || mask.allowed.size() != cloud.size())
    throw Error(ErrorKind::InvalidArgument, "heatmap and mask must have one entry per point");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (mask.allowed[i]) order.push_back(i);
  if (order.empty()) throw Error(ErrorKind::EmptySelection, "region mask allows no points");
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return heatmap.scores[a] > heatmap.scores[b]; });
  std::vector<std::size_t> chosen;
  std::vector<bool> suppressed(cloud.size(), false);
  const double r2 = radius * radius;
  for (std::size_t i : order) {
    if (suppressed[i]) continue;
    chosen.push_back(i);
    if (chosen.size() == count) break;
    for (std::size_t j : order)
      if ((cloud.point(j) - cloud.point(i)).squaredNorm() < r2) suppressed[j] = true;
  }
  return chosen;
}

inline ContactSolution make_contact_solution(const OrientedPointCloud& cloud, std::vector<std::size_t> indices,
                                             const ForceMap* forces = nullptr) {
  ContactSolution c;
  for (auto i : indices) {
    c.points.push_back(cloud.point(i));
    c.forces.push_back(forces ? forces->vectors.at(i) : Vec3::Zero());
  }
  c.indices = std::move(indices);
  return c;
}

/// Least-squares rigid transform T (proper rotation) with T * src ~ dst.
inline Isometry kabsch_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) throw Error(ErrorKind::InvalidArgument, "point sets differ in size");
  if (src.size() < 3) throw Error(ErrorKind::DegenerateGeometry, "rigid fit needs at least three points");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) cs += src[i], cd += dst[i];
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero();
  Eigen::MatrixXd spread_s(3, src.size()), spread_d(3, dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    h += (src[i] - cs) * (dst[i] - cd).transpose();
    spread_s.col(static_cast<Eigen::Index>(i)) = src[i] - cs;
    spread_d.col(static_cast<Eigen::Index>(i)) = dst[i] - cd;
  }
  for (const auto* m : {&spread_s, &spread_d}) {
    const Eigen::JacobiSVD<Eigen::MatrixXd> sv(*m);
    const auto& s = sv.singularValues();
    if (!(s[0] > 0.0) || s[1] <= 1e-9 * s[0])
      throw Error(ErrorKind::DegenerateGeometry, "points are collinear; rotation is not determined");
  }
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  Isometry t = Isometry::Identity();
  t.linear() = svd.matrixV() * d * svd.matrixU().transpose();
  t.translation() = cd - t.linear() * cs;
  return t;
}

/// score_i = exp(-d_i^2 / (2 sigma^2)), d_i the distance to the nearest fingertip.
inline ContactHeatmap contact_heatmap_from_pose(const OrientedPointCloud& cloud, const std::vector<Vec3>& tips,
                                                double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "heatmap sigma must be positive");
  ContactHeatmap h;
  h.scores.resize(cloud.size(), 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : tips) best = std::min(best, (cloud.point(i) - p).squaredNorm());
    h.scores[i] = tips.empty() ? 0.0 : std::exp(-best / (2.0 * sigma * sigma));
  }
  return h;
}

inline double heatmap_iou(const ContactHeatmap& a, const ContactHeatmap& b, double threshold) {
  if (a.scores.size() != b.scores.size()) throw Error(ErrorKind::InvalidArgument, "heatmaps differ in length");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    const bool x = a.scores[i] >= threshold, y = b.scores[i] >= threshold;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct PalmInit {
  JointConfig q0;
  double iou = 0.0;
  std::vector<std::size_t> assignment;  // fingertip for each contact
  std::size_t candidates = 0;
  bool fallback = false;
};

namespace detail {

/// Calls fn(assignment) for every injective map from k contacts to m fingertips.
template <class Fn>
void for_each_assignment(std::size_t k, std::size_t m, Fn&& fn) {
  std::vector<std::size_t> cur;
  std::vector<bool> used(m, false);
  auto rec = [&](auto&& self) -> void {
    if (cur.size() == k) {
      fn(cur);
      return;
    }
    for (std::size_t f = 0; f < m; ++f) {
      if (used[f]) continue;
      used[f] = true;
      cur.push_back(f);
      self(self);
      cur.pop_back();
      used[f] = false;
    }
  };
  rec(rec);
}

/// Rotation taking the palm approach axis (+z) to `approach` and, when
/// `pair_from` is non-zero, its projection onto the palm plane toward `pair_to`.
inline Mat3 approach_rotation(const Vec3& approach, const Vec3& pair_from, const Vec3& pair_to) {
  Mat3 r = rotation_between(Vec3::UnitZ(), approach);
  if (pair_from.squaredNorm() > 0.0) {
    Vec3 a = r * pair_from;
    a -= a.dot(approach) * approach;
    Vec3 b = pair_to - pair_to.dot(approach) * approach;
    if (a.norm() > 1e-12 && b.norm() > 1e-12) {
      a.normalize();
      b.normalize();
      const double ang = std::atan2(a.cross(b).dot(approach), a.dot(b));
      r = so3_exp(approach * ang) * r;
    }
  }
  return r;
}

}  // namespace detail

/// Matches contacts to rest-pose fingertips by exhaustive assignment, fits
/// each match rigidly and keeps the pose whose fingertip heatmap best agrees
/// with `predicted`. Fewer than three contacts use a centroid/normal fit.
inline PalmInit init_palm_pose(const HandModel& hand, const OrientedPointCloud& cloud,
                               const ContactSolution& contacts, const ContactHeatmap& predicted,
                               const ProposalParams& params = {}) {
  const std::size_t m = hand.num_fingertips(), k = contacts.points.size();
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "no contacts to match");
  if (k > m) throw Error(ErrorKind::InvalidArgument, "more contacts than fingertips");
  if (m > 5) throw Error(ErrorKind::InvalidArgument, "assignment search supports at most five fingertips");

  JointConfig rest = hand.rest_pose();
  rest.base_pose.setZero();
  const std::vector<Vec3> rest_tips = fingertip_positions(hand, rest);
  Vec3 mean_normal = Vec3::Zero(), contact_centroid = Vec3::Zero();
  for (std::size_t i = 0; i < k; ++i) {
    mean_normal += cloud.normal(contacts.indices.at(i));
    contact_centroid += contacts.points[i];
  }
  contact_centroid /= static_cast<double>(k);

  PalmInit best;
  best.iou = -1.0;
  auto consider = [&](const Isometry& t, const std::vector<std::size_t>& assign, bool fallback) {
    std::vector<Vec3> tips;
    for (const auto& p : rest_tips) tips.push_back(t * p);
    const double iou = heatmap_iou(contact_heatmap_from_pose(cloud, tips, params.heatmap_sigma), predicted,
                                   params.iou_threshold);
    ++best.candidates;
    if (iou > best.iou) {
      best.iou = iou;
      best.assignment = assign;
      best.fallback = fallback;
      best.q0 = rest;
      best.q0.set_base_transform(t);
    }
  };

  bool rigid = k >= 3;
  if (rigid) {
    std::size_t fitted = 0;
    detail::for_each_assignment(k, m, [&](const std::vector<std::size_t>& a) {
      std::vector<Vec3> src;
      for (auto f : a) src.push_back(rest_tips[f]);
      try {
        consider(kabsch_align(src, contacts.points), a, false);
        ++fitted;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateGeometry) throw;
      }
    });
    rigid = fitted > 0;
  }
  if (!rigid) {
    Vec3 pair = k >= 2 ? Vec3(contacts.points[1] - contacts.points[0]) : Vec3::Zero();
    Vec3 approach;
    if (mean_normal.norm() > 1e-6 * static_cast<double>(k)) {
      approach = -mean_normal.normalized();
    } else {
      // Opposed normals: approach perpendicular to the contact pair, toward the object.
      const Vec3 axis = pair.norm() > 1e-12 ? Vec3(pair.normalized()) : Vec3::UnitX();
      Vec3 toward = cloud.centroid() - contact_centroid;
      toward -= toward.dot(axis) * axis;
      approach = toward.norm() > 1e-9 ? Vec3(toward.normalized()) : orthogonal_unit(axis);
    }
    detail::for_each_assignment(k, m, [&](const std::vector<std::size_t>& a) {
      Vec3 tip_centroid = Vec3::Zero();
      for (auto f : a) tip_centroid += rest_tips[f];
      tip_centroid /= static_cast<double>(k);
      const Vec3 tip_pair = k >= 2 ? Vec3(rest_tips[a[1]] - rest_tips[a[0]]) : Vec3::Zero();
      Isometry t = Isometry::Identity();
      t.linear() = detail::approach_rotation(approach, tip_pair, pair);
      t.translation() = contact_centroid - t.linear() * tip_centroid;
      consider(t, a, true);
    });
  }
  return best;
}

struct BaselineResult {
  JointConfig q;
  ContactForceSet forces;
  double travel = 0.0;  // base translation before first contact, meters
};

struct BaselineParams {
  double contact_threshold = 0.002;
  double travel_bound = 1.0;
  double approach_step = 0.001;
  int closing_steps = 400;
  int facets = kDefaultPyramidFacets;
};

namespace detail {

inline double hand_clearance(const HandModel& hand, const OrientedPointCloud& cloud, const JointConfig& q) {
  const KinematicState ks(hand, q);
  double c = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < hand.spheres().size(); ++k)
    c = std::min(c, signed_distance(cloud, ks.sphere_center(k)) - hand.spheres()[k].radius);
  for (const auto& p : ks.fingertips()) c = std::min(c, signed_distance(cloud, p));
  return c;
}

}  // namespace detail

/// Opens the hand fully, translates it toward the object's center until
/// first contact, then closes each finger until its tip touches the surface.
inline BaselineResult baseline_direct_grasp(const HandModel& hand, const OrientedPointCloud& cloud,
                                            const Isometry& approach_pose, const TaskProjection& task, double mu,
                                            const BaselineParams& params = {}) {
  JointConfig q = hand.rest_pose();
  q.set_base_transform(approach_pose);
  Eigen::VectorXd open(hand.num_actuated()), closed(hand.num_actuated());
  for (std::size_t k = 0; k < hand.num_actuated(); ++k) {
    const auto& j = hand.actuated_joint(k);
    open[k] = j.close_sign > 0 ? j.lower : j.upper;
    closed[k] = j.close_sign > 0 ? j.upper : j.lower;
  }
  q.joint_values = open;

  const Vec3 palm = approach_pose.translation();
  const Vec3 axis = approach_pose.linear().col(2);
  Vec3 dir = cloud.centroid() - palm;
  dir = dir.dot(axis) > 0.0 && dir.norm() > 1e-12 ? Vec3(dir.normalized()) : axis;

  BaselineResult res;
  const int steps = static_cast<int>(std::ceil(params.travel_bound / params.approach_step));
  bool touched = false;
  for (int s = 0; s <= steps; ++s) {
    res.travel = s * params.approach_step;
    q.base_pose.head<3>() = palm + res.travel * dir;
    if (detail::hand_clearance(hand, cloud, q) <= params.contact_threshold) {
      touched = true;
      break;
    }
  }
  if (!touched) throw Error(ErrorKind::NoContact, "no contact within the approach travel bound");

  for (std::size_t i = 0; i < hand.num_fingertips(); ++i) {
    const auto dofs = hand.finger_dofs(i);
    for (int s = 0; s <= params.closing_steps; ++s) {
      const double a = static_cast<double>(s) / params.closing_steps;
      for (auto d : dofs) q.joint_values[static_cast<Eigen::Index>(d)] = (1.0 - a) * open[d] + a * closed[d];
      if (signed_distance(cloud, KinematicState(hand, q).fingertip(i)) <= params.contact_threshold) break;
    }
  }
  res.q = q;
  const auto tips = fingertip_positions(hand, q);
  res.forces = optimal_contact_forces(grasp_maps(tips, cloud, mu), task, params.facets);
  return res;
}

}  // namespace contactsynth
