#pragma once

/**
 * @file
 * @brief Floating-base hand kinematics: forward kinematics, analytic point
 * Jacobians and damped-least-squares finger IK.
 *
 * Configuration vectors are laid out as
 * `[tx ty tz | wx wy wz | joint_0 ... joint_{k-1}]`, where `w` is the base
 * rotation vector (R = exp(w)) and joints are the non-fixed joints in file order.
 */

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <limits>
#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "so3.hpp"

namespace contactsynth {

enum class JointType { Revolute, Prismatic, Fixed };

struct Joint {
  std::string name;
  JointType type = JointType::Fixed;
  std::size_t parent = 0;
  std::size_t child = 0;
  Isometry origin = Isometry::Identity();
  Vec3 axis = Vec3::UnitZ();
  double lower = 0.0;
  double upper = 0.0;
  /// +1 if increasing the joint value closes the finger, -1 otherwise.
  int close_sign = 1;
  /// Position among actuated joints; -1 for fixed joints.
  int dof_index = -1;
};

/// A point rigidly attached to a link.
struct Attachment {
  std::size_t link = 0;
  Vec3 local = Vec3::Zero();
};

struct CollisionSphere {
  Attachment at;
  double radius = 0.0;
};

struct JointConfig {
  Vec6 base_pose = Vec6::Zero();
  Eigen::VectorXd joint_values;

  Eigen::VectorXd stacked() const {
    Eigen::VectorXd v(6 + joint_values.size());
    v << base_pose, joint_values;
    return v;
  }

  static JointConfig from_stacked(const Eigen::VectorXd& v) {
    JointConfig q;
    q.base_pose = v.head<6>();
    q.joint_values = v.tail(v.size() - 6);
    return q;
  }

  Isometry base_transform() const { return pose_from_vector(base_pose); }
  void set_base_transform(const Isometry& t) { base_pose = pose_to_vector(t); }
};

class HandModel {
 public:
  HandModel() = default;

  /// Builds and validates a model. Link 0 must be the floating base.
  HandModel(std::string name, std::vector<std::string> links, std::vector<Joint> joints,
            std::vector<Attachment> fingertips, std::vector<CollisionSphere> spheres,
            std::optional<JointConfig> rest = std::nullopt)
      : name_(std::move(name)),
        links_(std::move(links)),
        joints_(std::move(joints)),
        fingertips_(std::move(fingertips)),
        spheres_(std::move(spheres)) {
    validate_and_index();
    if (rest) {
      rest_ = *rest;
    } else {
      rest_.joint_values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dof_joints_.size()));
    }
    if (static_cast<std::size_t>(rest_.joint_values.size()) != dof_joints_.size())
      throw Error(ErrorKind::InvalidArgument, "rest pose has wrong joint count");
  }

  const std::string& name() const { return name_; }
  std::size_t num_links() const { return links_.size(); }
  const std::vector<std::string>& link_names() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  std::size_t num_actuated() const { return dof_joints_.size(); }
  /// Total configuration dimension including the 6 base coordinates.
  std::size_t dof() const { return 6 + dof_joints_.size(); }
  const Joint& actuated_joint(std::size_t k) const { return joints_[dof_joints_[k]]; }
  const std::vector<Attachment>& fingertips() const { return fingertips_; }
  std::size_t num_fingertips() const { return fingertips_.size(); }
  const std::vector<CollisionSphere>& spheres() const { return spheres_; }
  const JointConfig& rest_pose() const { return rest_; }

  /// Joint indices from the base to `link`, root first.
  const std::vector<std::size_t>& chain(std::size_t link) const { return chains_[link]; }

  /// Actuated-joint positions that move fingertip `i`.
  std::vector<std::size_t> finger_dofs(std::size_t i) const {
    std::vector<std::size_t> out;
    for (auto j : chains_[fingertips_[i].link])
      if (joints_[j].dof_index >= 0) out.push_back(static_cast<std::size_t>(joints_[j].dof_index));
    return out;
  }

  Eigen::VectorXd lower_limits() const {
    Eigen::VectorXd lo(dof());
    lo.head<6>().setConstant(-std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < dof_joints_.size(); ++k) lo[6 + k] = joints_[dof_joints_[k]].lower;
    return lo;
  }

  Eigen::VectorXd upper_limits() const {
    Eigen::VectorXd hi(dof());
    hi.head<6>().setConstant(std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < dof_joints_.size(); ++k) hi[6 + k] = joints_[dof_joints_[k]].upper;
    return hi;
  }

  /// Clamps joints into limits and canonicalizes the base rotation vector.
  JointConfig clamp(JointConfig q) const {
    check_dimension(q);
    for (std::size_t k = 0; k < dof_joints_.size(); ++k) {
      const auto& j = joints_[dof_joints_[k]];
      q.joint_values[k] = std::clamp(q.joint_values[k], j.lower, j.upper);
    }
    q.base_pose.tail<3>() = canonical_rotation(q.base_pose.tail<3>());
    return q;
  }

  void check_dimension(const JointConfig& q) const {
    if (static_cast<std::size_t>(q.joint_values.size()) != dof_joints_.size())
      throw Error(ErrorKind::InvalidArgument,
                  "configuration has " + std::to_string(q.joint_values.size()) + " joint values, hand '" +
                      name_ + "' expects " + std::to_string(dof_joints_.size()));
  }

  /// Pairs of spheres on links that are neither identical nor joined by a joint.
  std::vector<std::pair<std::size_t, std::size_t>> non_adjacent_sphere_pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < spheres_.size(); ++a) {
      for (std::size_t b = a + 1; b < spheres_.size(); ++b) {
        const auto la = spheres_[a].at.link, lb = spheres_[b].at.link;
        if (la == lb) continue;
        bool adjacent = false;
        for (const auto& j : joints_)
          if ((j.parent == la && j.child == lb) || (j.parent == lb && j.child == la)) adjacent = true;
        if (!adjacent) out.emplace_back(a, b);
      }
    }
    return out;
  }

  std::size_t link_index(const std::string& name) const {
    for (std::size_t i = 0; i < links_.size(); ++i)
      if (links_[i] == name) return i;
    throw Error(ErrorKind::InvalidArgument, "unknown link '" + name + "'");
  }

 private:
  void validate_and_index() {
    if (links_.empty()) throw Error(ErrorKind::InvalidArgument, "hand has no links");
    std::vector<int> parent_joint(links_.size(), -1);
    for (std::size_t j = 0; j < joints_.size(); ++j) {
      auto& jt = joints_[j];
      if (jt.parent >= links_.size() || jt.child >= links_.size())
        throw Error(ErrorKind::InvalidArgument, "joint '" + jt.name + "' references a missing link");
      if (jt.child == 0) throw Error(ErrorKind::InvalidArgument, "the base link cannot be a joint child");
      if (parent_joint[jt.child] >= 0)
        throw Error(ErrorKind::InvalidArgument, "link '" + links_[jt.child] + "' has two parent joints");
      parent_joint[jt.child] = static_cast<int>(j);
      if (jt.type != JointType::Fixed) {
        const double len = jt.axis.norm();
        if (len < 1e-12) throw Error(ErrorKind::InvalidArgument, "joint '" + jt.name + "' has a zero axis");
        jt.axis /= len;
        if (jt.lower > jt.upper)
          throw Error(ErrorKind::InvalidArgument, "joint '" + jt.name + "' has min > max");
        jt.dof_index = static_cast<int>(dof_joints_.size());
        dof_joints_.push_back(j);
      } else {
        jt.dof_index = -1;
      }
    }
    chains_.assign(links_.size(), {});
    order_.clear();
    for (std::size_t l = 1; l < links_.size(); ++l) {
      if (parent_joint[l] < 0)
        throw Error(ErrorKind::InvalidArgument, "link '" + links_[l] + "' is not connected to the base");
      std::vector<std::size_t> chain;
      std::size_t cur = l;
      std::size_t guard = 0;
      while (cur != 0) {
        if (++guard > links_.size()) throw Error(ErrorKind::InvalidArgument, "joint graph has a cycle");
        const auto j = static_cast<std::size_t>(parent_joint[cur]);
        chain.push_back(j);
        cur = joints_[j].parent;
      }
      std::reverse(chain.begin(), chain.end());
      chains_[l] = std::move(chain);
    }
    // Joints sorted by depth give a valid evaluation order.
    order_.resize(joints_.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return chains_[joints_[a].child].size() < chains_[joints_[b].child].size();
    });
    for (const auto& f : fingertips_)
      if (f.link >= links_.size()) throw Error(ErrorKind::InvalidArgument, "fingertip on a missing link");
    for (const auto& s : spheres_) {
      if (s.at.link >= links_.size()) throw Error(ErrorKind::InvalidArgument, "sphere on a missing link");
      if (!(s.radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "sphere radius must be positive");
    }
  }

  friend class KinematicState;

  std::string name_;
  std::vector<std::string> links_;
  std::vector<Joint> joints_;
  std::vector<Attachment> fingertips_;
  std::vector<CollisionSphere> spheres_;
  JointConfig rest_;
  std::vector<std::size_t> dof_joints_;
  std::vector<std::vector<std::size_t>> chains_;
  std::vector<std::size_t> order_;
};

using PointJacobian = Eigen::Matrix<double, 3, Eigen::Dynamic>;

/// Forward kinematics evaluated once for a configuration; answers point and
/// Jacobian queries against the cached link poses.
class KinematicState {
 public:
  KinematicState(const HandModel& hand, const JointConfig& q) : hand_(&hand), q_(q) {
    hand.check_dimension(q);
    poses_.assign(hand.num_links(), Isometry::Identity());
    poses_[0] = q.base_transform();
    joint_axis_.assign(hand.joints_.size(), Vec3::Zero());
    joint_origin_.assign(hand.joints_.size(), Vec3::Zero());
    for (auto j : hand.order_) {
      const Joint& jt = hand.joints_[j];
      const Isometry frame = poses_[jt.parent] * jt.origin;
      joint_axis_[j] = frame.linear() * jt.axis;
      joint_origin_[j] = frame.translation();
      Isometry motion = Isometry::Identity();
      if (jt.type == JointType::Revolute) {
        motion.linear() = Eigen::AngleAxisd(q.joint_values[jt.dof_index], jt.axis).toRotationMatrix();
      } else if (jt.type == JointType::Prismatic) {
        motion.translation() = jt.axis * q.joint_values[jt.dof_index];
      }
      poses_[jt.child] = frame * motion;
    }
    base_rot_jac_ = so3_right_jacobian(q.base_pose.tail<3>());
  }

  const HandModel& hand() const { return *hand_; }
  const JointConfig& config() const { return q_; }
  const Isometry& link_pose(std::size_t link) const { return poses_[link]; }
  const std::vector<Isometry>& link_poses() const { return poses_; }

  Vec3 point(const Attachment& a) const { return poses_[a.link] * a.local; }

  Vec3 fingertip(std::size_t i) const { return point(hand_->fingertips()[i]); }
  Vec3 sphere_center(std::size_t k) const { return point(hand_->spheres()[k].at); }

  std::vector<Vec3> fingertips() const {
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < hand_->num_fingertips(); ++i) out.push_back(fingertip(i));
    return out;
  }

  /// dp/dq for a point attached to a link; 3 x dof.
  PointJacobian jacobian(const Attachment& a) const {
    const Vec3 p = point(a);
    PointJacobian jac = PointJacobian::Zero(3, static_cast<Eigen::Index>(hand_->dof()));
    jac.leftCols<3>().setIdentity();
    const Isometry& base = poses_[0];
    const Vec3 v = base.linear().transpose() * (p - base.translation());
    jac.block<3, 3>(0, 3) = -base.linear() * skew(v) * base_rot_jac_;
    for (auto j : hand_->chain(a.link)) {
      const Joint& jt = hand_->joints_[j];
      if (jt.dof_index < 0) continue;
      const auto col = 6 + jt.dof_index;
      if (jt.type == JointType::Revolute) {
        jac.col(col) = joint_axis_[j].cross(p - joint_origin_[j]);
      } else {
        jac.col(col) = joint_axis_[j];
      }
    }
    return jac;
  }

  PointJacobian fingertip_jacobian(std::size_t i) const { return jacobian(hand_->fingertips()[i]); }
  PointJacobian sphere_jacobian(std::size_t k) const { return jacobian(hand_->spheres()[k].at); }

 private:
  const HandModel* hand_;
  JointConfig q_;
  std::vector<Isometry> poses_;
  std::vector<Vec3> joint_axis_;
  std::vector<Vec3> joint_origin_;
  Mat3 base_rot_jac_;
};

inline std::vector<Isometry> forward_kinematics(const HandModel& hand, const JointConfig& q) {
  return KinematicState(hand, q).link_poses();
}

inline std::vector<Vec3> fingertip_positions(const HandModel& hand, const JointConfig& q) {
  return KinematicState(hand, q).fingertips();
}

inline PointJacobian point_jacobian(const HandModel& hand, const JointConfig& q, const Attachment& a) {
  return KinematicState(hand, q).jacobian(a);
}

struct IkParams {
  double damping = 0.05;
  int max_iter = 100;
  double tol = 1e-4;
};

struct IkResult {
  JointConfig q;
  double residual = 0.0;
  int iterations = 0;
};

/// Damped least squares on one finger's joints with the base frozen.
inline IkResult ik_damped_least_squares(const HandModel& hand, std::size_t finger, const Vec3& target,
                                        const JointConfig& q_init, const IkParams& params = {}) {
  if (finger >= hand.num_fingertips()) throw Error(ErrorKind::InvalidArgument, "finger index out of range");
  const auto dofs = hand.finger_dofs(finger);
  IkResult res{hand.clamp(q_init), 0.0, 0};
  const double lambda2 = params.damping * params.damping;
  for (;;) {
    const KinematicState ks(hand, res.q);
    const Vec3 err = target - ks.fingertip(finger);
    res.residual = err.norm();
    if (res.residual < params.tol || res.iterations >= params.max_iter || dofs.empty()) break;
    const PointJacobian full = ks.fingertip_jacobian(finger);
    Eigen::Matrix<double, 3, Eigen::Dynamic> jac(3, static_cast<Eigen::Index>(dofs.size()));
    for (std::size_t c = 0; c < dofs.size(); ++c) jac.col(c) = full.col(6 + dofs[c]);
    const Mat3 jjt = jac * jac.transpose() + lambda2 * Mat3::Identity();
    const Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err);
    for (std::size_t c = 0; c < dofs.size(); ++c) {
      const auto& jt = hand.actuated_joint(dofs[c]);
      auto& v = res.q.joint_values[dofs[c]];
      v = std::clamp(v + dq[c], jt.lower, jt.upper);
    }
    ++res.iterations;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Hand description files

namespace detail {

inline Vec3 json_vec3(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::ParseError, what + " must be a 3-array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline Vec6 json_vec6(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 6) throw Error(ErrorKind::ParseError, what + " must be a 6-array");
  Vec6 v;
  for (int i = 0; i < 6; ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace detail

/// Parses a hand description (see data/hands/ for the schema).
inline HandModel hand_from_json(const nlohmann::json& j) {
  try {
    std::vector<std::string> links = j.at("links").get<std::vector<std::string>>();
    auto find_link = [&](const std::string& n) -> std::size_t {
      for (std::size_t i = 0; i < links.size(); ++i)
        if (links[i] == n) return i;
      throw Error(ErrorKind::ParseError, "unknown link '" + n + "'");
    };
    std::vector<Joint> joints;
    for (const auto& jj : j.at("joints")) {
      Joint jt;
      jt.name = jj.value("name", std::string{});
      const auto type = jj.at("type").get<std::string>();
      if (type == "revolute") jt.type = JointType::Revolute;
      else if (type == "prismatic") jt.type = JointType::Prismatic;
      else if (type == "fixed") jt.type = JointType::Fixed;
      else throw Error(ErrorKind::ParseError, "unknown joint type '" + type + "'");
      jt.parent = find_link(jj.at("parent").get<std::string>());
      jt.child = find_link(jj.at("child").get<std::string>());
      jt.origin = pose_from_vector(detail::json_vec6(jj.value("origin", nlohmann::json::array({0, 0, 0, 0, 0, 0})),
                                                     "joint origin"));
      if (jt.type != JointType::Fixed) {
        jt.axis = detail::json_vec3(jj.at("axis"), "joint axis");
        const auto lim = jj.at("limits").get<std::vector<double>>();
        if (lim.size() != 2) throw Error(ErrorKind::ParseError, "joint limits must be [min, max]");
        jt.lower = lim[0];
        jt.upper = lim[1];
        jt.close_sign = jj.value("close", 1) >= 0 ? 1 : -1;
      }
      joints.push_back(std::move(jt));
    }
    std::vector<Attachment> tips;
    for (const auto& f : j.at("fingertips"))
      tips.push_back({find_link(f.at("link").get<std::string>()), detail::json_vec3(f.at("offset"), "fingertip offset")});
    std::vector<CollisionSphere> spheres;
    for (const auto& s : j.at("collision_spheres"))
      spheres.push_back({{find_link(s.at("link").get<std::string>()), detail::json_vec3(s.at("center"), "sphere center")},
                         s.at("radius").get<double>()});
    std::optional<JointConfig> rest;
    if (j.contains("rest_pose")) {
      JointConfig q;
      const auto& r = j.at("rest_pose");
      q.base_pose = detail::json_vec6(r.value("base", nlohmann::json::array({0, 0, 0, 0, 0, 0})), "rest base");
      const auto vals = r.at("joints").get<std::vector<double>>();
      q.joint_values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
      rest = q;
    }
    return HandModel(j.value("name", std::string("hand")), std::move(links), std::move(joints), std::move(tips),
                     std::move(spheres), rest);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("hand description: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) throw;
    throw Error(ErrorKind::ParseError, std::string("hand description: ") + e.what());
  }
}

inline HandModel load_hand(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return hand_from_json(j);
}

inline nlohmann::json config_to_json(const JointConfig& q) {
  return {{"base", std::vector<double>(q.base_pose.data(), q.base_pose.data() + 6)},
          {"joints", std::vector<double>(q.joint_values.data(), q.joint_values.data() + q.joint_values.size())}};
}

inline JointConfig config_from_json(const nlohmann::json& j) {
  JointConfig q;
  q.base_pose = detail::json_vec6(j.at("base"), "base");
  const auto vals = j.at("joints").get<std::vector<double>>();
  q.joint_values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return q;
}

}  // namespace contactsynth
