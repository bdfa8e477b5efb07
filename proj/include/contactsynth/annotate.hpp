#pragma once

/**
 * @file
 * @brief Hierarchical sampling of ground-truth grasp examples: palm poses
 * facing the object, per-finger IK to nearby surface points, contact forces
 * inside the friction cones, and region masks.
 */

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "kinematics.hpp"
#include "proposal.hpp"
#include "refine.hpp"
#include "rng.hpp"
#include "wrench.hpp"

namespace contactsynth {

struct AnnotateParams {
  double standoff_min = 0.05;
  double standoff_max = 0.15;
  std::size_t targets_per_finger = 3;
  std::size_t target_pool = 32;
  double reach_factor = 1.2;
  double ik_accept = 0.005;
  std::size_t max_combinations = 81;
  double force_min = 0.1;
  double force_max = 1.0;
  double vicinity = 0.05;
  double heatmap_sigma = 0.01;
  double density = kDefaultDensity;
  double dt = 1.0;
  IkParams ik;
};

struct PalmSample {
  Isometry pose;
  std::size_t point_index;
  double standoff;
};

/// Palms placed along a surface point's outward normal, facing the point,
/// with uniform roll about the approach axis.
inline PalmSample sample_palm_pose(const OrientedPointCloud& cloud, Rng& rng, const AnnotateParams& p = {}) {
  PalmSample s;
  s.point_index = uniform_index(rng, cloud.size());
  s.standoff = uniform(rng, p.standoff_min, p.standoff_max);
  const double roll = uniform(rng, 0.0, 2.0 * M_PI);
  const Vec3& n = cloud.normal(s.point_index);
  s.pose = Isometry::Identity();
  s.pose.linear() = rotation_between(Vec3::UnitZ(), -n) * so3_exp(Vec3(0.0, 0.0, roll));
  s.pose.translation() = cloud.point(s.point_index) + s.standoff * n;
  return s;
}

inline std::vector<PalmSample> sample_palm_poses(const OrientedPointCloud& cloud, std::size_t count,
                                                 std::uint64_t seed, const AnnotateParams& p = {}) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "count must be at least 1");
  Rng rng = make_rng(seed);
  std::vector<PalmSample> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_palm_pose(cloud, rng, p));
  return out;
}

/// Length of the finger's kinematic chain from its first actuated joint to
/// the tip, plus prismatic travel.
inline double finger_reach(const HandModel& hand, std::size_t finger) {
  JointConfig q = hand.rest_pose();
  q.base_pose.setZero();
  const KinematicState ks(hand, q);
  const auto& tip = hand.fingertips()[finger];
  double reach = 0.0;
  Vec3 prev;
  bool started = false;
  for (auto j : hand.chain(tip.link)) {
    const auto& jt = hand.joints()[j];
    if (jt.dof_index < 0 && !started) continue;
    const Vec3 o = ks.link_pose(jt.child).translation();
    if (started) reach += (o - prev).norm();
    if (jt.type == JointType::Prismatic) reach += jt.upper - jt.lower;
    prev = o;
    started = true;
  }
  if (!started) return 0.0;
  return reach + (ks.fingertip(finger) - prev).norm();
}

inline Vec3 finger_base(const KinematicState& ks, std::size_t finger) {
  const auto& hand = ks.hand();
  for (auto j : hand.chain(hand.fingertips()[finger].link))
    if (hand.joints()[j].dof_index >= 0) return ks.link_pose(hand.joints()[j].child).translation();
  return ks.fingertip(finger);
}

/// Per finger, IK toward up to `targets_per_finger` surface points near its
/// tip; accepted solutions are combined across fingers (first
/// `max_combinations` in mixed-radix order).
inline std::vector<JointConfig> sample_grasp_candidates(const HandModel& hand, const OrientedPointCloud& cloud,
                                                        const Isometry& palm_pose, Rng& rng,
                                                        const AnnotateParams& p = {}) {
  JointConfig q0 = hand.rest_pose();
  q0.set_base_transform(palm_pose);
  const KinematicState ks(hand, q0);
  std::vector<std::vector<Eigen::VectorXd>> per_finger;
  for (std::size_t f = 0; f < hand.num_fingertips(); ++f) {
    const double reach = p.reach_factor * finger_reach(hand, f);
    const Vec3 base = finger_base(ks, f), tip = ks.fingertip(f);
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if ((cloud.point(i) - base).norm() <= reach) near.emplace_back((cloud.point(i) - tip).squaredNorm(), i);
    std::sort(near.begin(), near.end());
    if (near.size() > p.target_pool) near.resize(p.target_pool);
    std::vector<Eigen::VectorXd> sols;
    for (std::size_t t = 0; t < p.targets_per_finger && !near.empty(); ++t) {
      const std::size_t pick = uniform_index(rng, near.size());
      const std::size_t target = near[pick].second;
      near.erase(near.begin() + static_cast<std::ptrdiff_t>(pick));
      const IkResult ik = ik_damped_least_squares(hand, f, cloud.point(target), q0, p.ik);
      if (ik.residual < p.ik_accept) sols.push_back(ik.q.joint_values);
    }
    if (sols.empty()) return {};
    per_finger.push_back(std::move(sols));
  }
  std::vector<JointConfig> out;
  std::vector<std::size_t> digit(per_finger.size(), 0);
  while (out.size() < p.max_combinations) {
    JointConfig q = q0;
    for (std::size_t f = 0; f < per_finger.size(); ++f)
      for (auto d : hand.finger_dofs(f))
        q.joint_values[static_cast<Eigen::Index>(d)] = per_finger[f][digit[f]][static_cast<Eigen::Index>(d)];
    out.push_back(q);
    std::size_t f = 0;
    for (; f < digit.size(); ++f) {
      if (++digit[f] < per_finger[f].size()) break;
      digit[f] = 0;
    }
    if (f == digit.size()) break;
  }
  return out;
}

inline std::vector<JointConfig> sample_grasp_candidates(const HandModel& hand, const OrientedPointCloud& cloud,
                                                        const Isometry& palm_pose, std::uint64_t seed,
                                                        const AnnotateParams& p = {}) {
  Rng rng = make_rng(seed);
  return sample_grasp_candidates(hand, cloud, palm_pose, rng, p);
}

struct SampledForces {
  std::vector<Vec3> forces;
  Wrench wrench;
};

/// f = a * normalize(axis + rho * t), with a in [force_min, force_max],
/// rho in [0, mu] and t a uniformly oriented tangent.
inline SampledForces sample_contact_forces(const std::vector<GraspMap>& maps, double mu, Rng& rng,
                                           const AnnotateParams& p = {}) {
  if (maps.empty()) throw Error(ErrorKind::InvalidArgument, "at least one contact is required");
  SampledForces s;
  s.wrench.setZero();
  for (const auto& g : maps) {
    const double a = uniform(rng, p.force_min, p.force_max);
    const double rho = uniform(rng, 0.0, mu);
    const double phi = uniform(rng, 0.0, 2.0 * M_PI);
    const auto [t1, t2] = g.cone.tangents();
    const Vec3 f = a * (g.cone.axis + rho * (std::cos(phi) * t1 + std::sin(phi) * t2)).normalized();
    s.forces.push_back(f);
    s.wrench += g.apply(f);
  }
  return s;
}

/// All-ones with probability 1/2, otherwise the contacts and every point
/// within `vicinity` of one.
inline RegionMask make_region_mask(const std::vector<std::size_t>& contacts, const OrientedPointCloud& cloud,
                                   Rng& rng, double vicinity = 0.05) {
  if (contacts.empty()) throw Error(ErrorKind::InvalidArgument, "at least one contact is required");
  if (uniform(rng) < 0.5) return RegionMask::all(cloud.size());
  RegionMask m{std::vector<bool>(cloud.size(), false)};
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (auto c : contacts)
      if ((cloud.point(i) - cloud.point(c)).norm() <= vicinity) m.allowed[i] = true;
  for (auto c : contacts) m.allowed[c] = true;
  return m;
}

struct TaskMotion {
  Vec3 dx = Vec3::Zero();
  Vec3 dtheta = Vec3::Zero();
  double dt = 1.0;
};

/// A motion whose target wrench is the unit direction of `w`.
inline TaskMotion motion_for_wrench(const Wrench& w, const MassProperties& mp, double dt) {
  const Wrench u = w.normalized();
  TaskMotion t;
  t.dt = dt;
  const double k = 0.5 * dt * dt;
  t.dx = k * mp.mass * u.head<3>();
  t.dtheta = k * mp.inertia * u.tail<3>();
  return t;
}

struct TrainingExample {
  std::string object;  // cloud file reference
  std::string hand;
  std::uint64_t seed = 0;
  std::size_t pose_index = 0;
  double mu = 0.5;
  double density = kDefaultDensity;
  JointConfig q;
  std::vector<std::size_t> contact_indices;
  std::vector<Vec3> contact_points;  // fingertip positions
  std::vector<Vec3> forces;
  Wrench wrench = Wrench::Zero();  // sum of G_i f_i
  TaskMotion motion;
  RegionMask mask;
  ContactHeatmap heatmap;
  ForceMap force_map;
};

/// Sphere/object and sphere/sphere overlap of a configuration, floored at 0.
inline double collision_depth(const HandModel& hand, const OrientedPointCloud& cloud, const JointConfig& q) {
  const KinematicState ks(hand, q);
  double d = 0.0;
  for (std::size_t k = 0; k < hand.spheres().size(); ++k)
    d = std::max(d, hand.spheres()[k].radius - signed_distance(cloud, ks.sphere_center(k)));
  for (const auto& [a, b] : hand.non_adjacent_sphere_pairs())
    d = std::max(d, hand.spheres()[a].radius + hand.spheres()[b].radius -
                        (ks.sphere_center(a) - ks.sphere_center(b)).norm());
  return d;
}

/// Draws one example from the stream for `pose_index`; empty when the palm
/// pose yields no collision-free candidate with distinct contacts.
inline std::optional<TrainingExample> sample_example(const HandModel& hand, const OrientedPointCloud& cloud,
                                                     const MassProperties& mp, double mu, std::uint64_t seed,
                                                     std::size_t pose_index, const AnnotateParams& p = {}) {
  Rng rng = make_rng(seed, pose_index);
  const PalmSample palm = sample_palm_pose(cloud, rng, p);
  auto candidates = sample_grasp_candidates(hand, cloud, palm.pose, rng, p);
  // Visit candidates in a seeded order and keep the first usable one.
  for (std::size_t i = candidates.size(); i > 1; --i) std::swap(candidates[i - 1], candidates[uniform_index(rng, i)]);
  for (const auto& q : candidates) {
    if (collision_depth(hand, cloud, q) > 1e-4) continue;
    const auto tips = fingertip_positions(hand, q);
    std::vector<std::size_t> idx;
    for (const auto& t : tips) idx.push_back(cloud.nearest_index(t));
    auto sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;

    TrainingExample ex;
    ex.hand = hand.name();
    ex.seed = seed;
    ex.pose_index = pose_index;
    ex.mu = mu;
    ex.density = p.density;
    ex.q = q;
    ex.contact_indices = idx;
    ex.contact_points = tips;
    const auto maps = grasp_maps(tips, cloud, mu);
    auto sampled = sample_contact_forces(maps, mu, rng, p);
    ex.forces = std::move(sampled.forces);
    ex.wrench = sampled.wrench;
    ex.motion = motion_for_wrench(ex.wrench, mp, p.dt);
    ex.mask = make_region_mask(idx, cloud, rng, p.vicinity);
    ex.heatmap = contact_heatmap_from_pose(cloud, tips, p.heatmap_sigma);
    ex.force_map.vectors.assign(cloud.size(), Vec3::Zero());
    for (std::size_t c = 0; c < idx.size(); ++c) ex.force_map.vectors[idx[c]] = ex.forces[c];
    return ex;
  }
  return std::nullopt;
}

namespace detail {

inline nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Vec3 json_vec(const nlohmann::json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

}  // namespace detail

/// Writes meta.json, task.json (task-file format), mask.txt and heatmap.txt
/// (`score fx fy fz`) into `dir`.
inline void emit_example(const TrainingExample& ex, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + dir.string() + "': " + ec.message());
  nlohmann::json meta;
  meta["object"] = ex.object;
  meta["hand"] = ex.hand;
  meta["seed"] = ex.seed;
  meta["pose_index"] = ex.pose_index;
  meta["mu"] = ex.mu;
  meta["density"] = ex.density;
  meta["q"] = config_to_json(ex.q);
  meta["contact_indices"] = ex.contact_indices;
  for (std::size_t i = 0; i < ex.forces.size(); ++i) {
    meta["contact_points"].push_back(detail::vec_json(ex.contact_points[i]));
    meta["forces"].push_back(detail::vec_json(ex.forces[i]));
  }
  meta["wrench"] = std::vector<double>(ex.wrench.data(), ex.wrench.data() + 6);
  meta["motion"] = {{"dx", detail::vec_json(ex.motion.dx)},
                    {"dtheta", detail::vec_json(ex.motion.dtheta)},
                    {"dt", ex.motion.dt}};
  auto out = detail::open_output(dir / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed for '" + (dir / "meta.json").string() + "'");
  auto task = detail::open_output(dir / "task.json");
  task << meta["motion"].dump(2) << '\n';
  if (!task) throw Error(ErrorKind::IoError, "write failed for '" + (dir / "task.json").string() + "'");
  save_mask_file(ex.mask.allowed, dir / "mask.txt");
  save_heatmap_file(HeatmapFile{ex.heatmap.scores, ex.force_map.vectors}, dir / "heatmap.txt");
}

inline TrainingExample load_example(const std::filesystem::path& dir) {
  auto in = detail::open_input(dir / "meta.json");
  TrainingExample ex;
  try {
    const auto meta = nlohmann::json::parse(in);
    ex.object = meta.at("object").get<std::string>();
    ex.hand = meta.at("hand").get<std::string>();
    ex.seed = meta.at("seed").get<std::uint64_t>();
    ex.pose_index = meta.at("pose_index").get<std::size_t>();
    ex.mu = meta.at("mu").get<double>();
    ex.density = meta.at("density").get<double>();
    ex.q = config_from_json(meta.at("q"));
    ex.contact_indices = meta.at("contact_indices").get<std::vector<std::size_t>>();
    for (const auto& v : meta.at("contact_points")) ex.contact_points.push_back(detail::json_vec(v));
    for (const auto& v : meta.at("forces")) ex.forces.push_back(detail::json_vec(v));
    const auto w = meta.at("wrench").get<std::vector<double>>();
    if (w.size() != 6) throw Error(ErrorKind::ParseError, "wrench must have 6 entries");
    for (int i = 0; i < 6; ++i) ex.wrench[i] = w[static_cast<std::size_t>(i)];
    ex.motion.dx = detail::json_vec(meta.at("motion").at("dx"));
    ex.motion.dtheta = detail::json_vec(meta.at("motion").at("dtheta"));
    ex.motion.dt = meta.at("motion").at("dt").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, (dir / "meta.json").string() + ": " + e.what());
  }
  ex.mask.allowed = load_mask_file(dir / "mask.txt");
  const auto hm = load_heatmap_file(dir / "heatmap.txt");
  ex.heatmap.scores = hm.scores;
  ex.force_map.vectors = hm.vectors;
  return ex;
}

/// Checks every example invariant against the object cloud; throws
/// ParseError naming the first violation.
inline void validate_example(const TrainingExample& ex, const OrientedPointCloud& cloud, double tol = 1e-9) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::ParseError, "example (seed " + std::to_string(ex.seed) + ", pose " +
                                           std::to_string(ex.pose_index) + "): " + what);
  };
  const std::size_t m = ex.contact_indices.size();
  if (m == 0) fail("no contacts");
  if (ex.forces.size() != m || ex.contact_points.size() != m) fail("contact arrays differ in length");
  if (ex.mask.allowed.size() != cloud.size()) fail("mask length does not match the cloud");
  if (ex.heatmap.scores.size() != cloud.size() || ex.force_map.vectors.size() != cloud.size())
    fail("heatmap length does not match the cloud");
  Wrench w = Wrench::Zero();
  for (std::size_t i = 0; i < m; ++i) {
    const auto c = ex.contact_indices[i];
    if (c >= cloud.size()) fail("contact index out of range");
    const GraspMap g = grasp_map(ex.contact_points[i], cloud, ex.mu);
    if (!g.cone.contains(ex.forces[i], tol)) fail("force " + std::to_string(i) + " violates its friction cone");
    w += g.apply(ex.forces[i]);
    if (!ex.mask.allowed[c]) fail("mask forbids contact " + std::to_string(i));
    if (ex.heatmap.scores[c] < 0.5) fail("heatmap support misses contact " + std::to_string(i));
    if ((ex.force_map.vectors[c] - ex.forces[i]).norm() > tol) fail("force map disagrees at contact " + std::to_string(i));
  }
  if ((w - ex.wrench).norm() > tol) fail("recorded wrench differs from the sum of contact wrenches");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double s = ex.heatmap.scores[i];
    if (!(s >= 0.0 && s <= 1.0)) fail("heatmap score outside [0, 1]");
    if (std::find(ex.contact_indices.begin(), ex.contact_indices.end(), i) == ex.contact_indices.end() &&
        !ex.force_map.vectors[i].isZero(0.0))
      fail("force map is non-zero away from the contacts");
  }
  const auto mp = estimate_mass_properties(cloud, ex.density);
  if ((target_wrench(ex.motion.dx, ex.motion.dtheta, mp, ex.motion.dt) - ex.wrench.normalized()).norm() > 1e-9)
    fail("task motion does not reproduce the wrench direction");
}

struct AnnotateSummary {
  std::size_t examples = 0;
  std::size_t poses_tried = 0;
  std::vector<std::string> directories;
};

/// Samples palm poses until `count` examples exist (or the attempt budget
/// runs out) and writes them under `out_dir` with an index.json listing.
inline AnnotateSummary annotate(const HandModel& hand, const OrientedPointCloud& cloud, const std::string& object_ref,
                                std::size_t count, double mu, std::uint64_t seed, const std::filesystem::path& out_dir,
                                const AnnotateParams& p = {}, std::size_t max_poses = 0) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "count must be at least 1");
  if (max_poses == 0) max_poses = 200 * count;
  const auto mp = estimate_mass_properties(cloud, p.density);
  AnnotateSummary sum;
  nlohmann::json index;
  index["object"] = object_ref;
  index["hand"] = hand.name();
  index["seed"] = seed;
  index["mu"] = mu;
  index["examples"] = nlohmann::json::array();
  for (std::size_t k = 0; k < max_poses && sum.examples < count; ++k) {
    ++sum.poses_tried;
    auto ex = sample_example(hand, cloud, mp, mu, seed, k, p);
    if (!ex) continue;
    ex->object = object_ref;
    char name[32];
    std::snprintf(name, sizeof name, "example_%05zu", sum.examples);
    emit_example(*ex, out_dir / name);
    index["examples"].push_back(name);
    sum.directories.emplace_back(name);
    ++sum.examples;
  }
  auto out = detail::open_output(out_dir / "index.json");
  out << index.dump(2) << '\n';
  return sum;
}

}  // namespace contactsynth
