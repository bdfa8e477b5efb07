#pragma once

// Bidirectional sampling planner for rigid object poses with point-cloud
// collision checks and random shortcutting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "primitives.hpp"
#include "rng.hpp"
#include "so3.hpp"

namespace contactsynth {

/// Object pose: translation and rotation vector (angle at most pi).
struct PoseState {
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();

  PoseState() = default;
  PoseState(const Vec3& t, const Vec3& r) : translation(t), rotation(canonical_rotation(r)) {}

  static PoseState from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 v;
    v << translation, rotation;
    return v;
  }
  Mat3 rotation_matrix() const { return so3_exp(rotation); }
  Isometry transform() const { return pose_from_vector(vector()); }
};

struct PlannerParams {
  double step = 0.05;
  double alpha = 0.3;  // m per rad
  double goal_tol = 1e-9;
  std::size_t max_samples = 20000;
  std::size_t shortcut_attempts = 200;
  std::uint64_t seed = 0;

  double resolution() const { return step / 5.0; }
};

inline double pose_distance(const PoseState& a, const PoseState& b, double alpha) {
  return (a.translation - b.translation).norm() +
         alpha * rotation_angle_between(a.rotation_matrix(), b.rotation_matrix());
}

/// Point at fraction `s` along the straight translation / geodesic rotation path.
inline PoseState interpolate(const PoseState& a, const PoseState& b, double s) {
  if (s <= 0.0) return a;
  if (s >= 1.0) return b;
  const Mat3 ra = a.rotation_matrix();
  const Vec3 w = so3_log(ra.transpose() * b.rotation_matrix());
  PoseState out;
  out.translation = a.translation + s * (b.translation - a.translation);
  out.rotation = canonical_rotation(so3_log(ra * so3_exp(s * w)));
  return out;
}

inline PoseState steer(const PoseState& near, const PoseState& rand, double step, double alpha) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "steer step must be positive");
  const double d = pose_distance(near, rand, alpha);
  if (d <= step) return rand;
  return interpolate(near, rand, step / d);
}

struct Aabb {
  Vec3 lower = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 upper = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lower = lower.cwiseMin(p);
    upper = upper.cwiseMax(p);
  }
  void pad(double m) {
    lower.array() -= m;
    upper.array() += m;
  }
};

struct Scene {
  OrientedPointCloud moving;                // object frame, already reduced
  std::vector<OrientedPointCloud> obstacles;  // world frame
  double clearance = 0.0;
  Aabb workspace;  // translation sampling bounds
};

/// Builds a scene: obstacles are moved to the world once and the moving
/// object is reduced to at most `max_points` points by farthest point sampling.
inline Scene make_scene(const OrientedPointCloud& moving, const std::vector<std::pair<OrientedPointCloud, Isometry>>& obstacles,
                        double clearance, std::optional<Aabb> workspace = std::nullopt, std::size_t max_points = 256) {
  if (!(clearance >= 0.0)) throw Error(ErrorKind::InvalidArgument, "clearance must be non-negative");
  Scene s{moving.size() > max_points ? subset(moving, farthest_point_indices(moving, max_points, 0)) : moving,
          {}, clearance, {}};
  for (const auto& [cloud, pose] : obstacles) s.obstacles.push_back(cloud.transformed(pose));
  if (workspace) {
    s.workspace = *workspace;
  } else {
    for (const auto& o : s.obstacles)
      for (const auto& p : o.points()) s.workspace.extend(p);
    if (s.obstacles.empty()) s.workspace.extend(Vec3::Zero());
    s.workspace.pad(0.25);
  }
  return s;
}

inline bool in_collision(const PoseState& state, const Scene& scene) {
  if (scene.obstacles.empty()) return false;
  const Mat3 r = state.rotation_matrix();
  for (const auto& p : scene.moving.points()) {
    const Vec3 x = r * p + state.translation;
    for (const auto& o : scene.obstacles)
      if (signed_distance(o, x) < scene.clearance) return true;
  }
  return false;
}

/// Checks the states strictly between `a` and `b` plus `b` at spacing no
/// larger than `resolution`. `a` is assumed checked.
inline bool segment_free(const PoseState& a, const PoseState& b, const Scene& scene, double alpha, double resolution) {
  const double d = pose_distance(a, b, alpha);
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(d / resolution)));
  for (std::size_t k = 1; k <= n; ++k)
    if (in_collision(interpolate(a, b, static_cast<double>(k) / static_cast<double>(n)), scene)) return false;
  return true;
}

/// Splits a-b into pieces no longer than `step`, endpoints excluded.
inline std::vector<PoseState> densify(const PoseState& a, const PoseState& b, double step, double alpha) {
  const double d = pose_distance(a, b, alpha);
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(d / step)));
  std::vector<PoseState> mid;
  for (std::size_t k = 1; k < n; ++k) mid.push_back(interpolate(a, b, static_cast<double>(k) / static_cast<double>(n)));
  return mid;
}

/// Collision test of a long edge, evaluated on exactly the pieces that
/// `densify` would emit so later per-edge checks see the same states.
inline bool edge_free(const PoseState& a, const PoseState& b, const Scene& scene, const PlannerParams& p) {
  PoseState prev = a;
  auto mid = densify(a, b, p.step, p.alpha);
  mid.push_back(b);
  for (const auto& s : mid) {
    if (!segment_free(prev, s, scene, p.alpha, p.resolution())) return false;
    prev = s;
  }
  return true;
}

inline double path_length(const std::vector<PoseState>& path, double alpha) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += pose_distance(path[i - 1], path[i], alpha);
  return len;
}

inline std::vector<PoseState> densify_path(const std::vector<PoseState>& path, const PlannerParams& p) {
  if (path.empty()) return {};
  std::vector<PoseState> out{path.front()};
  for (std::size_t i = 1; i < path.size(); ++i) {
    for (auto& s : densify(path[i - 1], path[i], p.step, p.alpha)) out.push_back(std::move(s));
    out.push_back(path[i]);
  }
  return out;
}

/// Random shortcutting followed by re-densification to edges of at most `step`.
inline std::vector<PoseState> optimize_path(std::vector<PoseState> path, const Scene& scene, const PlannerParams& p) {
  Rng rng = make_rng(p.seed, 7);
  for (std::size_t a = 0; a < p.shortcut_attempts && path.size() > 2; ++a) {
    std::size_t i = uniform_index(rng, path.size());
    std::size_t j = uniform_index(rng, path.size());
    if (i > j) std::swap(i, j);
    if (j < i + 2) continue;
    double old_len = 0.0;
    for (std::size_t k = i + 1; k <= j; ++k) old_len += pose_distance(path[k - 1], path[k], p.alpha);
    if (pose_distance(path[i], path[j], p.alpha) > old_len) continue;
    if (!edge_free(path[i], path[j], scene, p)) continue;
    path.erase(path.begin() + static_cast<std::ptrdiff_t>(i + 1), path.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return densify_path(path, p);
}

namespace detail {

struct Tree {
  std::vector<PoseState> nodes;
  std::vector<std::size_t> parent;  // root points to itself

  std::size_t nearest(const PoseState& s, double alpha) const {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double d = pose_distance(nodes[i], s, alpha);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  }

  std::vector<PoseState> to_root(std::size_t i) const {
    std::vector<PoseState> out{nodes[i]};
    while (parent[i] != i) {
      i = parent[i];
      out.push_back(nodes[i]);
    }
    return out;
  }
};

inline PoseState sample_state(const Scene& scene, Rng& rng) {
  Vec3 t;
  for (int k = 0; k < 3; ++k) t[k] = uniform(rng, scene.workspace.lower[k], scene.workspace.upper[k]);
  return {t, so3_log(random_rotation(rng))};
}

}  // namespace detail

struct PlanResult {
  std::vector<PoseState> path;
  std::size_t samples = 0;
  std::size_t tree_nodes = 0;
  double raw_length = 0.0;
  double length = 0.0;
};

inline PlanResult rrt_connect_detailed(const PoseState& start, const PoseState& goal, const Scene& scene,
                                       const PlannerParams& p) {
  if (in_collision(start, scene)) throw Error(ErrorKind::InvalidStart, "start state is in collision");
  if (in_collision(goal, scene)) throw Error(ErrorKind::InvalidGoal, "goal state is in collision");
  PlanResult res;
  if (pose_distance(start, goal, p.alpha) <= p.goal_tol) {
    res.path = {start};
    return res;
  }
  Rng rng = make_rng(p.seed, 3);
  detail::Tree ta{{start}, {0}}, tb{{goal}, {0}};
  bool a_is_start = true;
  for (std::size_t it = 0; it < p.max_samples; ++it) {
    res.samples = it + 1;
    const PoseState s_rand = detail::sample_state(scene, rng);
    const std::size_t near = ta.nearest(s_rand, p.alpha);
    const PoseState s_new = steer(ta.nodes[near], s_rand, p.step, p.alpha);
    if (!segment_free(ta.nodes[near], s_new, scene, p.alpha, p.resolution())) {
      std::swap(ta, tb);
      a_is_start = !a_is_start;
      continue;
    }
    ta.nodes.push_back(s_new);
    ta.parent.push_back(near);
    const std::size_t other = tb.nearest(s_new, p.alpha);
    if (edge_free(s_new, tb.nodes[other], scene, p)) {
      std::vector<PoseState> half_a = ta.to_root(ta.nodes.size() - 1);  // s_new .. root_a
      std::vector<PoseState> half_b = tb.to_root(other);                // node .. root_b
      std::reverse(half_a.begin(), half_a.end());
      std::vector<PoseState> path = std::move(half_a);
      path.insert(path.end(), half_b.begin(), half_b.end());
      if (!a_is_start) std::reverse(path.begin(), path.end());
      res.tree_nodes = ta.nodes.size() + tb.nodes.size();
      res.raw_length = path_length(path, p.alpha);
      res.path = optimize_path(std::move(path), scene, p);
      res.length = path_length(res.path, p.alpha);
      return res;
    }
    std::swap(ta, tb);
    a_is_start = !a_is_start;
  }
  throw Error(ErrorKind::NoPathFound, "no connection after " + std::to_string(p.max_samples) + " samples");
}

inline std::vector<PoseState> rrt_connect(const PoseState& start, const PoseState& goal, const Scene& scene,
                                          const PlannerParams& p) {
  return rrt_connect_detailed(start, goal, scene, p).path;
}

/// Plans each consecutive pair of waypoints and concatenates the segments.
inline std::vector<PoseState> plan_waypoints(const std::vector<PoseState>& waypoints, const Scene& scene,
                                             const PlannerParams& p) {
  if (waypoints.empty()) throw Error(ErrorKind::InvalidArgument, "waypoint list is empty");
  std::vector<PoseState> out{waypoints.front()};
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    PlannerParams pi = p;
    pi.seed = derive_seed(p.seed, i);
    const auto seg = rrt_connect(waypoints[i - 1], waypoints[i], scene, pi);
    out.insert(out.end(), seg.begin() + 1, seg.end());
  }
  return out;
}

/// Re-checks every consecutive edge at `resolution`; returns the first bad edge index.
inline std::optional<std::size_t> first_colliding_edge(const std::vector<PoseState>& path, const Scene& scene,
                                                       double alpha, double resolution) {
  if (!path.empty() && in_collision(path.front(), scene)) return 0;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!segment_free(path[i - 1], path[i], scene, alpha, resolution)) return i - 1;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {

inline Isometry pose_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return Isometry::Identity();
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 6) throw Error(ErrorKind::ConfigError, std::string(key) + " must have 6 values");
  return pose_from_vector(Vec6(v.data()));
}

inline OrientedPointCloud scene_object(const nlohmann::json& j, const std::filesystem::path& base) {
  if (j.contains("file")) {
    std::filesystem::path f = j.at("file").get<std::string>();
    if (f.is_relative()) f = base / f;
    if (!std::filesystem::exists(f)) throw Error(ErrorKind::ConfigError, "missing asset " + f.string());
    return load_point_cloud(f);
  }
  PrimitiveSpec ps;
  ps.shape = j.at("shape").get<std::string>();
  ps.size = j.at("size").get<std::vector<double>>();
  ps.spacing = j.value("spacing", ps.spacing);
  return make_primitive(ps);
}

}  // namespace detail

/// Scene file: {"moving": object, "obstacles": [object + "pose"], "clearance": m,
/// optional "workspace": {"lower": [3], "upper": [3]}, optional "max_points"}.
/// An object is {"file": path} or {"shape", "size", "spacing"}.
inline Scene scene_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  try {
    const auto moving = detail::scene_object(j.at("moving"), base);
    std::vector<std::pair<OrientedPointCloud, Isometry>> obs;
    for (const auto& o : j.value("obstacles", nlohmann::json::array()))
      obs.emplace_back(detail::scene_object(o, base), detail::pose_field(o, "pose"));
    std::optional<Aabb> ws;
    if (j.contains("workspace")) {
      Aabb b;
      const auto lo = j.at("workspace").at("lower").get<std::vector<double>>();
      const auto hi = j.at("workspace").at("upper").get<std::vector<double>>();
      if (lo.size() != 3 || hi.size() != 3) throw Error(ErrorKind::ConfigError, "workspace bounds need 3 values");
      b.lower = Vec3(lo.data());
      b.upper = Vec3(hi.data());
      ws = b;
    }
    return make_scene(moving, obs, j.value("clearance", 0.0), ws, j.value("max_points", std::size_t{256}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("scene: ") + e.what());
  }
}

inline Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return scene_from_json(j, path.parent_path());
}

/// Waypoint file: JSON list of 6-value poses [tx, ty, tz, rx, ry, rz].
inline std::vector<PoseState> load_waypoints(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  std::vector<PoseState> out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& w : j) {
      const auto v = w.get<std::vector<double>>();
      if (v.size() != 6) throw Error(ErrorKind::ParseError, path.string() + ": waypoint needs 6 values");
      out.push_back(PoseState::from_vector(Vec6(v.data())));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return out;
}

/// Two slabs forming a wall in the x = 0 plane with a gap of
/// `gap` metres centred on y = 0. The moving object is a cube of edge `cube`.
struct WallScenario {
  Scene scene;
  PoseState start;
  PoseState goal;
};

inline WallScenario wall_with_gap(double gap = 0.3, double cube = 0.08, double clearance = 0.01) {
  const double thick = 0.05, width = 0.6, height = 0.8, spacing = 0.012;
  const OrientedPointCloud slab = make_box(Vec3(thick, width, height), spacing);
  const double off = gap / 2.0 + width / 2.0;
  std::vector<std::pair<OrientedPointCloud, Isometry>> obs;
  for (double sgn : {-1.0, 1.0}) {
    Isometry t = Isometry::Identity();
    t.translation() = Vec3(0.0, sgn * off, 0.0);
    obs.emplace_back(slab, t);
  }
  Aabb ws;
  ws.lower = Vec3(-0.6, -0.9, -0.6);
  ws.upper = Vec3(0.6, 0.9, 0.6);
  return {make_scene(make_box(Vec3::Constant(cube), 0.01), obs, clearance, ws),
          PoseState(Vec3(-0.4, 0.45, 0.0), Vec3::Zero()), PoseState(Vec3(0.4, 0.45, 0.0), Vec3(0.0, 0.0, 0.5))};
}

inline nlohmann::json path_to_json(const std::vector<PoseState>& path) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& s : path) {
    const Vec6 v = s.vector();
    a.push_back(std::vector<double>(v.data(), v.data() + 6));
  }
  return a;
}

}  // namespace contactsynth
