#pragma once

/**
 * @file
 * @brief Oriented point clouds, exact nearest-neighbor queries, the
 * nearest-point signed distance field and mass-property estimates.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "so3.hpp"

namespace contactsynth {

namespace detail {

/// Static kd-tree over a fixed point set. Queries are exact; ties in
/// distance resolve to the lower point index, matching a linear scan.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(const std::vector<Vec3>* points) : points_(points) {
    order_.resize(points->size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!order_.empty()) nodes_.reserve(2 * order_.size() / kLeafSize + 2);
    if (!order_.empty()) build(0, order_.size());
  }

  /// Index of the nearest point to `x`.
  std::size_t nearest(const Vec3& x) const {
    Best best{std::numeric_limits<double>::infinity(), std::numeric_limits<std::size_t>::max()};
    search(0, x, best);
    return best.index;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin, end;
    int axis;  // -1 for leaves
    double split;
    std::int32_t left, right;
    Vec3 lo, hi;
  };

  struct Best {
    double d2;
    std::size_t index;
  };

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end, -1, 0.0, -1, -1, Vec3::Zero(), Vec3::Zero()});
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin((*points_)[order_[i]]);
      hi = hi.cwiseMax((*points_)[order_[i]]);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    if (end - begin <= kLeafSize) return id;

    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return (*points_)[a][axis] < (*points_)[b][axis];
                     });
    nodes_[id].axis = axis;
    nodes_[id].split = (*points_)[order_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  static double box_distance2(const Node& n, const Vec3& x) {
    const Vec3 d = (n.lo - x).cwiseMax(x - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  void search(std::int32_t id, const Vec3& x, Best& best) const {
    const Node& n = nodes_[id];
    if (box_distance2(n, x) > best.d2) return;
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = ((*points_)[idx] - x).squaredNorm();
        if (d2 < best.d2 || (d2 == best.d2 && idx < best.index)) best = Best{d2, idx};
      }
      return;
    }
    const bool go_left = x[n.axis] < n.split;
    search(go_left ? n.left : n.right, x, best);
    search(go_left ? n.right : n.left, x, best);
  }

  const std::vector<Vec3>* points_ = nullptr;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace detail

/// Surface samples with outward unit normals. Immutable after construction.
class OrientedPointCloud {
 public:
  OrientedPointCloud(std::vector<Vec3> points, std::vector<Vec3> normals)
      : points_(std::move(points)), normals_(std::move(normals)) {
    if (points_.size() != normals_.size())
      throw Error(ErrorKind::InvalidArgument, "points and normals differ in length");
    if (points_.size() < 4)
      throw Error(ErrorKind::InvalidArgument, "a point cloud needs at least 4 points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!points_[i].allFinite() || !normals_[i].allFinite())
        throw Error(ErrorKind::InvalidArgument, "non-finite value at point " + std::to_string(i));
      const double len = normals_[i].norm();
      if (len < 1e-12)
        throw Error(ErrorKind::InvalidArgument, "zero normal at point " + std::to_string(i));
      normals_[i] /= len;
    }
    index_ = detail::KdTree(&points_);
  }

  OrientedPointCloud(const OrientedPointCloud& other)
      : OrientedPointCloud(other.points_, other.normals_) {}
  OrientedPointCloud& operator=(const OrientedPointCloud& other) {
    if (this != &other) *this = OrientedPointCloud(other);
    return *this;
  }
  OrientedPointCloud(OrientedPointCloud&& other) noexcept
      : points_(std::move(other.points_)), normals_(std::move(other.normals_)) {
    index_ = detail::KdTree(&points_);
  }
  OrientedPointCloud& operator=(OrientedPointCloud&& other) noexcept {
    points_ = std::move(other.points_);
    normals_ = std::move(other.normals_);
    index_ = detail::KdTree(&points_);
    return *this;
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }
  const Vec3& normal(std::size_t i) const { return normals_[i]; }
  const std::vector<Vec3>& points() const { return points_; }
  const std::vector<Vec3>& normals() const { return normals_; }

  std::size_t nearest_index(const Vec3& x) const { return index_.nearest(x); }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points_) c += p;
    return c / static_cast<double>(points_.size());
  }

  /// Rigidly transformed copy.
  OrientedPointCloud transformed(const Isometry& t) const {
    std::vector<Vec3> p(points_.size()), n(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      p[i] = t * points_[i];
      n[i] = t.linear() * normals_[i];
    }
    return {std::move(p), std::move(n)};
  }

  OrientedPointCloud scaled(double s) const {
    std::vector<Vec3> p(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) p[i] = s * points_[i];
    return {std::move(p), normals_};
  }

 private:
  std::vector<Vec3> points_;
  std::vector<Vec3> normals_;
  detail::KdTree index_;
};

struct SurfaceQuery {
  std::size_t index;
  Vec3 nearest_point;
  Vec3 outward_normal;
  double signed_distance;
};

inline SurfaceQuery nearest_surface_point(const OrientedPointCloud& cloud, const Vec3& x) {
  const std::size_t i = cloud.nearest_index(x);
  const Vec3& p = cloud.point(i);
  const Vec3& n = cloud.normal(i);
  return SurfaceQuery{i, p, n, n.dot(x - p)};
}

/// First-order SDF: normal of the nearest sample dotted with the offset.
/// Accurate near the surface; degrades deep inside thin or concave shapes.
inline double signed_distance(const OrientedPointCloud& cloud, const Vec3& x) {
  return nearest_surface_point(cloud, x).signed_distance;
}

inline Vec3 sdf_gradient(const OrientedPointCloud& cloud, const Vec3& x) {
  return cloud.normal(cloud.nearest_index(x));
}

/// Mean distance from each sample to its nearest other sample.
inline double mean_sampling_spacing(const OrientedPointCloud& cloud) {
  double total = 0.0;
  const auto& pts = cloud.points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) best = std::min(best, (pts[i] - pts[j]).squaredNorm());
    total += std::sqrt(best);
  }
  return total / static_cast<double>(pts.size());
}

// ---------------------------------------------------------------------------
// Convex hull volume

namespace detail {

struct HullFace {
  std::array<std::size_t, 3> v;
  Vec3 normal;
  double offset;
  bool alive;
};

/// Volume of the convex hull of `pts` by incremental construction.
/// Returns 0 for (near) coplanar input.
inline double convex_hull_volume(const std::vector<Vec3>& pts) {
  const std::size_t n = pts.size();
  if (n < 4) return 0.0;
  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double scale = std::max((hi - lo).norm(), 1e-300);
  const double eps = 1e-10 * scale;

  // Initial simplex.
  std::size_t i0 = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (pts[i].x() < pts[i0].x()) i0 = i;
  std::size_t i1 = i0;
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (pts[i] - pts[i0]).squaredNorm();
    if (d > best) best = d, i1 = i;
  }
  if (best <= eps * eps) return 0.0;
  const Vec3 dir = (pts[i1] - pts[i0]).normalized();
  std::size_t i2 = i0;
  best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (pts[i] - pts[i0]).cross(dir).norm();
    if (d > best) best = d, i2 = i;
  }
  if (best <= eps) return 0.0;
  const Vec3 pn = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]).normalized();
  std::size_t i3 = i0;
  best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(pn.dot(pts[i] - pts[i0]));
    if (d > best) best = d, i3 = i;
  }
  if (best <= eps) return 0.0;

  const Vec3 interior = (pts[i0] + pts[i1] + pts[i2] + pts[i3]) / 4.0;
  std::vector<HullFace> faces;
  auto add_face = [&](std::size_t a, std::size_t b, std::size_t c) {
    Vec3 nrm = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
    const double len = nrm.norm();
    if (len <= 0.0) return;
    nrm /= len;
    if (nrm.dot(interior - pts[a]) > 0.0) {
      std::swap(b, c);
      nrm = -nrm;
    }
    faces.push_back(HullFace{{a, b, c}, nrm, nrm.dot(pts[a]), true});
  };
  add_face(i0, i1, i2);
  add_face(i0, i1, i3);
  add_face(i0, i2, i3);
  add_face(i1, i2, i3);

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> visible;
  for (std::size_t p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    visible.clear();
    for (std::size_t f = 0; f < faces.size(); ++f)
      if (faces[f].alive && faces[f].normal.dot(pts[p]) - faces[f].offset > eps) visible.push_back(f);
    if (visible.empty()) continue;
    edges.clear();
    for (std::size_t f : visible) {
      const auto& v = faces[f].v;
      for (int k = 0; k < 3; ++k) edges.emplace_back(v[k], v[(k + 1) % 3]);
      faces[f].alive = false;
    }
    for (const auto& e : edges) {
      const bool shared = std::any_of(edges.begin(), edges.end(), [&](const auto& o) {
        return o.first == e.second && o.second == e.first;
      });
      if (!shared) add_face(e.first, e.second, p);
    }
    if (faces.size() > 8 * n) {
      faces.erase(std::remove_if(faces.begin(), faces.end(), [](const HullFace& f) { return !f.alive; }),
                  faces.end());
    }
  }
  double volume = 0.0;
  for (const auto& f : faces) {
    if (!f.alive) continue;
    const Vec3 a = pts[f.v[0]] - interior, b = pts[f.v[1]] - interior, c = pts[f.v[2]] - interior;
    volume += a.dot(b.cross(c)) / 6.0;
  }
  return std::abs(volume);
}

}  // namespace detail

struct MassProperties {
  double mass;
  Mat3 inertia;  // about the center of mass
  Vec3 center_of_mass;
};

constexpr double kDefaultDensity = 500.0;

/// Mass from the convex-hull volume; inertia from equal point masses at the
/// samples, taken about their centroid.
inline MassProperties estimate_mass_properties(const OrientedPointCloud& cloud,
                                               double density = kDefaultDensity) {
  if (!(density > 0.0)) throw Error(ErrorKind::InvalidArgument, "density must be positive");
  const double volume = detail::convex_hull_volume(cloud.points());
  if (volume < 1e-12)
    throw Error(ErrorKind::DegenerateGeometry, "convex hull volume below 1e-12 m^3");
  MassProperties mp;
  mp.mass = density * volume;
  mp.center_of_mass = cloud.centroid();
  mp.inertia.setZero();
  const double m = mp.mass / static_cast<double>(cloud.size());
  for (const auto& p : cloud.points()) {
    const Vec3 r = p - mp.center_of_mass;
    mp.inertia += m * (r.squaredNorm() * Mat3::Identity() - r * r.transpose());
  }
  mp.inertia = 0.5 * (mp.inertia + mp.inertia.transpose()).eval();
  return mp;
}

/// Farthest point sampling starting from `start`. Ties go to the lower index.
inline std::vector<std::size_t> farthest_point_indices(const OrientedPointCloud& cloud,
                                                       std::size_t n, std::size_t start) {
  if (n > cloud.size())
    throw Error(ErrorKind::InvalidArgument, "requested more samples than the cloud holds");
  std::vector<std::size_t> chosen;
  if (n == 0) return chosen;
  chosen.reserve(n);
  std::vector<double> dist(cloud.size(), std::numeric_limits<double>::infinity());
  std::size_t current = start;
  for (std::size_t k = 0; k < n; ++k) {
    chosen.push_back(current);
    dist[current] = -1.0;
    std::size_t next = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (dist[i] < 0.0) continue;
      dist[i] = std::min(dist[i], (cloud.point(i) - cloud.point(current)).squaredNorm());
      if (dist[i] > best) best = dist[i], next = i;
    }
    current = next;
  }
  return chosen;
}

inline OrientedPointCloud subset(const OrientedPointCloud& cloud, std::span<const std::size_t> idx) {
  std::vector<Vec3> p, nrm;
  p.reserve(idx.size());
  nrm.reserve(idx.size());
  for (auto i : idx) {
    p.push_back(cloud.point(i));
    nrm.push_back(cloud.normal(i));
  }
  return {std::move(p), std::move(nrm)};
}

/// Seeded farthest point sampling; the first sample is drawn uniformly.
inline OrientedPointCloud farthest_point_sample(const OrientedPointCloud& cloud, std::size_t n,
                                                std::uint64_t seed) {
  if (n > cloud.size())
    throw Error(ErrorKind::InvalidArgument, "requested more samples than the cloud holds");
  Rng rng = make_rng(seed);
  const auto idx = farthest_point_indices(cloud, n, uniform_index(rng, cloud.size()));
  return subset(cloud, idx);
}

}  // namespace contactsynth
