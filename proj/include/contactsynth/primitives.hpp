#pragma once

// Sampled primitive shapes used by tests, the evaluation suite and the CLI.

#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace contactsynth {

/// Fibonacci-lattice sphere of radius `r` centered at the origin.
inline OrientedPointCloud make_sphere(double r, std::size_t n) {
  std::vector<Vec3> p(n), nrm(n);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    nrm[i] = Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
    p[i] = r * nrm[i];
  }
  return {std::move(p), std::move(nrm)};
}

/// Axis-aligned box with full extents `size`, sampled on a grid of roughly
/// `spacing` per face. Edge and corner samples appear once, with the
/// normalized sum of the adjoining face normals.
inline OrientedPointCloud make_box(const Vec3& size, double spacing) {
  std::vector<Vec3> p, nrm;
  const Vec3 h = 0.5 * size;
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    const int nu = std::max(1, static_cast<int>(std::ceil(size[u] / spacing)));
    const int nv = std::max(1, static_cast<int>(std::ceil(size[v] / spacing)));
    for (int side = -1; side <= 1; side += 2) {
      for (int a = 0; a <= nu; ++a) {
        for (int b = 0; b <= nv; ++b) {
          Vec3 x;
          x[axis] = side * h[axis];
          x[u] = -h[u] + size[u] * a / nu;
          x[v] = -h[v] + size[v] * b / nv;
          Vec3 n = Vec3::Zero();
          bool owner = true;
          for (int k = 0; k < 3; ++k) {
            if (std::abs(x[k]) != h[k]) continue;
            n[k] = x[k] > 0 ? 1.0 : -1.0;
            if (k < axis) owner = false;
          }
          if (!owner) continue;
          p.push_back(x);
          nrm.push_back(n.normalized());
        }
      }
    }
  }
  return {std::move(p), std::move(nrm)};
}

/// Cylinder along z with radius `r` and height `h`, side and caps sampled.
inline OrientedPointCloud make_cylinder(double r, double h, double spacing) {
  std::vector<Vec3> p, nrm;
  const int around = std::max(8, static_cast<int>(std::ceil(2.0 * M_PI * r / spacing)));
  const int along = std::max(1, static_cast<int>(std::ceil(h / spacing)));
  for (int i = 0; i <= along; ++i) {
    const double z = -0.5 * h + h * i / along;
    for (int k = 0; k < around; ++k) {
      const double a = 2.0 * M_PI * k / around;
      p.emplace_back(r * std::cos(a), r * std::sin(a), z);
      nrm.emplace_back(std::cos(a), std::sin(a), 0.0);
    }
  }
  const int rings = std::max(1, static_cast<int>(std::ceil(r / spacing)));
  for (int side = -1; side <= 1; side += 2) {
    p.emplace_back(0.0, 0.0, side * 0.5 * h);
    nrm.emplace_back(0.0, 0.0, side);
    for (int j = 1; j <= rings; ++j) {
      const double rr = r * j / (rings + 0.5);
      const int count = std::max(6, static_cast<int>(std::ceil(2.0 * M_PI * rr / spacing)));
      for (int k = 0; k < count; ++k) {
        const double a = 2.0 * M_PI * k / count;
        p.emplace_back(rr * std::cos(a), rr * std::sin(a), side * 0.5 * h);
        nrm.emplace_back(0.0, 0.0, side);
      }
    }
  }
  return {std::move(p), std::move(nrm)};
}

/// Description of a primitive object, e.g. as listed in a suite file.
struct PrimitiveSpec {
  std::string shape;         // sphere | box | cylinder
  std::vector<double> size;  // sphere: {r}; box: {x, y, z}; cylinder: {r, h}
  double spacing = 0.005;    // target sample spacing (m)
};

inline OrientedPointCloud make_primitive(const PrimitiveSpec& spec) {
  const auto need = [&](std::size_t k) {
    if (spec.size.size() != k)
      throw Error(ErrorKind::ConfigError, spec.shape + " needs " + std::to_string(k) + " size values");
  };
  if (spec.shape == "sphere") {
    need(1);
    const double r = spec.size[0];
    const auto n = static_cast<std::size_t>(std::ceil(4.0 * M_PI * r * r / (spec.spacing * spec.spacing)));
    return make_sphere(r, std::max<std::size_t>(n, 64));
  }
  if (spec.shape == "box") {
    need(3);
    return make_box(Vec3(spec.size[0], spec.size[1], spec.size[2]), spec.spacing);
  }
  if (spec.shape == "cylinder") {
    need(2);
    return make_cylinder(spec.size[0], spec.size[1], spec.spacing);
  }
  throw Error(ErrorKind::ConfigError, "unknown primitive shape '" + spec.shape + "'");
}

}  // namespace contactsynth
