#pragma once

// Text file formats: oriented point clouds (xyz + normal, or ASCII PLY),
// heatmap/force-map files and region-mask files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace contactsynth {

namespace detail {

inline std::string parse_error_at(const std::filesystem::path& path, std::size_t line,
                                  const std::string& msg) {
  return path.string() + ":" + std::to_string(line) + ": " + msg;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
  return out;
}

/// Shortest decimal text that parses back to the same double.
inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool blank_or_comment(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

inline std::vector<double> parse_numbers(const std::string& line, const std::filesystem::path& path,
                                         std::size_t lineno, std::size_t expected) {
  std::istringstream ss(line);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    if (tok[0] == '#') break;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, parse_error_at(path, lineno, "bad number '" + tok + "'"));
    }
  }
  if (out.size() != expected)
    throw Error(ErrorKind::ParseError,
                parse_error_at(path, lineno,
                               "expected " + std::to_string(expected) + " values, got " +
                                   std::to_string(out.size())));
  return out;
}

inline OrientedPointCloud finish_cloud(std::vector<Vec3> p, std::vector<Vec3> n,
                                       const std::filesystem::path& path,
                                       const std::vector<std::size_t>& lines) {
  for (std::size_t i = 0; i < n.size(); ++i)
    if (n[i].norm() < 1e-12)
      throw Error(ErrorKind::ParseError, parse_error_at(path, lines[i], "zero normal"));
  try {
    return OrientedPointCloud(std::move(p), std::move(n));
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

inline OrientedPointCloud load_ply(std::ifstream& in, const std::filesystem::path& path) {
  std::string line;
  std::size_t lineno = 1, vertices = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii")
        throw Error(ErrorKind::ParseError, parse_error_at(path, lineno, "only ASCII PLY is supported"));
    } else if (word == "element") {
      std::string name;
      ss >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ss >> vertices;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ss >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  auto find = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return i;
    throw Error(ErrorKind::ParseError, path.string() + ": PLY lacks vertex property '" + name + "'");
  };
  const std::size_t ix = find("x"), iy = find("y"), iz = find("z");
  const std::size_t inx = find("nx"), iny = find("ny"), inz = find("nz");
  std::vector<Vec3> p, n;
  std::vector<std::size_t> lines;
  while (p.size() < vertices && std::getline(in, line)) {
    ++lineno;
    if (blank_or_comment(line)) continue;
    const auto v = parse_numbers(line, path, lineno, props.size());
    p.emplace_back(v[ix], v[iy], v[iz]);
    n.emplace_back(v[inx], v[iny], v[inz]);
    lines.push_back(lineno);
  }
  if (p.size() != vertices)
    throw Error(ErrorKind::ParseError, path.string() + ": PLY ended before all vertices were read");
  return finish_cloud(std::move(p), std::move(n), path, lines);
}

}  // namespace detail

/// Loads `x y z nx ny nz` records (with `#` comments) or an ASCII PLY with
/// normal properties. Normals are normalized; zero normals are rejected.
inline OrientedPointCloud load_point_cloud(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<Vec3> p, n;
  std::vector<std::size_t> lines;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("ply", 0) == 0) return detail::load_ply(in, path);
    if (detail::blank_or_comment(line)) continue;
    const auto v = detail::parse_numbers(line, path, lineno, 6);
    p.emplace_back(v[0], v[1], v[2]);
    n.emplace_back(v[3], v[4], v[5]);
    lines.push_back(lineno);
  }
  return detail::finish_cloud(std::move(p), std::move(n), path, lines);
}

inline void save_point_cloud(const OrientedPointCloud& cloud, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << "# x y z nx ny nz\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.point(i);
    const auto& n = cloud.normal(i);
    out << detail::exact(p.x()) << ' ' << detail::exact(p.y()) << ' ' << detail::exact(p.z()) << ' '
        << detail::exact(n.x()) << ' ' << detail::exact(n.y()) << ' ' << detail::exact(n.z()) << '\n';
  }
}

/// Per-point contact score and 3-D force/motion vector.
struct HeatmapFile {
  std::vector<double> scores;
  std::vector<Vec3> vectors;
};

inline HeatmapFile load_heatmap_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  HeatmapFile h;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_or_comment(line)) continue;
    const auto v = detail::parse_numbers(line, path, lineno, 4);
    h.scores.push_back(v[0]);
    h.vectors.emplace_back(v[1], v[2], v[3]);
  }
  return h;
}

inline void save_heatmap_file(const HeatmapFile& h, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  for (std::size_t i = 0; i < h.scores.size(); ++i) {
    out << detail::exact(h.scores[i]) << ' ' << detail::exact(h.vectors[i].x()) << ' '
        << detail::exact(h.vectors[i].y()) << ' ' << detail::exact(h.vectors[i].z()) << '\n';
  }
}

inline std::vector<bool> load_mask_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<bool> mask;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_or_comment(line)) continue;
    const auto v = detail::parse_numbers(line, path, lineno, 1);
    if (v[0] != 0.0 && v[0] != 1.0)
      throw Error(ErrorKind::ParseError, detail::parse_error_at(path, lineno, "mask value must be 0 or 1"));
    mask.push_back(v[0] == 1.0);
  }
  return mask;
}

inline void save_mask_file(const std::vector<bool>& mask, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  for (bool b : mask) out << (b ? "1\n" : "0\n");
}

}  // namespace contactsynth
