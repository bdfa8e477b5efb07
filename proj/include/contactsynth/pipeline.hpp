#pragma once

// Task files, contact proposals and the end-to-end synthesis run used by
// the command-line tool.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annotate.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "kinematics.hpp"
#include "primitives.hpp"
#include "proposal.hpp"
#include "refine.hpp"
#include "wrench.hpp"

namespace contactsynth {

enum class TaskKind { Motion, Wrench, Articulated, ForceClosure };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Motion: return "motion";
    case TaskKind::Wrench: return "wrench";
    case TaskKind::Articulated: return "articulated";
    case TaskKind::ForceClosure: return "force_closure";
  }
  return "unknown";
}

struct Task {
  TaskKind kind = TaskKind::Wrench;
  TaskProjection projection;
  std::optional<TaskMotion> motion;
  std::vector<ArticulatedJoint> joints;
};

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// Line on which `"key"` first appears, or 1.
inline std::size_t line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find('"' + key + '"');
  return pos == std::string::npos ? 1 : line_of_offset(text, pos);
}

inline std::vector<double> numbers(const nlohmann::json& j, const std::string& key, std::size_t n) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != n) throw std::invalid_argument(key + " needs " + std::to_string(n) + " values");
  return v;
}

}  // namespace detail

/// Parses a task description. Accepted forms:
///   {"dx": [3], "dtheta": [3], "dt": s}       target motion
///   {"wrench": [6]}                            target wrench
///   {"joint": {"type", "axis", "origin"}, "torque": t}  or "joints"/[t...]
///   {"force_closure": true}
inline Task parse_task(const std::string& text, const std::filesystem::path& path, const MassProperties& mp) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError,
                detail::parse_error_at(path, detail::line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), e.what()));
  }
  std::string key;
  try {
    Task t;
    if (!j.is_object()) throw std::invalid_argument("task must be a JSON object");
    if (j.contains("wrench")) {
      key = "wrench";
      const auto w = detail::numbers(j, key, 6);
      t.kind = TaskKind::Wrench;
      t.projection = TaskProjection::free_object(Wrench(w.data()));
    } else if (j.contains("dx") || j.contains("dtheta")) {
      key = j.contains("dx") ? "dx" : "dtheta";
      TaskMotion m;
      m.dx = j.contains("dx") ? Vec3(detail::numbers(j, "dx", 3).data()) : Vec3::Zero();
      key = "dtheta";
      m.dtheta = j.contains("dtheta") ? Vec3(detail::numbers(j, "dtheta", 3).data()) : Vec3::Zero();
      key = "dt";
      m.dt = j.value("dt", 1.0);
      if (!(m.dt > 0.0)) throw std::invalid_argument("dt must be positive");
      t.kind = TaskKind::Motion;
      t.motion = m;
      t.projection = TaskProjection::free_object(target_wrench(m.dx, m.dtheta, mp, m.dt));
    } else if (j.contains("joint") || j.contains("joints")) {
      key = j.contains("joint") ? "joint" : "joints";
      const nlohmann::json list = j.contains("joint") ? nlohmann::json::array({j.at("joint")}) : j.at("joints");
      for (const auto& jj : list) {
        ArticulatedJoint a;
        const std::string type = jj.value("type", std::string("revolute"));
        if (type == "revolute") a.type = ArticulatedJoint::Type::Revolute;
        else if (type == "prismatic") a.type = ArticulatedJoint::Type::Prismatic;
        else throw std::invalid_argument("joint type must be revolute or prismatic");
        a.axis = Vec3(detail::numbers(jj, "axis", 3).data());
        a.origin = jj.contains("origin") ? Vec3(detail::numbers(jj, "origin", 3).data()) : Vec3::Zero();
        t.joints.push_back(a);
      }
      key = "torque";
      std::vector<double> tau;
      if (j.at("torque").is_array()) tau = j.at("torque").get<std::vector<double>>();
      else tau = {j.at("torque").get<double>()};
      if (tau.size() != t.joints.size()) throw std::invalid_argument("torque needs one value per joint");
      t.kind = TaskKind::Articulated;
      t.projection.matrix = joint_projection(t.joints).matrix;
      t.projection.target = Eigen::Map<const Eigen::VectorXd>(tau.data(), static_cast<Eigen::Index>(tau.size()));
    } else if (j.value("force_closure", false)) {
      key = "force_closure";
      t.kind = TaskKind::ForceClosure;
      t.projection = TaskProjection::free_object(Wrench::Zero());
    } else {
      throw std::invalid_argument("expected one of wrench, dx/dtheta, joint(s), force_closure");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, detail::parse_error_at(path, detail::line_of_key(text, key), e.what()));
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorKind::ParseError, detail::parse_error_at(path, detail::line_of_key(text, key), e.what()));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) throw;
    throw Error(e.kind(), detail::parse_error_at(path, detail::line_of_key(text, key), e.what()));
  }
}

inline Task load_task(const std::filesystem::path& path, const MassProperties& mp) {
  std::ifstream in = detail::open_input(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_task(text, path, mp);
}

inline nlohmann::json task_to_json(const Task& t) {
  nlohmann::json j;
  j["kind"] = to_string(t.kind);
  j["target"] = std::vector<double>(t.projection.target.data(), t.projection.target.data() + t.projection.target.size());
  if (t.motion) {
    j["dx"] = detail::vec_json(t.motion->dx);
    j["dtheta"] = detail::vec_json(t.motion->dtheta);
    j["dt"] = t.motion->dt;
  }
  return j;
}

/// Object argument: a point-cloud file, or `shape:a,b,c` naming a primitive
/// (e.g. `sphere:0.05`, `box:0.06,0.06,0.06`, `cylinder:0.03,0.08`).
inline OrientedPointCloud load_object(const std::string& arg) {
  if (std::filesystem::exists(arg)) return load_point_cloud(arg);
  const auto colon = arg.find(':');
  if (colon == std::string::npos) throw Error(ErrorKind::IoError, "cannot open '" + arg + "'");
  PrimitiveSpec ps;
  ps.shape = arg.substr(0, colon);
  std::stringstream ss(arg.substr(colon + 1));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      ps.size.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "bad primitive size '" + tok + "' in '" + arg + "'");
    }
  }
  if (ps.shape != "sphere" && ps.shape != "box" && ps.shape != "cylinder")
    throw Error(ErrorKind::IoError, "cannot open '" + arg + "'");
  try {
    return make_primitive(ps);
  } catch (const Error& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
}

// ---------------------------------------------------------------------------
// Proposals

struct Proposal {
  ContactSolution contacts;
  ContactHeatmap predicted;
  PalmInit init;
  std::string source;  // "heatmap" or "auto"
  std::size_t attempts = 0;
};

/// Contacts from a heatmap file (score + force per point) by NMS over `mask`.
inline Proposal propose_from_heatmap(const HandModel& hand, const OrientedPointCloud& cloud, const HeatmapFile& h,
                                     const RegionMask& mask, const ProposalParams& p) {
  if (h.scores.size() != cloud.size())
    throw Error(ErrorKind::InvalidArgument, "heatmap has " + std::to_string(h.scores.size()) + " rows, cloud has " +
                                                std::to_string(cloud.size()) + " points");
  Proposal out;
  out.source = "heatmap";
  out.predicted = clamped(ContactHeatmap{h.scores});
  const ForceMap fm{h.vectors};
  out.contacts = make_contact_solution(
      cloud, select_contacts_nms(cloud, out.predicted, mask, hand.num_fingertips(), p.nms_radius), &fm);
  out.init = init_palm_pose(hand, cloud, out.contacts, out.predicted, p);
  return out;
}

/// Annotator-style contacts: draws palm poses until `keep` usable examples
/// exist (at most `attempts` draws) and keeps the one whose fingertip
/// contacts best realize the task.
inline Proposal propose_auto(const HandModel& hand, const OrientedPointCloud& cloud, const MassProperties& mp,
                             const Task& task, double mu, std::uint64_t seed, const Config& cfg,
                             std::size_t attempts = 2048, std::size_t keep = 16) {
  std::optional<TrainingExample> best;
  double best_res = std::numeric_limits<double>::infinity();
  Proposal out;
  out.source = "auto";
  std::size_t usable = 0;
  for (std::size_t a = 0; a < attempts && usable < keep; ++a) {
    auto ex = sample_example(hand, cloud, mp, mu, seed, a, cfg.annotate);
    out.attempts = a + 1;
    if (!ex) continue;
    double r;
    try {
      const auto maps = grasp_maps(ex->contact_points, cloud, mu);
      r = optimal_contact_forces(maps, task.projection, cfg.refine.facets, cfg.refine.qp).residual_norm();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SolverFailure) throw;
      continue;
    }
    ++usable;
    if (r < best_res) {
      best_res = r;
      best = std::move(ex);
    }
    if (best_res < cfg.refine.residual_tol) break;
  }
  if (!best) throw Error(ErrorKind::EmptySelection, "no feasible contact sample in " + std::to_string(attempts) + " attempts");
  out.predicted = best->heatmap;
  out.contacts = make_contact_solution(cloud, best->contact_indices, &best->force_map);
  out.init = init_palm_pose(hand, cloud, out.contacts, out.predicted, cfg.proposal);
  return out;
}

inline nlohmann::json vec3_list(const std::vector<Vec3>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& x : v) a.push_back(detail::vec_json(x));
  return a;
}

inline nlohmann::json proposal_to_json(const Proposal& p) {
  return {{"source", p.source},
          {"attempts", p.attempts},
          {"contacts", {{"indices", p.contacts.indices}, {"points", vec3_list(p.contacts.points)},
                        {"forces", vec3_list(p.contacts.forces)}}},
          {"q0", config_to_json(p.init.q0)},
          {"iou", p.init.iou},
          {"assignment", p.init.assignment},
          {"candidates", p.init.candidates},
          {"fallback", p.init.fallback}};
}

// ---------------------------------------------------------------------------
// Refinement reports

inline nlohmann::json check_to_json(const GraspCheck& c) {
  return {{"residual_norm", c.residual_norm},
          {"max_surface_distance", c.max_surface_distance},
          {"max_sphere_penetration", c.max_sphere_penetration},
          {"max_pair_overlap", c.max_pair_overlap}};
}

/// Refinement under any task kind; force closure adds the 12-wrench test.
inline RefinementResult refine_task(const HandModel& hand, const OrientedPointCloud& cloud, const Task& task,
                                    const RefinementOptions& opt, const JointConfig& q0) {
  if (task.kind == TaskKind::ForceClosure) return force_closure_refine(hand, cloud, opt, q0);
  return refine_grasp(RefinementProblem{hand, cloud, task.projection, opt}, q0);
}

inline nlohmann::json refinement_to_json(const RefinementResult& r) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : r.history)
    hist.push_back({{"residual_norm", h.residual_norm}, {"sum_phi_squared", h.sum_phi_squared},
                    {"max_penetration", h.max_penetration}});
  nlohmann::json j = {{"status", to_string(r.status)},
                      {"iterations", r.iterations},
                      {"q_star", config_to_json(r.q_star)},
                      {"forces", vec3_list(r.forces.forces)},
                      {"residual", std::vector<double>(r.forces.residual.data(),
                                                       r.forces.residual.data() + r.forces.residual.size())},
                      {"history", hist}};
  if (r.force_closure) j["force_closure"] = *r.force_closure;
  if (!r.message.empty()) j["message"] = r.message;
  return j;
}

/// True when the refinement result meets every convergence requirement of
/// its task, re-verified from fresh kinematics.
inline bool refinement_succeeded(const RefinementResult& r, const GraspCheck& c, const RefinementOptions& opt) {
  if (r.status != RefinementStatus::Converged) return false;
  if (r.force_closure && !*r.force_closure) return false;
  return c.residual_norm < opt.residual_tol && c.max_surface_distance < opt.surface_tol &&
         c.max_sphere_penetration <= opt.penetration_tol && c.max_pair_overlap <= opt.penetration_tol;
}

/// Point-wise scalars for external plotting: position, mask bit, predicted
/// score, score induced by the final fingertips, signed distance to the
/// nearest fingertip.
inline void dump_debug(const std::filesystem::path& path, const OrientedPointCloud& cloud, const RegionMask* mask,
                       const ContactHeatmap* predicted, const std::vector<Vec3>& tips, double sigma) {
  auto out = detail::open_output(path);
  const ContactHeatmap final_map = contact_heatmap_from_pose(cloud, tips, sigma);
  out << "# x y z mask predicted final tip_distance\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& t : tips) d = std::min(d, (t - cloud.point(i)).norm());
    const Vec3& p = cloud.point(i);
    out << detail::exact(p.x()) << ' ' << detail::exact(p.y()) << ' ' << detail::exact(p.z()) << ' '
        << (mask ? static_cast<int>(mask->allowed[i]) : 1) << ' '
        << detail::exact(predicted ? predicted->scores[i] : 0.0) << ' ' << detail::exact(final_map.scores[i]) << ' '
        << detail::exact(d) << '\n';
  }
}

}  // namespace contactsynth
