#pragma once

// Tunable constants gathered in one place, with JSON overrides.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "annotate.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "planner.hpp"
#include "proposal.hpp"
#include "refine.hpp"

namespace contactsynth {

struct Config {
  double density = kDefaultDensity;
  ProposalParams proposal;
  RefinementOptions refine;
  BaselineParams baseline;
  AnnotateParams annotate;
  PlannerParams planner;
};

namespace detail {

using ConfigSetter = std::function<void(Config&, const nlohmann::json&)>;

template <class T>
ConfigSetter setter(std::function<void(Config&, T)> f) {
  return [f](Config& c, const nlohmann::json& v) { f(c, v.get<T>()); };
}

inline const std::map<std::string, ConfigSetter>& config_keys() {
  static const std::map<std::string, ConfigSetter> keys = {
      {"heatmap_sigma", setter<double>([](Config& c, double v) {
         c.proposal.heatmap_sigma = v;
         c.annotate.heatmap_sigma = v;
       })},
      {"iou_threshold", setter<double>([](Config& c, double v) { c.proposal.iou_threshold = v; })},
      {"nms_radius", setter<double>([](Config& c, double v) { c.proposal.nms_radius = v; })},
      {"s_q", setter<double>([](Config& c, double v) { c.refine.trust.s_q = v; })},
      {"s_f", setter<double>([](Config& c, double v) { c.refine.trust.s_f = v; })},
      {"facets", setter<int>([](Config& c, int v) {
         c.refine.facets = v;
         c.baseline.facets = v;
       })},
      {"alpha", setter<double>([](Config& c, double v) { c.planner.alpha = v; })},
      {"step", setter<double>([](Config& c, double v) { c.planner.step = v; })},
      {"density", setter<double>([](Config& c, double v) {
         c.density = v;
         c.annotate.density = v;
       })},
      {"mu", setter<double>([](Config& c, double v) { c.refine.mu = v; })},
      {"max_iters", setter<int>([](Config& c, int v) { c.refine.max_iters = v; })},
      {"slack_weight", setter<double>([](Config& c, double v) { c.refine.slack_weight = v; })},
      {"damping", setter<double>([](Config& c, double v) { c.refine.damping = v; })},
      {"qp_max_iter", setter<int>([](Config& c, int v) { c.refine.qp.max_iter = v; })},
      {"goal_tol", setter<double>([](Config& c, double v) { c.planner.goal_tol = v; })},
      {"max_samples", setter<std::size_t>([](Config& c, std::size_t v) { c.planner.max_samples = v; })},
      {"shortcut_attempts", setter<std::size_t>([](Config& c, std::size_t v) { c.planner.shortcut_attempts = v; })},
      {"standoff_min", setter<double>([](Config& c, double v) { c.annotate.standoff_min = v; })},
      {"standoff_max", setter<double>([](Config& c, double v) { c.annotate.standoff_max = v; })},
      {"targets_per_finger", setter<std::size_t>([](Config& c, std::size_t v) { c.annotate.targets_per_finger = v; })},
      {"force_min", setter<double>([](Config& c, double v) { c.annotate.force_min = v; })},
      {"force_max", setter<double>([](Config& c, double v) { c.annotate.force_max = v; })},
      {"vicinity", setter<double>([](Config& c, double v) { c.annotate.vicinity = v; })},
      {"ik_damping", setter<double>([](Config& c, double v) { c.annotate.ik.damping = v; })},
      {"ik_iterations", setter<int>([](Config& c, int v) { c.annotate.ik.max_iter = v; })},
      {"contact_threshold", setter<double>([](Config& c, double v) { c.baseline.contact_threshold = v; })},
      {"travel_bound", setter<double>([](Config& c, double v) { c.baseline.travel_bound = v; })},
  };
  return keys;
}

}  // namespace detail

inline void validate(const Config& c) {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw Error(ErrorKind::ConfigError, std::string(name) + " must be positive");
  };
  positive(c.density, "density");
  positive(c.proposal.heatmap_sigma, "heatmap_sigma");
  positive(c.proposal.nms_radius, "nms_radius");
  positive(c.refine.trust.s_q, "s_q");
  positive(c.refine.trust.s_f, "s_f");
  positive(c.planner.alpha, "alpha");
  positive(c.planner.step, "step");
  if (c.refine.facets < 3) throw Error(ErrorKind::ConfigError, "facets must be at least 3");
  if (c.refine.mu < 0.0) throw Error(ErrorKind::ConfigError, "mu must be non-negative");
  if (c.annotate.standoff_min > c.annotate.standoff_max || c.annotate.force_min > c.annotate.force_max)
    throw Error(ErrorKind::ConfigError, "range bounds out of order");
}

/// Applies every key of `j` onto `c`. Unknown keys and mistyped values are errors.
inline void apply_overrides(Config& c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
  const auto& keys = detail::config_keys();
  for (const auto& [k, v] : j.items()) {
    const auto it = keys.find(k);
    if (it == keys.end()) throw Error(ErrorKind::ConfigError, "unknown config key '" + k + "'");
    try {
      it->second(c, v);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::ConfigError, "config key '" + k + "' has the wrong type");
    }
  }
  validate(c);
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  Config c;
  apply_overrides(c, j);
  return c;
}

inline nlohmann::json settings_to_json(const Config& c) {
  return {{"heatmap_sigma", c.proposal.heatmap_sigma},
          {"iou_threshold", c.proposal.iou_threshold},
          {"nms_radius", c.proposal.nms_radius},
          {"s_q", c.refine.trust.s_q},
          {"s_f", c.refine.trust.s_f},
          {"facets", c.refine.facets},
          {"alpha", c.planner.alpha},
          {"step", c.planner.step},
          {"density", c.density},
          {"mu", c.refine.mu},
          {"max_iters", c.refine.max_iters},
          {"slack_weight", c.refine.slack_weight},
          {"damping", c.refine.damping},
          {"qp_max_iter", c.refine.qp.max_iter},
          {"goal_tol", c.planner.goal_tol},
          {"max_samples", c.planner.max_samples},
          {"shortcut_attempts", c.planner.shortcut_attempts},
          {"standoff_min", c.annotate.standoff_min},
          {"standoff_max", c.annotate.standoff_max},
          {"targets_per_finger", c.annotate.targets_per_finger},
          {"force_min", c.annotate.force_min},
          {"force_max", c.annotate.force_max},
          {"vicinity", c.annotate.vicinity},
          {"ik_damping", c.annotate.ik.damping},
          {"ik_iterations", c.annotate.ik.max_iter},
          {"contact_threshold", c.baseline.contact_threshold},
          {"travel_bound", c.baseline.travel_bound}};
}

}  // namespace contactsynth
