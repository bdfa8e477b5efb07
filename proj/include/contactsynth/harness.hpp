#pragma once

/**
 * @file
 * @brief Batch evaluation: reference grasps from the annotator, palm pulled
 * back and randomly perturbed, then refinement and the direct-grasp
 * baseline judged by residual, surface distance and intersection checks
 * recomputed from scratch.
 */

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "annotate.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "kinematics.hpp"
#include "primitives.hpp"
#include "proposal.hpp"
#include "refine.hpp"
#include "rng.hpp"
#include "wrench.hpp"

namespace contactsynth {

constexpr int kReportSchemaVersion = 1;

enum class EvalMode { TaskOriented, ForceClosure };

struct SuiteObject {
  std::string id;
  PrimitiveSpec primitive;
  std::string file;  // used instead of `primitive` when non-empty
};

struct EvalSuite {
  std::string name = "desk";
  std::vector<SuiteObject> objects;
  std::vector<std::string> hands;
  std::size_t trials = 10;
  EvalMode mode = EvalMode::TaskOriented;
  std::uint64_t seed = 1;
  double mu = 0.5;
  double max_rotation_deg = 60.0;
  double max_translation = 0.05;
  double standoff = 0.30;
  bool baseline = true;
  std::size_t reference_attempts = 400;
  RefinementOptions refine;
  AnnotateParams annotate;
  BaselineParams baseline_params;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Twenty primitives sized for the shipped hands.
inline std::vector<SuiteObject> desk_objects() {
  std::vector<SuiteObject> objs;
  for (double r : {0.030, 0.035, 0.040, 0.045, 0.050, 0.055, 0.060}) {
    char id[32];
    std::snprintf(id, sizeof id, "sphere_%03d", static_cast<int>(std::lround(r * 1000)));
    objs.push_back({id, {"sphere", {r}, 0.005}, {}});
  }
  const double boxes[7][3] = {{0.05, 0.05, 0.05}, {0.06, 0.06, 0.06}, {0.07, 0.05, 0.05}, {0.08, 0.06, 0.04},
                              {0.05, 0.05, 0.09}, {0.09, 0.07, 0.05}, {0.10, 0.06, 0.06}};
  for (const auto& b : boxes) {
    char id[48];
    std::snprintf(id, sizeof id, "box_%02dx%02dx%02d", static_cast<int>(std::lround(b[0] * 100)),
                  static_cast<int>(std::lround(b[1] * 100)), static_cast<int>(std::lround(b[2] * 100)));
    objs.push_back({id, {"box", {b[0], b[1], b[2]}, 0.005}, {}});
  }
  const double cyls[6][2] = {{0.025, 0.08}, {0.03, 0.06}, {0.035, 0.10}, {0.04, 0.05}, {0.045, 0.08}, {0.05, 0.06}};
  for (const auto& c : cyls) {
    char id[48];
    std::snprintf(id, sizeof id, "cylinder_r%02d_h%02d", static_cast<int>(std::lround(c[0] * 1000)),
                  static_cast<int>(std::lround(c[1] * 100)));
    objs.push_back({id, {"cylinder", {c[0], c[1]}, 0.005}, {}});
  }
  return objs;
}

inline EvalSuite default_desk_suite(const std::string& hand_path) {
  EvalSuite s;
  s.objects = desk_objects();
  s.hands = {hand_path};
  return s;
}

/// Values recomputed from a configuration, independent of solver state.
struct Judgement {
  double residual = 0.0;
  double max_surface_distance = 0.0;
  double max_penetration = 0.0;
  double max_pair_overlap = 0.0;
  bool residual_ok = false;
  bool surface_ok = false;
  bool intersection_free = false;
  std::optional<bool> force_closure;
  bool success = false;
};

constexpr double kSuccessResidual = 1e-6;
constexpr double kSuccessSurface = 0.005;
constexpr double kIntersectionTol = 1e-4;

/// Applies the success thresholds to a finished grasp check.
inline Judgement judge_check(const GraspCheck& c) {
  Judgement j;
  j.residual = c.residual_norm;
  j.max_surface_distance = c.max_surface_distance;
  j.max_penetration = std::max(0.0, c.max_sphere_penetration);
  j.max_pair_overlap = std::max(0.0, c.max_pair_overlap);
  j.residual_ok = j.residual < kSuccessResidual;
  j.surface_ok = j.max_surface_distance < kSuccessSurface;
  j.intersection_free = j.max_penetration <= kIntersectionTol && j.max_pair_overlap <= kIntersectionTol;
  j.success = j.residual_ok && j.surface_ok && j.intersection_free;
  return j;
}

inline Judgement judge_grasp(const HandModel& hand, const OrientedPointCloud& cloud, const JointConfig& q,
                             const TaskProjection& task, double mu, EvalMode mode, int facets = kDefaultPyramidFacets) {
  Judgement j;
  GraspCheck c;
  try {
    c = verify_grasp(hand, cloud, q, task, mu, facets);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SolverFailure) throw;
    // The geometric checks still apply; the residual is unknown.
    c = verify_grasp_geometry(hand, cloud, q);
    c.residual_norm = std::numeric_limits<double>::infinity();
  }
  j = judge_check(c);
  if (mode == EvalMode::ForceClosure) {
    j.force_closure = is_force_closure(grasp_maps(fingertip_positions(hand, q), cloud, mu), facets);
    j.success = j.success && *j.force_closure;
  }
  return j;
}

struct MethodOutcome {
  std::string status;  // Converged | IterationLimit | SolverFailure | Completed | NoContact | NoReference
  int iterations = 0;
  bool converged = false;
  Judgement judgement;
  bool success = false;
};

struct TrialOutcome {
  std::string object;
  std::string hand;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  bool reference_found = false;
  std::size_t reference_attempt = 0;
  Wrench target = Wrench::Zero();
  Isometry start = Isometry::Identity();
  MethodOutcome refine;
  std::optional<MethodOutcome> baseline;
};

struct MethodTotals {
  std::size_t trials = 0;
  std::size_t successes = 0;
  std::size_t converged = 0;
  double rate() const { return trials ? static_cast<double>(successes) / static_cast<double>(trials) : 0.0; }
};

struct EvalReport {
  EvalSuite suite;
  std::vector<TrialOutcome> trials;

  MethodTotals totals(bool baseline, const std::string& object = {}) const {
    MethodTotals t;
    for (const auto& tr : trials) {
      if (!object.empty() && tr.object != object) continue;
      const MethodOutcome* m = baseline ? (tr.baseline ? &*tr.baseline : nullptr) : &tr.refine;
      if (!m) continue;
      ++t.trials;
      t.successes += m->success;
      t.converged += m->converged;
    }
    return t;
  }
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline OrientedPointCloud load_suite_object(const SuiteObject& o);

namespace detail {

inline std::uint64_t trial_seed(std::uint64_t master, std::size_t hand, std::size_t object, std::size_t trial) {
  return derive_seed(master, (static_cast<std::uint64_t>(hand) << 40) | (static_cast<std::uint64_t>(object) << 20) |
                                 static_cast<std::uint64_t>(trial));
}

}  // namespace detail

/// Pulls the palm back along its approach axis, then applies a rotation of
/// at most `max_rotation_deg` about the palm origin and a translation of at
/// most `max_translation`.
inline Isometry perturbed_start(const Isometry& reference, double standoff, double max_rotation_deg,
                                double max_translation, Rng& rng) {
  Isometry t = reference;
  t.translation() -= standoff * reference.linear().col(2);
  const Vec3 axis = random_unit_vector(rng);
  const double angle = uniform(rng, 0.0, max_rotation_deg * M_PI / 180.0);
  t.linear() = so3_exp(angle * axis) * t.linear();
  const Vec3 dir = random_unit_vector(rng);
  t.translation() += uniform(rng, 0.0, max_translation) * dir;
  return t;
}

inline TrialOutcome run_trial(const EvalSuite& suite, const HandModel& hand, const OrientedPointCloud& cloud,
                              const MassProperties& mp, const std::string& object_id, std::size_t trial,
                              std::uint64_t seed) {
  TrialOutcome out;
  out.object = object_id;
  out.hand = hand.name();
  out.trial = trial;
  out.seed = seed;
  const EvalMode mode = suite.mode;
  const int facets = suite.refine.facets;

  std::optional<TrainingExample> ref;
  for (std::size_t a = 0; a < suite.reference_attempts && !ref; ++a) {
    auto ex = sample_example(hand, cloud, mp, suite.mu, seed, a, suite.annotate);
    if (!ex) continue;
    const Wrench target = mode == EvalMode::TaskOriented ? Wrench(ex->wrench.normalized()) : Wrench::Zero();
    const Judgement j = judge_grasp(hand, cloud, ex->q, TaskProjection::free_object(target), suite.mu, mode, facets);
    if (!j.success) continue;
    ref = std::move(ex);
    out.reference_attempt = a;
    out.target = target;
  }
  if (!ref) {
    out.refine.status = "NoReference";
    if (suite.baseline) out.baseline = MethodOutcome{"NoReference", 0, false, {}, false};
    return out;
  }
  out.reference_found = true;
  const TaskProjection task = TaskProjection::free_object(out.target);

  Rng rng = make_rng(seed, std::uint64_t{1} << 32);
  out.start = perturbed_start(ref->q.base_transform(), suite.standoff, suite.max_rotation_deg, suite.max_translation, rng);
  JointConfig q0 = ref->q;
  q0.set_base_transform(out.start);

  RefinementOptions opt = suite.refine;
  opt.mu = suite.mu;
  const RefinementResult rr = refine_grasp(RefinementProblem{hand, cloud, task, opt}, q0);
  out.refine.status = to_string(rr.status);
  out.refine.iterations = rr.iterations;
  out.refine.converged = rr.status == RefinementStatus::Converged && rr.iterations <= opt.max_iters;
  out.refine.judgement = judge_grasp(hand, cloud, rr.q_star, task, suite.mu, mode, facets);
  out.refine.success = out.refine.converged && out.refine.judgement.success;

  if (suite.baseline) {
    MethodOutcome b;
    try {
      const BaselineResult br = baseline_direct_grasp(hand, cloud, out.start, task, suite.mu, suite.baseline_params);
      b.status = "Completed";
      b.judgement = judge_grasp(hand, cloud, br.q, task, suite.mu, mode, facets);
      b.success = b.judgement.success;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoContact && e.kind() != ErrorKind::SolverFailure) throw;
      b.status = e.kind() == ErrorKind::NoContact ? "NoContact" : "SolverFailure";
    }
    out.baseline = b;
  }
  return out;
}

inline EvalReport run_eval(const EvalSuite& suite) {
  if (suite.objects.empty()) throw Error(ErrorKind::ConfigError, "suite lists no objects");
  if (suite.hands.empty()) throw Error(ErrorKind::ConfigError, "suite lists no hands");
  if (suite.max_rotation_deg < 0.0 || suite.max_translation < 0.0)
    throw Error(ErrorKind::ConfigError, "perturbation bounds must be non-negative");
  std::vector<HandModel> hands;
  for (const auto& h : suite.hands) {
    if (!std::filesystem::exists(h)) throw Error(ErrorKind::ConfigError, "hand file '" + h + "' does not exist");
    hands.push_back(load_hand(h));
  }
  std::vector<OrientedPointCloud> clouds;
  std::vector<MassProperties> masses;
  for (const auto& o : suite.objects) {
    clouds.push_back(load_suite_object(o));
    masses.push_back(estimate_mass_properties(clouds.back(), suite.annotate.density));
  }
  EvalReport rep;
  rep.suite = suite;
  const std::size_t per_hand = suite.objects.size() * suite.trials;
  rep.trials.resize(hands.size() * per_hand);
  parallel_for(rep.trials.size(), suite.threads, [&](std::size_t i) {
    const std::size_t h = i / per_hand, o = (i % per_hand) / suite.trials, t = i % suite.trials;
    rep.trials[i] = run_trial(suite, hands[h], clouds[o], masses[o], suite.objects[o].id, t,
                              detail::trial_seed(suite.seed, h, o, t));
  });
  return rep;
}

inline OrientedPointCloud load_suite_object(const SuiteObject& o) {
  if (!o.file.empty()) {
    if (!std::filesystem::exists(o.file))
      throw Error(ErrorKind::ConfigError, "object file '" + o.file + "' does not exist");
    return load_point_cloud(o.file);
  }
  return make_primitive(o.primitive);
}

// ---------------------------------------------------------------------------
// Suite files and reports

inline EvalSuite suite_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  EvalSuite s;
  try {
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).lexically_normal().string();
    };
    s.name = j.value("name", s.name);
    if (j.contains("objects")) {
      if (j.at("objects") == "desk") {
        s.objects = desk_objects();
      } else {
        for (const auto& o : j.at("objects")) {
          SuiteObject so;
          so.id = o.at("id").get<std::string>();
          if (o.contains("file")) {
            so.file = resolve(o.at("file").get<std::string>());
          } else {
            so.primitive.shape = o.at("shape").get<std::string>();
            so.primitive.size = o.at("size").get<std::vector<double>>();
            so.primitive.spacing = o.value("spacing", so.primitive.spacing);
          }
          s.objects.push_back(std::move(so));
        }
      }
    } else {
      s.objects = desk_objects();
    }
    for (const auto& h : j.at("hands")) s.hands.push_back(resolve(h.get<std::string>()));
    s.trials = j.value("trials", s.trials);
    const std::string mode = j.value("mode", std::string("task"));
    if (mode == "task") s.mode = EvalMode::TaskOriented;
    else if (mode == "force_closure") s.mode = EvalMode::ForceClosure;
    else throw Error(ErrorKind::ConfigError, "mode must be 'task' or 'force_closure'");
    s.seed = j.value("seed", s.seed);
    s.mu = j.value("mu", s.mu);
    s.max_rotation_deg = j.value("max_rotation_deg", s.max_rotation_deg);
    s.max_translation = j.value("max_translation", s.max_translation);
    s.standoff = j.value("standoff", s.standoff);
    s.baseline = j.value("baseline", s.baseline);
    s.reference_attempts = j.value("reference_attempts", s.reference_attempts);
    s.threads = j.value("threads", s.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("suite: ") + e.what());
  }
  if (s.max_rotation_deg < 0.0 || s.max_rotation_deg > 180.0 || s.max_translation < 0.0)
    throw Error(ErrorKind::ConfigError, "perturbation bounds out of range");
  return s;
}

inline EvalSuite load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open suite '" + path.string() + "'");
  try {
    return suite_from_json(nlohmann::json::parse(in), path.parent_path());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

namespace detail {

inline nlohmann::json judgement_json(const Judgement& j) {
  nlohmann::json o = {{"residual", j.residual},
                      {"max_surface_distance", j.max_surface_distance},
                      {"max_penetration", j.max_penetration},
                      {"max_pair_overlap", j.max_pair_overlap},
                      {"residual_ok", j.residual_ok},
                      {"surface_ok", j.surface_ok},
                      {"intersection_free", j.intersection_free}};
  if (j.force_closure) o["force_closure"] = *j.force_closure;
  return o;
}

inline nlohmann::json method_json(const MethodOutcome& m) {
  return {{"status", m.status},
          {"iterations", m.iterations},
          {"converged", m.converged},
          {"success", m.success},
          {"criteria", judgement_json(m.judgement)}};
}

inline nlohmann::json totals_json(const MethodTotals& t) {
  return {{"trials", t.trials}, {"successes", t.successes}, {"converged", t.converged}, {"success_rate", t.rate()}};
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["kind"] = "eval";
  const auto& s = rep.suite;
  j["suite"] = {{"name", s.name},
                {"mode", s.mode == EvalMode::TaskOriented ? "task" : "force_closure"},
                {"seed", s.seed},
                {"mu", s.mu},
                {"trials_per_object", s.trials},
                {"max_rotation_deg", s.max_rotation_deg},
                {"max_translation", s.max_translation},
                {"standoff", s.standoff},
                {"hands", s.hands}};
  for (const auto& o : s.objects) j["suite"]["objects"].push_back(o.id);
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : rep.trials) {
    nlohmann::json tj = {{"object", t.object},
                         {"hand", t.hand},
                         {"trial", t.trial},
                         {"seed", t.seed},
                         {"reference_found", t.reference_found},
                         {"reference_attempt", t.reference_attempt},
                         {"target", std::vector<double>(t.target.data(), t.target.data() + 6)},
                         {"start", [&] {
                            const Vec6 v = pose_to_vector(t.start);
                            return std::vector<double>(v.data(), v.data() + 6);
                          }()},
                         {"refine", detail::method_json(t.refine)}};
    if (t.baseline) tj["baseline"] = detail::method_json(*t.baseline);
    trials.push_back(std::move(tj));
  }
  j["trials"] = std::move(trials);
  j["totals"]["refine"] = detail::totals_json(rep.totals(false));
  if (s.baseline) j["totals"]["baseline"] = detail::totals_json(rep.totals(true));
  for (const auto& o : s.objects) {
    j["per_object"][o.id]["refine"] = detail::totals_json(rep.totals(false, o.id));
    if (s.baseline) j["per_object"][o.id]["baseline"] = detail::totals_json(rep.totals(true, o.id));
  }
  return j;
}

inline std::string summary_table(const EvalReport& rep) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %18s %18s\n", "object", "refine", "baseline");
  out << line;
  auto cell = [](const MethodTotals& t) {
    char c[40];
    std::snprintf(c, sizeof c, "%zu/%zu (%5.1f%%)", t.successes, t.trials, 100.0 * t.rate());
    return std::string(c);
  };
  for (const auto& o : rep.suite.objects) {
    std::snprintf(line, sizeof line, "%-22s %18s %18s\n", o.id.c_str(), cell(rep.totals(false, o.id)).c_str(),
                  rep.suite.baseline ? cell(rep.totals(true, o.id)).c_str() : "-");
    out << line;
  }
  std::snprintf(line, sizeof line, "%-22s %18s %18s\n", "total", cell(rep.totals(false)).c_str(),
                rep.suite.baseline ? cell(rep.totals(true)).c_str() : "-");
  out << line;
  return out.str();
}

}  // namespace contactsynth
