// contactsynth command-line tool.
//
// Exit codes: 0 success, 1 optimization failure, 2 input error, 3 internal error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "contactsynth/contactsynth.hpp"

namespace cs = contactsynth;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOptimization = 1;
constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

int exit_code_for(cs::ErrorKind k) {
  switch (k) {
    case cs::ErrorKind::SolverFailure:
    case cs::ErrorKind::NoContact:
    case cs::ErrorKind::NoPathFound:
      return kExitOptimization;
    case cs::ErrorKind::InvalidArgument:
    case cs::ErrorKind::DegenerateGeometry:
    case cs::ErrorKind::ZeroMotion:
    case cs::ErrorKind::EmptySelection:
    case cs::ErrorKind::InvalidStart:
    case cs::ErrorKind::InvalidGoal:
    case cs::ErrorKind::ParseError:
    case cs::ErrorKind::ConfigError:
    case cs::ErrorKind::IoError:
      return kExitInput;
  }
  return kExitInternal;
}

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  std::string dump_debug;
  cs::Config cfg;
  std::string stage = "setup";
};

json header(const Globals& g, const std::string& command) {
  return {{"schema_version", cs::kReportSchemaVersion},
          {"command", command},
          {"seed", g.seed},
          {"config", cs::settings_to_json(g.cfg)}};
}

void emit(const Globals& g, const json& report) {
  const std::string text = report.dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  auto f = cs::detail::open_output(g.out);
  f << text;
}

/// Inputs shared by the grasp subcommands.
struct GraspInputs {
  std::string object, hand, task, init, heatmap = "auto", mask;
  std::optional<double> mu;
};

struct Loaded {
  cs::OrientedPointCloud cloud;
  cs::HandModel hand;
  cs::MassProperties mp;
  double mu;
};

Loaded load_inputs(Globals& g, const GraspInputs& in) {
  g.stage = "load";
  cs::OrientedPointCloud cloud = cs::load_object(in.object);
  cs::HandModel hand = cs::load_hand(in.hand);
  const cs::MassProperties mp = cs::estimate_mass_properties(cloud, g.cfg.density);
  const double mu = in.mu.value_or(g.cfg.refine.mu);
  if (mu < 0.0) throw cs::Error(cs::ErrorKind::InvalidArgument, "mu must be non-negative");
  return {std::move(cloud), std::move(hand), mp, mu};
}

cs::RegionMask load_mask(const std::string& path, std::size_t n) {
  if (path.empty()) return cs::RegionMask::all(n);
  cs::RegionMask m{cs::load_mask_file(path)};
  if (m.allowed.size() != n)
    throw cs::Error(cs::ErrorKind::InvalidArgument, "mask has " + std::to_string(m.allowed.size()) +
                                                        " rows, cloud has " + std::to_string(n) + " points");
  return m;
}

cs::Proposal make_proposal(Globals& g, const GraspInputs& in, const Loaded& L, const std::optional<cs::Task>& task) {
  g.stage = "proposal";
  cs::ProposalParams pp = g.cfg.proposal;
  if (in.heatmap != "auto") {
    const cs::HeatmapFile h = cs::load_heatmap_file(in.heatmap);
    return cs::propose_from_heatmap(L.hand, L.cloud, h, load_mask(in.mask, L.cloud.size()), pp);
  }
  if (!task) throw cs::Error(cs::ErrorKind::InvalidArgument, "automatic proposals need --task");
  return cs::propose_auto(L.hand, L.cloud, L.mp, *task, L.mu, g.seed, g.cfg);
}

/// --init accepts "proposal", a configuration file {"base", "joints"}, or a
/// propose report (its "proposal.q0" is used).
cs::JointConfig initial_config(Globals& g, const GraspInputs& in, const Loaded& L, const cs::Task& task,
                               json& report) {
  if (in.init.empty() || in.init == "proposal") {
    const cs::Proposal p = make_proposal(g, in, L, task);
    report["proposal"] = cs::proposal_to_json(p);
    return p.init.q0;
  }
  g.stage = "load";
  auto f = cs::detail::open_input(in.init);
  json j;
  try {
    j = json::parse(f);
    const json& q = j.contains("proposal") ? j.at("proposal").at("q0") : j.contains("q0") ? j.at("q0") : j;
    cs::JointConfig q0 = cs::config_from_json(q);
    L.hand.check_dimension(q0);
    return q0;
  } catch (const json::exception& e) {
    throw cs::Error(cs::ErrorKind::ParseError, in.init + ": " + e.what());
  }
}

void add_grasp_inputs(CLI::App* sub, GraspInputs& in, bool need_task) {
  sub->add_option("--object", in.object, "Point-cloud file or primitive such as sphere:0.05")->required();
  sub->add_option("--hand", in.hand, "Hand description (JSON)")->required();
  auto* t = sub->add_option("--task", in.task, "Task file (JSON)");
  if (need_task) t->required();
  sub->add_option("--mu", in.mu, "Friction coefficient");
}

int cmd_synthesize(Globals& g, const GraspInputs& in) {
  const Loaded L = load_inputs(g, in);
  g.stage = "task";
  const cs::Task task = cs::load_task(in.task, L.mp);
  json report = header(g, "synthesize");
  report["inputs"] = {{"object", in.object}, {"hand", in.hand}, {"task", in.task}, {"heatmap", in.heatmap},
                      {"mask", in.mask}, {"mu", L.mu}};
  report["task"] = cs::task_to_json(task);
  const cs::Proposal p = make_proposal(g, in, L, task);
  report["proposal"] = cs::proposal_to_json(p);

  g.stage = "refine";
  cs::RefinementOptions opt = g.cfg.refine;
  opt.mu = L.mu;
  const cs::RefinementResult r = cs::refine_task(L.hand, L.cloud, task, opt, p.init.q0);
  report["refinement"] = cs::refinement_to_json(r);

  g.stage = "verify";
  const cs::GraspCheck c = cs::verify_grasp(L.hand, L.cloud, r.q_star, task.projection, L.mu, opt.facets, opt.qp);
  const bool ok = cs::refinement_succeeded(r, c, opt);
  report["verification"] = cs::check_to_json(c);
  report["status"] = ok ? "Converged" : cs::to_string(r.status);
  report["success"] = ok;
  report["stages"] = {{"task", "ok"}, {"proposal", "ok"}, {"refine", cs::to_string(r.status)},
                      {"verify", ok ? "ok" : "failed"}};
  if (!g.dump_debug.empty()) {
    const cs::RegionMask mask = load_mask(in.mask, L.cloud.size());
    cs::dump_debug(g.dump_debug, L.cloud, &mask, &p.predicted, cs::fingertip_positions(L.hand, r.q_star),
                   g.cfg.proposal.heatmap_sigma);
  }
  emit(g, report);
  return ok ? kExitOk : kExitOptimization;
}

int cmd_propose(Globals& g, const GraspInputs& in) {
  const Loaded L = load_inputs(g, in);
  std::optional<cs::Task> task;
  if (!in.task.empty()) {
    g.stage = "task";
    task = cs::load_task(in.task, L.mp);
  }
  const cs::Proposal p = make_proposal(g, in, L, task);
  json report = header(g, "propose");
  report["inputs"] = {{"object", in.object}, {"hand", in.hand}, {"task", in.task}, {"heatmap", in.heatmap},
                      {"mask", in.mask}, {"mu", L.mu}};
  report["proposal"] = cs::proposal_to_json(p);
  if (!g.dump_debug.empty()) {
    const cs::RegionMask mask = load_mask(in.mask, L.cloud.size());
    cs::dump_debug(g.dump_debug, L.cloud, &mask, &p.predicted, cs::fingertip_positions(L.hand, p.init.q0),
                   g.cfg.proposal.heatmap_sigma);
  }
  emit(g, report);
  return kExitOk;
}

int cmd_refine(Globals& g, const GraspInputs& in) {
  const Loaded L = load_inputs(g, in);
  g.stage = "task";
  const cs::Task task = cs::load_task(in.task, L.mp);
  json report = header(g, "refine");
  report["inputs"] = {{"object", in.object}, {"hand", in.hand}, {"task", in.task}, {"init", in.init}, {"mu", L.mu}};
  report["task"] = cs::task_to_json(task);
  const cs::JointConfig q0 = initial_config(g, in, L, task, report);
  report["q0"] = cs::config_to_json(q0);

  g.stage = "refine";
  cs::RefinementOptions opt = g.cfg.refine;
  opt.mu = L.mu;
  const cs::RefinementResult r = cs::refine_task(L.hand, L.cloud, task, opt, q0);
  report["refinement"] = cs::refinement_to_json(r);
  g.stage = "verify";
  const cs::GraspCheck c = cs::verify_grasp(L.hand, L.cloud, r.q_star, task.projection, L.mu, opt.facets, opt.qp);
  const bool ok = cs::refinement_succeeded(r, c, opt);
  report["verification"] = cs::check_to_json(c);
  report["status"] = cs::to_string(r.status);
  report["success"] = ok;
  if (!g.dump_debug.empty())
    cs::dump_debug(g.dump_debug, L.cloud, nullptr, nullptr, cs::fingertip_positions(L.hand, r.q_star),
                   g.cfg.proposal.heatmap_sigma);
  emit(g, report);
  return ok ? kExitOk : kExitOptimization;
}

int cmd_baseline(Globals& g, const GraspInputs& in) {
  const Loaded L = load_inputs(g, in);
  g.stage = "task";
  const cs::Task task = cs::load_task(in.task, L.mp);
  json report = header(g, "baseline");
  report["inputs"] = {{"object", in.object}, {"hand", in.hand}, {"task", in.task}, {"init", in.init}, {"mu", L.mu}};
  report["task"] = cs::task_to_json(task);
  const cs::JointConfig q0 = initial_config(g, in, L, task, report);
  report["approach_pose"] = std::vector<double>(q0.base_pose.data(), q0.base_pose.data() + 6);

  g.stage = "baseline";
  const cs::BaselineResult b =
      cs::baseline_direct_grasp(L.hand, L.cloud, q0.base_transform(), task.projection, L.mu, g.cfg.baseline);
  g.stage = "verify";
  const cs::EvalMode mode = task.kind == cs::TaskKind::ForceClosure ? cs::EvalMode::ForceClosure : cs::EvalMode::TaskOriented;
  const cs::Judgement j = cs::judge_grasp(L.hand, L.cloud, b.q, task.projection, L.mu, mode, g.cfg.baseline.facets);
  report["q"] = cs::config_to_json(b.q);
  report["forces"] = cs::vec3_list(b.forces.forces);
  report["travel"] = b.travel;
  report["judgement"] = cs::detail::judgement_json(j);
  report["success"] = j.success;
  if (!g.dump_debug.empty())
    cs::dump_debug(g.dump_debug, L.cloud, nullptr, nullptr, cs::fingertip_positions(L.hand, b.q),
                   g.cfg.proposal.heatmap_sigma);
  emit(g, report);
  return j.success ? kExitOk : kExitOptimization;
}

int cmd_plan(Globals& g, const std::string& scene_path, const std::string& waypoints_path) {
  g.stage = "load";
  const cs::Scene scene = cs::load_scene(scene_path);
  const auto waypoints = cs::load_waypoints(waypoints_path);
  if (waypoints.size() < 2) throw cs::Error(cs::ErrorKind::InvalidArgument, "need at least two waypoints");
  g.stage = "plan";
  cs::PlannerParams p = g.cfg.planner;
  p.seed = g.seed;
  const auto path = cs::plan_waypoints(waypoints, scene, p);
  g.stage = "verify";
  const auto bad = cs::first_colliding_edge(path, scene, p.alpha, p.resolution());
  json report = header(g, "plan");
  report["inputs"] = {{"scene", scene_path}, {"waypoints", waypoints_path}};
  report["path"] = cs::path_to_json(path);
  report["states"] = path.size();
  report["length"] = cs::path_length(path, p.alpha);
  report["resolution"] = p.resolution();
  report["edges_collision_free"] = !bad.has_value();
  emit(g, report);
  return bad ? kExitInternal : kExitOk;
}

int cmd_annotate(Globals& g, const GraspInputs& in, std::size_t count, const std::string& out_dir) {
  const Loaded L = load_inputs(g, in);
  g.stage = "annotate";
  const cs::AnnotateSummary s = cs::annotate(L.hand, L.cloud, in.object, count, L.mu, g.seed, out_dir, g.cfg.annotate);
  json report = header(g, "annotate");
  report["inputs"] = {{"object", in.object}, {"hand", in.hand}, {"count", count}, {"mu", L.mu}, {"out_dir", out_dir}};
  report["examples"] = s.examples;
  report["poses_tried"] = s.poses_tried;
  report["directories"] = s.directories;
  emit(g, report);
  return s.examples == count ? kExitOk : kExitOptimization;
}

int cmd_eval(Globals& g, const std::string& suite_path, bool seed_given, std::optional<unsigned> threads) {
  g.stage = "load";
  cs::EvalSuite suite = cs::load_suite(suite_path);
  if (seed_given) suite.seed = g.seed;
  if (threads) suite.threads = *threads;
  if (!g.config.empty()) {
    suite.refine = g.cfg.refine;
    suite.annotate = g.cfg.annotate;
    suite.baseline_params = g.cfg.baseline;
  }
  g.stage = "eval";
  const cs::EvalReport rep = cs::run_eval(suite);
  json report = header(g, "eval");
  report["seed"] = suite.seed;
  report["inputs"] = {{"suite", suite_path}};
  report["eval"] = cs::report_to_json(rep);
  emit(g, report);
  (g.out.empty() ? std::cerr : std::cout) << cs::summary_table(rep);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact synthesis and grasp refinement toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Master random seed");
  app.add_option("--config", g.config, "JSON file overriding default constants");
  app.add_option("--out", g.out, "Report path (default: stdout)");
  app.add_option("--dump-debug", g.dump_debug, "Write point-wise scalars for plotting");

  GraspInputs syn, pro, ref, bas, ann;
  auto* s_syn = app.add_subcommand("synthesize", "Proposal, palm initialization and refinement end to end");
  add_grasp_inputs(s_syn, syn, true);
  s_syn->add_option("--heatmap", syn.heatmap, "Heatmap file or 'auto'");
  s_syn->add_option("--mask", syn.mask, "Region mask file");

  auto* s_pro = app.add_subcommand("propose", "Select contacts and initialize the palm pose");
  add_grasp_inputs(s_pro, pro, false);
  s_pro->add_option("--heatmap", pro.heatmap, "Heatmap file or 'auto'");
  s_pro->add_option("--mask", pro.mask, "Region mask file");

  auto* s_ref = app.add_subcommand("refine", "Refine a grasp from an initial configuration");
  add_grasp_inputs(s_ref, ref, true);
  s_ref->add_option("--init", ref.init, "Initial configuration file or 'proposal'")->required();

  auto* s_bas = app.add_subcommand("baseline", "Approach and close the fingers on contact");
  add_grasp_inputs(s_bas, bas, true);
  s_bas->add_option("--init", bas.init, "Approach configuration file or 'proposal'")->required();

  std::string scene_path, waypoints_path;
  auto* s_plan = app.add_subcommand("plan", "Plan collision-free object motion through waypoints");
  s_plan->add_option("--scene", scene_path, "Scene file (JSON)")->required();
  s_plan->add_option("--waypoints", waypoints_path, "Waypoint file (JSON list of 6-value poses)")->required();

  std::size_t count = 1;
  std::string out_dir;
  auto* s_ann = app.add_subcommand("annotate", "Sample training examples");
  add_grasp_inputs(s_ann, ann, false);
  s_ann->add_option("--count", count, "Number of examples")->required();
  s_ann->add_option("--out-dir", out_dir, "Output directory")->required();

  std::string suite_path;
  std::optional<unsigned> threads;
  auto* s_eval = app.add_subcommand("eval", "Run an evaluation suite");
  s_eval->add_option("--suite", suite_path, "Suite file (JSON)")->required();
  s_eval->add_option("--threads", threads, "Worker threads (default: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (!g.config.empty()) g.cfg = cs::load_config(g.config);
    if (s_syn->parsed()) return cmd_synthesize(g, syn);
    if (s_pro->parsed()) return cmd_propose(g, pro);
    if (s_ref->parsed()) return cmd_refine(g, ref);
    if (s_bas->parsed()) return cmd_baseline(g, bas);
    if (s_plan->parsed()) return cmd_plan(g, scene_path, waypoints_path);
    if (s_ann->parsed()) return cmd_annotate(g, ann, count, out_dir);
    if (s_eval->parsed()) return cmd_eval(g, suite_path, app.count("--seed") > 0, threads);
  } catch (const cs::Error& e) {
    std::cerr << "contactsynth: [" << g.stage << "] " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "contactsynth: [" << g.stage << "] internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
