#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

using namespace contactsynth;

namespace {

EvalSuite smoke_suite() { return load_suite(cs_test::data_dir() / "suites" / "smoke.json"); }

}  // namespace

TEST(Perturbation, BoundsHoldExactly) {
  Rng rng = make_rng(8);
  const double standoff = 0.3, max_deg = 60.0, max_t = 0.05;
  for (int k = 0; k < 1000; ++k) {
    Isometry ref = Isometry::Identity();
    ref.linear() = random_rotation(rng);
    ref.translation() = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    const Isometry t = perturbed_start(ref, standoff, max_deg, max_t, rng);
    const Vec3 pulled = ref.translation() - standoff * ref.linear().col(2);
    EXPECT_LE(rotation_angle_between(t.linear(), ref.linear()), max_deg * M_PI / 180.0 + 1e-9);
    EXPECT_LE((t.translation() - pulled).norm(), max_t + 1e-12);
    EXPECT_NEAR((t.linear().transpose() * t.linear() - Mat3::Identity()).norm(), 0.0, 1e-12);
  }
}

TEST(Perturbation, ZeroBoundsReturnReference) {
  Rng rng = make_rng(2);
  Isometry ref = Isometry::Identity();
  ref.linear() = random_rotation(rng);
  ref.translation() = Vec3(0.1, -0.2, 0.3);
  const Isometry t = perturbed_start(ref, 0.0, 0.0, 0.0, rng);
  EXPECT_NEAR((t.matrix() - ref.matrix()).norm(), 0.0, 1e-15);
}

TEST(Judgement, ResidualAboveThresholdFails) {
  GraspCheck c;
  c.residual_norm = 1e-5;
  c.max_surface_distance = 1e-4;
  Judgement j = judge_check(c);
  EXPECT_FALSE(j.residual_ok);
  EXPECT_TRUE(j.surface_ok);
  EXPECT_TRUE(j.intersection_free);
  EXPECT_FALSE(j.success);

  c.residual_norm = 1e-7;
  EXPECT_TRUE(judge_check(c).success);

  RefinementResult r;
  r.status = RefinementStatus::Converged;
  c.residual_norm = 1e-5;
  EXPECT_FALSE(refinement_succeeded(r, c, RefinementOptions{}));
  c.residual_norm = 1e-7;
  EXPECT_TRUE(refinement_succeeded(r, c, RefinementOptions{}));
}

TEST(Judgement, SurfaceAndIntersectionThresholds) {
  GraspCheck c;
  c.max_surface_distance = 0.006;
  EXPECT_FALSE(judge_check(c).success);
  c.max_surface_distance = 0.0;
  c.max_sphere_penetration = 2e-4;
  EXPECT_FALSE(judge_check(c).intersection_free);
  c.max_sphere_penetration = -0.01;
  c.max_pair_overlap = 2e-4;
  EXPECT_FALSE(judge_check(c).success);
}

TEST(Eval, ZeroPerturbationSucceeds) {
  EvalSuite s = smoke_suite();
  s.objects.resize(1);
  s.standoff = 0.0;
  s.max_rotation_deg = 0.0;
  s.max_translation = 0.0;
  s.baseline = false;
  const EvalReport rep = run_eval(s);
  ASSERT_EQ(rep.trials.size(), s.trials);
  for (const auto& t : rep.trials) {
    ASSERT_TRUE(t.reference_found);
    EXPECT_TRUE(t.refine.success) << t.refine.status << " residual " << t.refine.judgement.residual;
  }
}

TEST(Eval, TotalsMatchTrialsAndReportIsReproducible) {
  const EvalSuite s = smoke_suite();
  const EvalReport a = run_eval(s);
  ASSERT_EQ(a.trials.size(), s.objects.size() * s.trials);
  for (const bool baseline : {false, true}) {
    std::size_t succ = 0, conv = 0;
    for (const auto& t : a.trials) {
      const MethodOutcome& m = baseline ? *t.baseline : t.refine;
      succ += m.success;
      conv += m.converged;
    }
    const MethodTotals tot = a.totals(baseline);
    EXPECT_EQ(tot.trials, a.trials.size());
    EXPECT_EQ(tot.successes, succ);
    EXPECT_EQ(tot.converged, conv);
    std::size_t per_object = 0;
    for (const auto& o : s.objects) per_object += a.totals(baseline, o.id).successes;
    EXPECT_EQ(per_object, succ);
  }
  for (const auto& t : a.trials) {
    if (t.refine.success) {
      EXPECT_TRUE(t.refine.converged);
      EXPECT_LT(t.refine.judgement.residual, kSuccessResidual);
    }
  }

  EvalSuite threaded = s;
  threaded.threads = 2;
  const EvalReport b = run_eval(threaded);
  EXPECT_EQ(report_to_json(a).at("trials").dump(), report_to_json(b).at("trials").dump());
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(run_eval(s)).dump());
}

TEST(Suite, ResolvesRelativeHandPaths) {
  const EvalSuite s = smoke_suite();
  ASSERT_EQ(s.hands.size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(s.hands[0]));
  EXPECT_EQ(s.objects.size(), 2u);
  EXPECT_EQ(s.seed, 3u);
  EXPECT_EQ(s.trials, 2u);
}

TEST(Suite, DeskDefaults) {
  const EvalSuite s = default_desk_suite("hand.json");
  EXPECT_EQ(s.objects.size(), 20u);
  EXPECT_EQ(s.trials, 10u);
  EXPECT_DOUBLE_EQ(s.max_rotation_deg, 60.0);
  EXPECT_DOUBLE_EQ(s.max_translation, 0.05);
}

TEST(Suite, Errors) {
  const std::string hand = (cs_test::data_dir() / "hands" / "three_finger.json").string();
  const auto kind_of = [](auto&& fn) -> std::optional<ErrorKind> {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return std::optional<ErrorKind>{};
  };
  EXPECT_EQ(kind_of([&] { suite_from_json({{"hands", nlohmann::json::array({hand})}, {"mode", "grip"}}); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([&] { suite_from_json({{"hands", nlohmann::json::array({hand})}, {"max_rotation_deg", -1.0}}); }),
            ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([&] { suite_from_json({{"objects", "desk"}}); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([&] { suite_from_json({{"hands", nlohmann::json::array({hand})}, {"trials", "ten"}}); }), ErrorKind::ConfigError);

  EvalSuite missing = default_desk_suite("/nonexistent/hand.json");
  EXPECT_EQ(kind_of([&] { run_eval(missing); }), ErrorKind::ConfigError);
  EvalSuite empty = default_desk_suite(hand);
  empty.objects.clear();
  EXPECT_EQ(kind_of([&] { run_eval(empty); }), ErrorKind::ConfigError);

  const auto dir = cs_test::scratch("suite_errors");
  std::ofstream(dir / "bad.json") << "{ \"hands\": [";
  EXPECT_EQ(kind_of([&] { load_suite(dir / "bad.json"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([&] { load_suite(dir / "absent.json"); }), ErrorKind::ConfigError);
}

TEST(Report, SummaryListsEveryObject) {
  EvalSuite s = smoke_suite();
  s.trials = 1;
  const EvalReport rep = run_eval(s);
  const std::string table = summary_table(rep);
  for (const auto& o : s.objects) EXPECT_NE(table.find(o.id), std::string::npos);
  const auto j = report_to_json(rep);
  EXPECT_EQ(j.at("trials").size(), rep.trials.size());
}
