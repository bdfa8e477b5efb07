#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

using namespace contactsynth;

namespace {

PoseState random_state(Rng& rng, double extent) {
  return {Vec3(uniform(rng, -extent, extent), uniform(rng, -extent, extent), uniform(rng, -extent, extent)),
          so3_log(random_rotation(rng))};
}

bool brute_collision(const PoseState& s, const Scene& scene) {
  for (const auto& p : scene.moving.points()) {
    const Vec3 x = s.transform() * p;
    for (const auto& o : scene.obstacles) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < o.size(); ++i)
        if ((o.point(i) - x).squaredNorm() < (o.point(best) - x).squaredNorm()) best = i;
      if (o.normal(best).dot(x - o.point(best)) < scene.clearance) return true;
    }
  }
  return false;
}

}  // namespace

TEST(Metric, DistanceProperties) {
  Rng rng = make_rng(1);
  for (int k = 0; k < 200; ++k) {
    const PoseState a = random_state(rng, 1), b = random_state(rng, 1), c = random_state(rng, 1);
    EXPECT_NEAR(pose_distance(a, b, 0.3), pose_distance(b, a, 0.3), 1e-12);
    EXPECT_NEAR(pose_distance(a, a, 0.3), 0.0, 1e-7);
    EXPECT_LE(pose_distance(a, c, 0.3), pose_distance(a, b, 0.3) + pose_distance(b, c, 0.3) + 1e-9);
  }
  const PoseState o, t(Vec3(3, 4, 0), Vec3::Zero()), r(Vec3::Zero(), Vec3(0, 0, 1.0));
  EXPECT_DOUBLE_EQ(pose_distance(o, t, 0.3), 5.0);
  EXPECT_NEAR(pose_distance(o, r, 0.3), 0.3, 1e-12);
}

TEST(Interpolation, MatchesQuaternionSlerp) {
  Rng rng = make_rng(2);
  for (int k = 0; k < 200; ++k) {
    const PoseState a = random_state(rng, 1), b = random_state(rng, 1);
    const double s = uniform(rng);
    const PoseState m = interpolate(a, b, s);
    const Eigen::Quaterniond qa(a.rotation_matrix()), qb(b.rotation_matrix());
    const Mat3 expected = qa.slerp(s, qb).toRotationMatrix();
    EXPECT_LT(rotation_angle_between(m.rotation_matrix(), expected), 1e-7);
    EXPECT_TRUE(m.translation.isApprox(a.translation + s * (b.translation - a.translation), 1e-12));
    EXPECT_NEAR(pose_distance(a, m, 0.3) + pose_distance(m, b, 0.3), pose_distance(a, b, 0.3), 1e-7);
  }
}

TEST(Steer, StepsExactlyOrReachesTarget) {
  const PoseState a, far(Vec3(1, 0, 0), Vec3::Zero()), close(Vec3(0.01, 0, 0), Vec3::Zero());
  const PoseState s = steer(a, far, 0.05, 0.3);
  EXPECT_TRUE(s.translation.isApprox(Vec3(0.05, 0, 0)));
  EXPECT_EQ(steer(a, close, 0.05, 0.3).translation, close.translation);
  const PoseState spin(Vec3::Zero(), Vec3(0, 0, 2.0));
  EXPECT_NEAR(pose_distance(a, steer(a, spin, 0.05, 0.3), 0.3), 0.05, 1e-9);
  EXPECT_THROW(steer(a, far, 0.0, 0.3), Error);
}

TEST(Collision, MatchesExhaustiveCheck) {
  Rng rng = make_rng(21);
  const auto moving = make_box(Vec3(0.06, 0.04, 0.04), 0.01);
  const Scene scene = make_scene(moving, {{make_sphere(0.1, 400), Isometry::Identity()},
                                          {make_box(Vec3(0.1, 0.3, 0.1), 0.02), pose_from_vector((Vec6() << 0.3, 0, 0, 0, 0, 0.4).finished())}},
                                 0.01);
  int hits = 0;
  for (int k = 0; k < 300; ++k) {
    const PoseState s = random_state(rng, 0.4);
    const bool fast = in_collision(s, scene);
    EXPECT_EQ(fast, brute_collision(s, scene)) << k;
    hits += fast;
  }
  EXPECT_GE(hits, 10);
  EXPECT_LT(hits, 280);
}

TEST(Planner, FreeSpacePathIsNearlyStraight) {
  const Scene scene = make_scene(make_sphere(0.03, 100), {}, 0.0,
                                 Aabb{Vec3::Constant(-1), Vec3::Constant(1)});
  const PoseState a(Vec3(-0.5, 0, 0), Vec3::Zero()), b(Vec3(0.5, 0.2, 0), Vec3(0, 0, 0.5));
  const auto path = rrt_connect(a, b, scene, {});
  ASSERT_GE(path.size(), 2u);
  EXPECT_EQ(path.front().translation, a.translation);
  EXPECT_LT(pose_distance(path.back(), b, 0.3), 1e-9);
  EXPECT_LE(path_length(path, 0.3), 1.01 * pose_distance(a, b, 0.3));
  for (std::size_t i = 1; i < path.size(); ++i) EXPECT_LE(pose_distance(path[i - 1], path[i], 0.3), 0.05 + 1e-9);
}

TEST(Planner, StartEqualsGoalAndInvalidEndpoints) {
  const auto w = wall_with_gap();
  const auto same = rrt_connect(w.start, w.start, w.scene, {});
  ASSERT_EQ(same.size(), 1u);
  const PoseState blocked(Vec3(0, -0.45, 0), Vec3::Zero());
  ASSERT_TRUE(in_collision(blocked, w.scene));
  try {
    rrt_connect(blocked, w.goal, w.scene, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidStart);
  }
  try {
    rrt_connect(w.start, blocked, w.scene, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidGoal);
  }
  PlannerParams tiny;
  tiny.max_samples = 3;
  try {
    rrt_connect(w.start, w.goal, w.scene, tiny);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoPathFound);
  }
}

TEST(Planner, WallGapSolvedWithVerifiedEdges) {
  const auto w = wall_with_gap();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    PlannerParams p;
    p.seed = seed;
    const auto a = rrt_connect_detailed(w.start, w.goal, w.scene, p);
    const auto b = rrt_connect_detailed(w.start, w.goal, w.scene, p);
    ASSERT_EQ(a.path.size(), b.path.size());
    for (std::size_t i = 0; i < a.path.size(); ++i) EXPECT_EQ(a.path[i].vector(), b.path[i].vector());
    EXPECT_FALSE(first_colliding_edge(a.path, w.scene, p.alpha, p.resolution()).has_value());
    EXPECT_LE(a.length, a.raw_length + 1e-12);
    EXPECT_LT(pose_distance(a.path.back(), w.goal, p.alpha), 1e-9);
  }
}

TEST(Shortcut, ZigzagGetsShorterAndStraightStaysPut) {
  const Scene scene = make_scene(make_sphere(0.02, 64), {}, 0.0, Aabb{Vec3::Constant(-1), Vec3::Constant(1)});
  std::vector<PoseState> zig;
  for (int i = 0; i <= 10; ++i) zig.emplace_back(Vec3(0.05 * i, (i % 2) ? 0.1 : 0.0, 0.0), Vec3::Zero());
  PlannerParams p;
  const auto out = optimize_path(zig, scene, p);
  EXPECT_LT(path_length(out, p.alpha), path_length(zig, p.alpha));
  EXPECT_EQ(out.front().translation, zig.front().translation);
  EXPECT_EQ(out.back().translation, zig.back().translation);
  const std::vector<PoseState> straight{PoseState(Vec3::Zero(), Vec3::Zero()), PoseState(Vec3(0.5, 0, 0), Vec3::Zero())};
  EXPECT_NEAR(path_length(optimize_path(straight, scene, p), p.alpha), 0.5, 1e-12);
}

TEST(Planner, SceneFileMatchesBuiltInWall) {
  const Scene file = load_scene(cs_test::data_dir() / "scenes" / "wall_gap.json");
  const auto w = wall_with_gap();
  EXPECT_EQ(file.obstacles.size(), w.scene.obstacles.size());
  EXPECT_EQ(file.moving.size(), w.scene.moving.size());
  Rng rng = make_rng(5);
  for (int k = 0; k < 100; ++k) {
    const PoseState s = random_state(rng, 0.5);
    EXPECT_EQ(in_collision(s, file), in_collision(s, w.scene));
  }
  const auto wp = load_waypoints(cs_test::data_dir() / "scenes" / "wall_gap_waypoints.json");
  EXPECT_GE(wp.size(), 2u);
  const auto j = path_to_json(wp);
  EXPECT_EQ(j.size(), wp.size());
}

TEST(Planner, MalformedSceneIsReported) {
  const auto dir = cs_test::scratch("planner_bad");
  std::ofstream(dir / "s.json") << R"({"moving": {"shape": "box"}, "obstacles": []})";
  EXPECT_THROW(load_scene(dir / "s.json"), Error);
  std::ofstream(dir / "w.json") << "[[0, 0, 0]]";
  EXPECT_THROW(load_waypoints(dir / "w.json"), Error);
}
