#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

using namespace contactsynth;

namespace {

struct BoxScene {
  HandModel hand = cs_test::hand("three_finger");
  OrientedPointCloud cloud = make_box(Vec3(0.08, 0.06, 0.05), 0.005);
  MassProperties mp = estimate_mass_properties(cloud);
};

}  // namespace

TEST(Annotate, PalmFacesSampledPoint) {
  const BoxScene s;
  for (const auto& palm : sample_palm_poses(s.cloud, 200, 4)) {
    const Vec3& n = s.cloud.normal(palm.point_index);
    EXPECT_TRUE(palm.pose.linear().col(2).isApprox(-n, 1e-12));
    EXPECT_GE(palm.standoff, 0.05);
    EXPECT_LE(palm.standoff, 0.15);
    EXPECT_TRUE((palm.pose.translation() - s.cloud.point(palm.point_index)).isApprox(palm.standoff * n, 1e-12));
  }
}

TEST(Annotate, SampledForcesStayInCone) {
  const auto cloud = make_sphere(0.05, 600);
  Rng rng = make_rng(3);
  for (int k = 0; k < 200; ++k) {
    const auto maps = grasp_maps(std::vector<Vec3>{cloud.point(uniform_index(rng, 600)), cloud.point(uniform_index(rng, 600))}, cloud, 0.4);
    const auto f = sample_contact_forces(maps, 0.4, rng);
    Wrench w = Wrench::Zero();
    for (std::size_t i = 0; i < maps.size(); ++i) {
      EXPECT_TRUE(maps[i].cone.contains(f.forces[i], 1e-12));
      EXPECT_GE(f.forces[i].norm(), 0.1 - 1e-12);
      EXPECT_LE(f.forces[i].norm(), 1.0 + 1e-12);
      w += maps[i].apply(f.forces[i]);
    }
    EXPECT_TRUE(w.isApprox(f.wrench, 1e-12));
  }
}

TEST(Annotate, ExamplesSatisfyEveryInvariant) {
  const BoxScene s;
  int produced = 0;
  for (std::size_t k = 0; k < 8000 && produced < 40; ++k) {
    const auto ex = sample_example(s.hand, s.cloud, s.mp, 0.5, 17, k);
    if (!ex) continue;
    ++produced;
    EXPECT_NO_THROW(validate_example(*ex, s.cloud));
    EXPECT_LE(collision_depth(s.hand, s.cloud, ex->q), 1e-4);
    const auto tips = fingertip_positions(s.hand, ex->q);
    for (std::size_t i = 0; i < tips.size(); ++i) {
      EXPECT_LT(std::abs(signed_distance(s.cloud, tips[i])), 0.005 + 1e-9);
      EXPECT_EQ(s.cloud.nearest_index(tips[i]), ex->contact_indices[i]);
    }
    const std::size_t allowed = ex->mask.count();
    if (allowed != s.cloud.size()) {
      for (std::size_t i = 0; i < s.cloud.size(); ++i) {
        bool near = false;
        for (auto c : ex->contact_indices) near = near || (s.cloud.point(i) - s.cloud.point(c)).norm() <= 0.05;
        EXPECT_EQ(ex->mask.allowed[i], near) << i;
      }
    }
  }
  EXPECT_EQ(produced, 40);
}

TEST(Annotate, SameSeedSameExample) {
  const BoxScene s;
  for (std::size_t k = 0; k < 20; ++k) {
    const auto a = sample_example(s.hand, s.cloud, s.mp, 0.5, 5, k), b = sample_example(s.hand, s.cloud, s.mp, 0.5, 5, k);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (!a) continue;
    EXPECT_EQ(a->q.stacked(), b->q.stacked());
    EXPECT_EQ(a->wrench, b->wrench);
    EXPECT_EQ(a->mask.allowed, b->mask.allowed);
  }
}

TEST(Annotate, EmittedExamplesReloadExactly) {
  const BoxScene s;
  const auto dir = cs_test::scratch("annotate_emit");
  const auto sum = annotate(s.hand, s.cloud, "box.xyzn", 6, 0.5, 9, dir);
  ASSERT_EQ(sum.examples, 6u);
  std::ifstream in(dir / "index.json");
  const auto index = nlohmann::json::parse(in);
  ASSERT_EQ(index.at("examples").size(), 6u);
  for (const auto& name : index.at("examples")) {
    const auto path = dir / name.get<std::string>();
    const auto ex = load_example(path);
    EXPECT_EQ(ex.object, "box.xyzn");
    EXPECT_NO_THROW(validate_example(ex, s.cloud));
    const auto original = sample_example(s.hand, s.cloud, s.mp, 0.5, 9, ex.pose_index);
    ASSERT_TRUE(original.has_value());
    EXPECT_EQ(ex.q.stacked(), original->q.stacked());
    EXPECT_EQ(ex.forces, original->forces);
    EXPECT_EQ(ex.heatmap.scores, original->heatmap.scores);
    std::ifstream tin(path / "task.json");
    const std::string text((std::istreambuf_iterator<char>(tin)), std::istreambuf_iterator<char>());
    const Task t = parse_task(text, path / "task.json", s.mp);
    EXPECT_LE((t.projection.target - original->wrench.normalized()).norm(), 1e-9);
  }
}

TEST(Annotate, ValidationCatchesCorruption) {
  const BoxScene s;
  std::optional<TrainingExample> ex;
  for (std::size_t k = 0; !ex; ++k) ex = sample_example(s.hand, s.cloud, s.mp, 0.5, 21, k);
  auto bad = *ex;
  bad.forces[0] = -bad.forces[0];
  EXPECT_THROW(validate_example(bad, s.cloud), Error);
  bad = *ex;
  bad.wrench[0] += 1e-6;
  EXPECT_THROW(validate_example(bad, s.cloud), Error);
  bad = *ex;
  bad.mask.allowed[bad.contact_indices[0]] = false;
  EXPECT_THROW(validate_example(bad, s.cloud), Error);
  bad = *ex;
  bad.motion.dx *= 2.0;
  EXPECT_THROW(validate_example(bad, s.cloud), Error);
}

TEST(Annotate, MaskIsAllOnesAboutHalfTheTime) {
  const auto cloud = make_sphere(0.05, 300);
  Rng rng = make_rng(13);
  int ones = 0;
  for (int k = 0; k < 4000; ++k) ones += make_region_mask({0, 5}, cloud, rng).count() == cloud.size();
  EXPECT_NEAR(ones / 4000.0, 0.5, 0.03);
}
