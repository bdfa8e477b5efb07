#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace contactsynth;

namespace {

const char* kHands[] = {"three_finger", "four_finger", "jaw_gripper"};

}  // namespace

TEST(ForwardKinematics, RestFingertipsMatchFileOracle) {
  for (const char* name : kHands) {
    std::ifstream in(cs_test::data_dir() / "hands" / (std::string(name) + ".json"));
    const auto j = nlohmann::json::parse(in);
    const auto h = hand_from_json(j);
    const auto tips = fingertip_positions(h, h.rest_pose());
    const auto expected = j.at("rest_fingertips");
    ASSERT_EQ(tips.size(), expected.size()) << name;
    for (std::size_t i = 0; i < tips.size(); ++i)
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(tips[i][c], expected[i][c].get<double>(), 1e-12) << name << " tip " << i;
  }
}

TEST(ForwardKinematics, BaseTransformIsRigid) {
  const auto h = cs_test::hand("three_finger");
  Rng rng = make_rng(12);
  for (int k = 0; k < 20; ++k) {
    JointConfig q = cs_test::random_config(h, rng);
    JointConfig q0 = q;
    q0.base_pose.setZero();
    const auto world = fingertip_positions(h, q), local = fingertip_positions(h, q0);
    for (std::size_t i = 0; i < world.size(); ++i)
      EXPECT_TRUE(world[i].isApprox(q.base_transform() * local[i], 1e-12));
  }
}

TEST(Jacobian, MatchesCentralDifferences) {
  Rng rng = make_rng(31);
  for (const char* name : kHands) {
    const auto h = cs_test::hand(name);
    for (int k = 0; k < 30; ++k) {
      const JointConfig q = cs_test::random_config(h, rng);
      const KinematicState ks(h, q);
      for (std::size_t i = 0; i < h.num_fingertips(); ++i) {
        const PointJacobian a = ks.fingertip_jacobian(i), b = cs_test::fd_jacobian(h, q, h.fingertips()[i]);
        EXPECT_LE((a - b).norm(), 1e-5 * b.norm()) << name << " tip " << i;
      }
      for (std::size_t s = 0; s < h.spheres().size(); ++s) {
        const PointJacobian a = ks.sphere_jacobian(s), b = cs_test::fd_jacobian(h, q, h.spheres()[s].at);
        EXPECT_LE((a - b).norm(), 1e-5 * b.norm()) << name << " sphere " << s;
      }
    }
  }
}

TEST(Jacobian, FingerColumnsOnlyTouchOwnTip) {
  const auto h = cs_test::hand("four_finger");
  const KinematicState ks(h, h.rest_pose());
  for (std::size_t i = 0; i < h.num_fingertips(); ++i) {
    const auto own = h.finger_dofs(i);
    const PointJacobian j = ks.fingertip_jacobian(i);
    for (std::size_t d = 0; d < h.num_actuated(); ++d) {
      if (std::find(own.begin(), own.end(), d) != own.end()) continue;
      EXPECT_TRUE(j.col(6 + d).isZero(0.0)) << "tip " << i << " dof " << d;
    }
  }
}

TEST(InverseKinematics, ReachesReachableTargets) {
  Rng rng = make_rng(45);
  for (const char* name : kHands) {
    const auto h = cs_test::hand(name);
    int reached = 0;
    for (int k = 0; k < 40; ++k) {
      JointConfig goal = cs_test::random_config(h, rng);
      goal.base_pose.setZero();
      const std::size_t f = uniform_index(rng, h.num_fingertips());
      const Vec3 target = KinematicState(h, goal).fingertip(f);
      const auto res = ik_damped_least_squares(h, f, target, h.rest_pose(), {0.01, 500, 1e-6});
      EXPECT_TRUE(res.q.joint_values.allFinite());
      reached += res.residual < 1e-4;
    }
    EXPECT_GE(reached, 36) << name;
  }
}

TEST(InverseKinematics, StaysFiniteAndWithinLimits) {
  const auto h = cs_test::hand("three_finger");
  const Eigen::VectorXd lo = h.lower_limits(), hi = h.upper_limits();
  for (const Vec3& target : {Vec3(5, 0, 0), Vec3(0, 0, 0), Vec3(0.04, 0, 0.05)}) {
    const auto res = ik_damped_least_squares(h, 0, target, h.rest_pose());
    ASSERT_TRUE(res.q.joint_values.allFinite());
    EXPECT_TRUE(std::isfinite(res.residual));
    for (Eigen::Index d = 0; d < res.q.joint_values.size(); ++d) {
      EXPECT_GE(res.q.joint_values[d], lo[6 + d]);
      EXPECT_LE(res.q.joint_values[d], hi[6 + d]);
    }
  }
  EXPECT_THROW(ik_damped_least_squares(h, 9, Vec3::Zero(), h.rest_pose()), Error);
}

TEST(HandModel, DimensionChecksAndClamp) {
  const auto h = cs_test::hand("three_finger");
  JointConfig q = h.rest_pose();
  q.joint_values.resize(2);
  EXPECT_THROW(KinematicState(h, q), Error);
  JointConfig wild = h.rest_pose();
  wild.joint_values.setConstant(100.0);
  const auto c = h.clamp(wild);
  EXPECT_TRUE(c.joint_values.isApprox(h.upper_limits().tail(h.num_actuated())));
  EXPECT_EQ(h.dof(), 6 + h.num_actuated());
}

TEST(HandModel, NonAdjacentPairsSkipSharedAndNeighbouringLinks) {
  const auto h = cs_test::hand("three_finger");
  const auto pairs = h.non_adjacent_sphere_pairs();
  EXPECT_FALSE(pairs.empty());
  for (const auto& [a, b] : pairs) {
    const auto la = h.spheres()[a].at.link, lb = h.spheres()[b].at.link;
    EXPECT_NE(la, lb);
    for (std::size_t j = 0; j < h.joints().size(); ++j) {
      const auto& jt = h.joints()[j];
      EXPECT_FALSE((jt.parent == la && jt.child == lb) || (jt.parent == lb && jt.child == la));
    }
  }
}

TEST(HandModel, RejectsMalformedDescriptions) {
  std::ifstream in(cs_test::data_dir() / "hands" / "three_finger.json");
  const auto good = nlohmann::json::parse(in);
  auto bad = good;
  bad["joints"][0]["parent"] = "nowhere";
  EXPECT_THROW(hand_from_json(bad), Error);
  bad = good;
  bad["joints"][0]["limits"] = {1.0, -1.0};
  EXPECT_THROW(hand_from_json(bad), Error);
  bad = good;
  bad["joints"][0]["axis"] = {0.0, 0.0, 0.0};
  EXPECT_THROW(hand_from_json(bad), Error);
  bad = good;
  bad.erase("fingertips");
  EXPECT_THROW(hand_from_json(bad), Error);
  EXPECT_THROW(load_hand(cs_test::data_dir() / "hands" / "absent.json"), Error);
}

TEST(HandModel, ConfigJsonRoundTrip) {
  const auto h = cs_test::hand("jaw_gripper");
  Rng rng = make_rng(1);
  const JointConfig q = cs_test::random_config(h, rng);
  const auto back = config_from_json(config_to_json(q));
  EXPECT_EQ(back.stacked(), q.stacked());
}
