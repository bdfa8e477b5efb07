#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace contactsynth;

namespace {

/// Exhaustive active-set oracle for small strictly convex QPs: every face of
/// the feasible set is tried and the best feasible face minimizer wins.
double active_set_oracle(const QpProblem& pb, Eigen::VectorXd* best_x) {
  const auto n = pb.P.rows(), m = pb.A.rows();
  double best = std::numeric_limits<double>::infinity();
  int combos = 1;
  for (int k = 0; k < m; ++k) combos *= 3;
  for (int code = 0; code < combos; ++code) {
    std::vector<std::pair<Eigen::Index, double>> act;
    int c = code;
    for (Eigen::Index k = 0; k < m; ++k, c /= 3) {
      if (c % 3 == 1 && std::isfinite(pb.l[k])) act.emplace_back(k, pb.l[k]);
      if (c % 3 == 2 && std::isfinite(pb.u[k])) act.emplace_back(k, pb.u[k]);
      if (c % 3 == 1 && !std::isfinite(pb.l[k])) goto next;
      if (c % 3 == 2 && !std::isfinite(pb.u[k])) goto next;
    }
    {
      const auto a = static_cast<Eigen::Index>(act.size());
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + a, n + a);
      Eigen::VectorXd rhs(n + a);
      kkt.topLeftCorner(n, n) = pb.P;
      rhs.head(n) = -pb.q;
      for (Eigen::Index r = 0; r < a; ++r) {
        kkt.block(n + r, 0, 1, n) = pb.A.row(act[r].first);
        kkt.block(0, n + r, n, 1) = pb.A.row(act[r].first).transpose();
        rhs[n + r] = act[r].second;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd x = lu.solve(rhs).head(n);
      const Eigen::VectorXd ax = pb.A * x;
      if (((ax - pb.l).array() < -1e-10).any() || ((ax - pb.u).array() > 1e-10).any()) continue;
      const double f = 0.5 * x.dot(pb.P * x) + pb.q.dot(x);
      if (f < best) best = f, *best_x = x;
    }
  next:;
  }
  return best;
}

}  // namespace

TEST(Qp, MatchesActiveSetOracle) {
  Rng rng = make_rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 2)), m = 2 + static_cast<int>(uniform_index(rng, 3));
    Eigen::MatrixXd r = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return standard_normal(rng); });
    QpProblem pb;
    pb.P = r * r.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    pb.q = Eigen::VectorXd::NullaryExpr(n, [&] { return 3.0 * standard_normal(rng); });
    pb.A = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return standard_normal(rng); });
    pb.l = Eigen::VectorXd::Constant(m, -1.0);
    pb.u = Eigen::VectorXd::Constant(m, 1.0);
    if (trial % 3 == 0) pb.u[0] = detail::kInf;
    Eigen::VectorXd x_ref;
    const double f_ref = active_set_oracle(pb, &x_ref);
    const auto sol = solve_qp(pb);
    ASSERT_EQ(sol.status, QpStatus::Solved) << "trial " << trial;
    const double f = 0.5 * sol.x.dot(pb.P * sol.x) + pb.q.dot(sol.x);
    EXPECT_NEAR(f, f_ref, 1e-7 * (1.0 + std::abs(f_ref))) << "trial " << trial;
    EXPECT_LE((sol.x - x_ref).norm(), 1e-5 * (1.0 + x_ref.norm())) << "trial " << trial;
  }
}

TEST(Qp, EqualityAndInfeasible) {
  QpProblem pb;
  pb.P = Eigen::Matrix2d::Identity();
  pb.q = Eigen::Vector2d::Zero();
  pb.A = Eigen::RowVector2d(1.0, 1.0);
  pb.l = pb.u = Eigen::VectorXd::Constant(1, 2.0);
  auto sol = solve_qp(pb);
  ASSERT_EQ(sol.status, QpStatus::Solved);
  EXPECT_TRUE(sol.x.isApprox(Eigen::Vector2d(1.0, 1.0), 1e-8));

  pb.A = Eigen::MatrixXd(2, 2);
  pb.A << 1, 0, 1, 0;
  pb.l = Eigen::Vector2d(1.0, -detail::kInf);
  pb.u = Eigen::Vector2d(detail::kInf, -1.0);
  sol = solve_qp(pb);
  EXPECT_EQ(sol.status, QpStatus::PrimalInfeasible);
}

TEST(GraspMap, TorqueAndLinearity) {
  const Vec3 p(0.1, -0.02, 0.03), f(0.3, 1.0, -0.5);
  const Wrench w = grasp_matrix(p) * f;
  EXPECT_TRUE(w.head<3>().isApprox(f));
  EXPECT_TRUE(w.tail<3>().isApprox(p.cross(f)));
  EXPECT_TRUE((grasp_matrix(p) * (2.5 * f)).isApprox(2.5 * w));
}

TEST(FrictionCone, PyramidLiesInsideCone) {
  Rng rng = make_rng(55);
  for (int k = 0; k < 2000; ++k) {
    const FrictionCone cone{random_unit_vector(rng), uniform(rng, 0.0, 1.5)};
    const Vec3 f = 2.0 * Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng));
    for (int facets : {4, 8, 16}) {
      if (((cone.pyramid_rows(facets) * f).array() >= 0.0).all()) {
        EXPECT_TRUE(cone.contains(f, 1e-12));
      }
    }
  }
  const FrictionCone cone{Vec3::UnitZ(), 0.5};
  EXPECT_TRUE(cone.contains(Vec3(0.5, 0, 1)));
  EXPECT_FALSE(cone.contains(Vec3(0.51, 0, 1)));
  EXPECT_FALSE(cone.contains(Vec3(0, 0, -1)));
}

TEST(TargetWrench, WorkedExample) {
  MassProperties mp{2.0, 0.1 * Mat3::Identity(), Vec3::Zero()};
  const Wrench w = target_wrench(Vec3(0.1, 0, 0), Vec3(0, 0.2, 0), mp, 0.5);
  const double norm = std::sqrt(0.4 * 0.4 + 16.0 * 16.0);
  Wrench expected;
  expected << 0.4 / norm, 0, 0, 0, 16.0 / norm, 0;
  EXPECT_LE((w - expected).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(w[0], 0.02499, 1e-5);
  EXPECT_NEAR(w[4], 0.99969, 1e-5);
}

TEST(TargetWrench, PureMotionsAndErrors) {
  MassProperties mp{0.2, Mat3::Identity() * 1e-4, Vec3::Zero()};
  EXPECT_TRUE(target_wrench(Vec3(0, 0, 0.05), Vec3::Zero(), mp, 1.0).isApprox((Wrench() << 0, 0, 1, 0, 0, 0).finished()));
  EXPECT_TRUE(target_wrench(Vec3::Zero(), Vec3(0, 0, 0.3), mp, 1.0).isApprox((Wrench() << 0, 0, 0, 0, 0, 1).finished()));
  try {
    target_wrench(Vec3::Zero(), Vec3::Zero(), mp, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroMotion);
  }
  EXPECT_THROW(target_wrench(Vec3(1, 0, 0), Vec3::Zero(), mp, 0.0), Error);
}

TEST(TargetWrench, IndependentOfDuration) {
  Rng rng = make_rng(66);
  for (int k = 0; k < 200; ++k) {
    const Mat3 r = random_rotation(rng);
    const Vec3 diag(uniform(rng, 0.01, 1), uniform(rng, 0.01, 1), uniform(rng, 0.01, 1));
    MassProperties mp{uniform(rng, 0.1, 5), r * diag.asDiagonal() * r.transpose(), Vec3::Zero()};
    const Vec3 dx = random_unit_vector(rng) * uniform(rng, 0, 0.2), dth = random_unit_vector(rng) * uniform(rng, 0, 0.5);
    const Wrench a = target_wrench(dx, dth, mp, uniform(rng, 0.01, 10)), b = target_wrench(dx, dth, mp, uniform(rng, 0.01, 10));
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  }
}

TEST(ContactForces, SingleContactPushesAlongNormal) {
  const auto cloud = make_sphere(0.05, 1000);
  const std::size_t i = cloud.nearest_index(Vec3(0, 0, -0.05));
  const GraspMap g = grasp_map(cloud.point(i), cloud, 0.5);
  Wrench w = Wrench::Zero();
  w.head<3>() = -cloud.normal(i);
  w.tail<3>() = cloud.point(i).cross(-cloud.normal(i));
  const auto res = optimal_contact_forces(std::span(&g, 1), w);
  EXPECT_LT(res.residual_norm(), 1e-6);
  EXPECT_TRUE(res.forces[0].isApprox(-cloud.normal(i), 1e-5));
  const auto zero = optimal_contact_forces(std::span(&g, 1), Wrench::Zero());
  EXPECT_LT(zero.forces[0].norm(), 1e-6);
}

TEST(ContactForces, NeverWorseThanBruteForceGrid) {
  Rng rng = make_rng(303);
  const int facets = kDefaultPyramidFacets;
  for (int trial = 0; trial < 40; ++trial) {
    const int count = 2 + trial % 2;
    const auto maps = cs_test::random_contacts(rng, count, uniform(rng, 0.2, 1.0));
    Wrench w;
    for (int c = 0; c < 6; ++c) w[c] = standard_normal(rng);
    w.normalize();
    const auto res = optimal_contact_forces(maps, w, facets);
    const auto oriented = with_oriented_pyramids(maps);
    for (std::size_t i = 0; i < maps.size(); ++i) EXPECT_TRUE(cs_test::in_pyramid(oriented[i], res.forces[i], facets, 1e-7));
    const double qp = res.residual.squaredNorm();
    const double grid = cs_test::grid_objective(maps, w, facets);
    EXPECT_LE(qp, grid * (1.0 + 1e-3) + 1e-12) << "trial " << trial;
  }
}

TEST(ContactForces, RotationEquivariance) {
  Rng rng = make_rng(404);
  for (int trial = 0; trial < 30; ++trial) {
    const auto maps = cs_test::random_contacts(rng, 3, 0.6);
    Wrench w;
    for (int c = 0; c < 6; ++c) w[c] = standard_normal(rng);
    const Mat3 r = random_rotation(rng);
    std::vector<GraspMap> rotated;
    for (const auto& g : maps) {
      const Vec3 p = r * g.point;
      rotated.push_back({grasp_matrix(p), p, {r * g.cone.axis, g.cone.mu}});
    }
    Wrench wr;
    wr << r * w.head<3>(), r * w.tail<3>();
    const double a = optimal_contact_forces(maps, w).residual_norm();
    const double b = optimal_contact_forces(rotated, wr).residual_norm();
    EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, a));
  }
}

TEST(ContactForces, ResidualBelowRandomFeasibleForces) {
  Rng rng = make_rng(505);
  const auto maps = cs_test::random_contacts(rng, 3, 0.4);
  Wrench w;
  w << 0.2, -0.5, 0.7, 0.01, 0.02, -0.01;
  const double best = optimal_contact_forces(maps, w).residual_norm();
  for (int k = 0; k < 1000; ++k) {
    std::vector<Vec3> f;
    for (const auto& g : maps) {
      const auto [t1, t2] = g.cone.tangents();
      const double phi = uniform(rng, 0, 2 * M_PI), s = uniform(rng, 0, g.cone.mu * std::cos(M_PI / 8));
      f.push_back(uniform(rng, 0, 3) * (g.cone.axis + s * (std::cos(phi) * t1 + std::sin(phi) * t2)));
    }
    EXPECT_LE(best, (total_wrench(maps, f) - w).norm() + 1e-7);
  }
}

TEST(JointProjection, RevoluteAndPrismaticRows) {
  const ArticulatedJoint hinge{ArticulatedJoint::Type::Revolute, Vec3::UnitZ(), Vec3(0.1, 0, 0)};
  const auto jp = joint_projection(hinge);
  Wrench w;
  w << 0, 2, 0, 0, 0, 0.5;
  EXPECT_NEAR(jp.project(w)[0], Vec3(0.1, 0, 0).cross(Vec3::UnitZ()).dot(Vec3(0, 2, 0)) + 0.5, 1e-15);
  const std::vector<ArticulatedJoint> two{hinge, {ArticulatedJoint::Type::Prismatic, Vec3::UnitX(), Vec3::Zero()}};
  const auto jp2 = joint_projection(two);
  EXPECT_EQ(jp2.matrix.rows(), 2);
  w << 3, 0, 0, 1, 1, 1;
  EXPECT_DOUBLE_EQ(jp2.project(w)[1], 3.0);
  EXPECT_THROW(joint_projection(ArticulatedJoint{ArticulatedJoint::Type::Revolute, Vec3(0, 0, 2), Vec3::Zero()}), Error);
}

TEST(ForceClosure, TetrahedralGraspIsClosed) {
  const auto cloud = make_sphere(0.05, 2000);
  std::vector<GraspMap> maps;
  for (const Vec3& d : {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)})
    maps.push_back(grasp_map(cloud.point(cloud.nearest_index(0.05 * d.normalized())), cloud, 0.5));
  EXPECT_TRUE(is_force_closure(maps));
}

TEST(ForceClosure, DegenerateGraspsAreOpen) {
  const auto cloud = make_sphere(0.05, 2000);
  const auto at = [&](const Vec3& p) { return grasp_map(cloud.point(cloud.nearest_index(p)), cloud, 0.5); };
  const std::vector<GraspMap> one{at(Vec3(0, 0, 0.05))};
  EXPECT_FALSE(is_force_closure(one));
  const std::vector<GraspMap> none;
  EXPECT_FALSE(is_force_closure(none));
  std::vector<GraspMap> frictionless{at(Vec3(0.05, 0, 0)), at(Vec3(-0.05, 0, 0))};
  for (auto& g : frictionless) g.cone.mu = 0.0;
  EXPECT_FALSE(is_force_closure(frictionless));
}

// Point contacts apply no torque about their own normals, so two antipodal
// contacts can never resist a twist about the line joining them.
TEST(ForceClosure, AntipodalPairCannotResistTwistAboutContactLine) {
  std::vector<Vec3> p{Vec3(0.05, 0, 0), Vec3(-0.05, 0, 0), Vec3(0, 0, 0.05), Vec3(0, 0, -0.05)};
  std::vector<Vec3> n{Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitZ(), -Vec3::UnitZ()};
  const OrientedPointCloud cloud(p, n);
  const std::vector<GraspMap> maps{grasp_map(p[0], cloud, 0.5), grasp_map(p[1], cloud, 0.5)};
  EXPECT_FALSE(is_force_closure(maps));
  for (int j = 0; j < 6; ++j) {
    for (double sign : {1.0, -1.0}) {
      Wrench w = Wrench::Zero();
      w[j] = sign;
      const double r = optimal_contact_forces(maps, w).residual_norm();
      if (j == 3) {
        EXPECT_NEAR(r, 1.0, 1e-6);
      } else {
        EXPECT_LT(r, kClosureResidualTol) << "axis " << j << " sign " << sign;
      }
    }
  }
}
