#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>

#include "batchlab/core/error.hpp"
#include "batchlab/dynamics/dynamics.hpp"
#include "dynamics_oracles.hpp"

namespace batchlab::dyn {
namespace {

using testing::random_chain;

KinematicTree single_revolute(const Vec3& axis, const Vec3& com, const Mat3& inertia,
                              double mass = 1.0) {
  KinematicTree tree;
  Link l;
  l.name = "link";
  l.joint = JointKind::kRevolute;
  l.axis = axis;
  l.com = com;
  l.mass = mass;
  l.inertia = inertia;
  tree.add_link(l);
  return tree;
}

KinematicTree free_body(double mass, const Mat3& inertia) {
  KinematicTree tree;
  Link l;
  l.name = "body";
  l.joint = JointKind::kFree;
  l.mass = mass;
  l.inertia = inertia;
  tree.add_link(l);
  return tree;
}

ArticulationState random_state(const KinematicTree& tree, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  ArticulationState s = ArticulationState::zeros(tree);
  for (int i = 0; i < tree.dof(); ++i) {
    s.q(i) = u(rng);
    s.qd(i) = u(rng);
  }
  return s;
}

TEST(Tree, RejectsInvalidTopologyAndInertia) {
  KinematicTree tree;
  Link bad;
  bad.parent = 3;
  EXPECT_THROW(tree.add_link(bad), InvalidArgument);
  Link neg;
  neg.mass = -1.0;
  EXPECT_THROW(tree.add_link(neg), InvalidArgument);
  Link nonpd;
  nonpd.inertia = Vec3(1, -1, 1).asDiagonal();
  EXPECT_THROW(tree.add_link(nonpd), InvalidArgument);
  Link ok;
  tree.add_link(ok);
  Link free_late;
  free_late.parent = 0;
  free_late.joint = JointKind::kFree;
  EXPECT_THROW(tree.add_link(free_late), InvalidArgument);
}

TEST(ForwardKinematics, UnitRotation) {
  const auto tree = single_revolute(Vec3::UnitZ(), Vec3(0.5, 0, 0), Mat3::Identity());
  VecX q(1);
  q << std::numbers::pi / 2;
  const auto x = forward_kinematics(tree, q, Transform::identity());
  const Vec3 tip = x[0].apply(Vec3(1, 0, 0));
  EXPECT_NEAR((tip - Vec3(0, 1, 0)).norm(), 0.0, 1e-12);
}

TEST(ForwardKinematics, ZeroConfigurationChainsFixedOffsets) {
  std::mt19937_64 rng(11);
  const auto tree = random_chain(rng, 5);
  const auto x = forward_kinematics(tree, VecX::Zero(5), Transform::identity());
  Transform acc;
  for (int i = 0; i < 5; ++i) {
    acc = compose(acc, tree.link(i).parent_to_joint);
    EXPECT_TRUE(approx_equal(x[static_cast<std::size_t>(i)], acc, 1e-12));
  }
}

TEST(ForwardKinematics, MatchesHomogeneousMatrixChain) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tree = random_chain(rng, 6);
    const auto s = random_state(tree, rng);
    const auto x = forward_kinematics(tree, s.q, Transform::identity());
    const auto oracle = testing::fk_matrix_chain(tree, s.q);
    for (int i = 0; i < 6; ++i) {
      EXPECT_LT((x[static_cast<std::size_t>(i)].matrix() - oracle[static_cast<std::size_t>(i)]).norm(), 1e-10);
    }
  }
}

TEST(Jacobian, PlanarTwoLinkAnalytic) {
  testing::TwoLinkParams p;
  p.l1 = 1.0;
  const auto tree = testing::two_link_tree(p);
  const MatX j = jacobian(tree, VecX::Zero(2), Transform::identity(), 1, Vec3(1, 0, 0));
  EXPECT_NEAR(j(1, 0), 2.0, 1e-12);
  EXPECT_NEAR(j(1, 1), 1.0, 1e-12);
  EXPECT_NEAR(j(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(j(5, 0), 1.0, 1e-12);
}

TEST(Jacobian, PrismaticColumn) {
  KinematicTree tree;
  Link l;
  l.joint = JointKind::kPrismatic;
  l.axis = Vec3::UnitZ();
  tree.add_link(l);
  VecX q(1);
  q << 0.3;
  const MatX j = jacobian(tree, q, Transform::identity(), 0, Vec3(0.2, 0.1, 0));
  EXPECT_NEAR((j.col(0).head<3>() - Vec3::UnitZ()).norm(), 0.0, 1e-12);
  EXPECT_NEAR(j.col(0).tail<3>().norm(), 0.0, 1e-12);
}

TEST(Jacobian, MatchesFiniteDifferencesOfForwardKinematics) {
  std::mt19937_64 rng(13);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const auto tree = random_chain(rng, 6);
    const auto s = random_state(tree, rng);
    const Vec3 offset = Vec3::Random() * 0.3;
    const MatX j = jacobian(tree, s.q, Transform::identity(), 5, offset);
    MatX fd(6, 6);
    for (int k = 0; k < 6; ++k) {
      VecX qp = s.q, qm = s.q;
      qp(k) += h;
      qm(k) -= h;
      const Transform xp = forward_kinematics(tree, qp, Transform::identity())[5];
      const Transform xm = forward_kinematics(tree, qm, Transform::identity())[5];
      fd.col(k).head<3>() = (xp.apply(offset) - xm.apply(offset)) / (2 * h);
      const Eigen::AngleAxisd d(xp.orientation * xm.orientation.conjugate());
      fd.col(k).tail<3>() = d.axis() * d.angle() / (2 * h);
    }
    EXPECT_LT((j - fd).norm() / std::max(1.0, j.norm()), 1e-5) << "trial " << trial;
  }
}

TEST(Jacobian, VelocityConsistencyOnFreeRoot) {
  std::mt19937_64 rng(14);
  KinematicTree tree;
  Link root;
  root.joint = JointKind::kFree;
  root.mass = 2.0;
  tree.add_link(root);
  for (int i = 1; i < 4; ++i) {
    Link l;
    l.parent = i - 1;
    l.joint = JointKind::kRevolute;
    l.axis = Vec3::Random().normalized();
    l.parent_to_joint = Transform::from_translation(Vec3::Random());
    tree.add_link(l);
  }
  ArticulationState s = random_state(tree, rng);
  s.root_pose = {Vec3::Random(), Quat(Vec3::Random().normalized().x(), 0.3, -0.2, 0.5).normalized()};
  s.root_lin_vel = Vec3::Random();
  s.root_ang_vel = Vec3::Random();
  const Vec3 offset(0.1, 0.2, 0.3);
  const MatX j = jacobian(tree, s.q, s.root_pose, 3, offset);
  const VecX v = j * s.velocity(tree);
  const double h = 1e-6;
  ArticulationState sp = s, sm = s;
  sp.q += h * s.qd;
  sm.q -= h * s.qd;
  sp.root_pose.position += h * s.root_lin_vel;
  sm.root_pose.position -= h * s.root_lin_vel;
  sp.root_pose.orientation = quat_exp(h * s.root_ang_vel) * s.root_pose.orientation;
  sm.root_pose.orientation = quat_exp(-h * s.root_ang_vel) * s.root_pose.orientation;
  const Vec3 pp = forward_kinematics(tree, sp.q, sp.root_pose)[3].apply(offset);
  const Vec3 pm = forward_kinematics(tree, sm.q, sm.root_pose)[3].apply(offset);
  EXPECT_LT((v.head<3>() - (pp - pm) / (2 * h)).norm(), 1e-5 * (1 + v.norm()));
  // Link spatial velocity agrees with the Jacobian.
  const auto spatial = link_spatial_velocities(tree, s.q, s);
  const Vec3 world_point = forward_kinematics(tree, s.q, s.root_pose)[3].apply(offset);
  EXPECT_LT((point_velocity(spatial[3], world_point) - v.head<3>()).norm(), 1e-10);
  EXPECT_LT((spatial[3].head<3>() - v.tail<3>()).norm(), 1e-10);
}

TEST(MassMatrix, ArmatureAddsToDiagonal) {
  const auto tree = single_revolute(Vec3::UnitZ(), Vec3::Zero(), Vec3(1, 1, 2).asDiagonal());
  VecX arm(1);
  arm << 0.1;
  EXPECT_NEAR(mass_matrix(tree, VecX::Zero(1), Transform::identity(), arm)(0, 0), 2.1, 1e-12);
  EXPECT_NEAR(mass_matrix(tree, VecX::Zero(1), Transform::identity())(0, 0), 2.0, 1e-12);
  VecX neg(1);
  neg << -0.1;
  EXPECT_THROW(mass_matrix(tree, VecX::Zero(1), Transform::identity(), neg), InvalidArgument);
}

TEST(MassMatrix, TwoLinkMatchesLagrangian) {
  testing::TwoLinkParams p;
  const auto tree = testing::two_link_tree(p);
  const testing::TwoLinkLagrangian oracle{p};
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const Eigen::Vector2d q(u(rng), u(rng));
    const MatX m = mass_matrix(tree, q, Transform::identity());
    EXPECT_LT((m - oracle.mass(q)).norm(), 1e-12);
  }
}

TEST(MassMatrix, SymmetricPositiveDefinite) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tree = random_chain(rng, 6);
    const auto s = random_state(tree, rng);
    const MatX m = mass_matrix(tree, s.q, Transform::identity());
    EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<MatX> eig(m);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(BiasForces, HorizontalPendulumGravityTorque) {
  // Axis +y, COM at the tip along +x: gravity -z produces torque about +y of
  // magnitude m g l.
  const auto tree = single_revolute(Vec3::UnitY(), Vec3(1, 0, 0), Mat3::Identity() * 1e-6);
  ArticulationState s = ArticulationState::zeros(tree);
  const VecX b = bias_forces(tree, s);
  EXPECT_NEAR(std::abs(b(0)), 9.81, 1e-12);
  EXPECT_NEAR(bias_forces(tree, s, Vec3::Zero()).norm(), 0.0, 1e-15);
}

TEST(BiasForces, ZeroVelocityZeroGravityIsZero) {
  std::mt19937_64 rng(17);
  const auto tree = random_chain(rng, 6);
  auto s = random_state(tree, rng);
  s.qd.setZero();
  EXPECT_LT(bias_forces(tree, s, Vec3::Zero()).norm(), 1e-12);
}

TEST(BiasForces, TwoLinkMatchesLagrangian) {
  testing::TwoLinkParams p;
  const auto tree = testing::two_link_tree(p);
  const testing::TwoLinkLagrangian oracle{p};
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    ArticulationState s = ArticulationState::zeros(tree);
    s.q << u(rng), u(rng);
    s.qd << u(rng), u(rng);
    const VecX b = bias_forces(tree, s, Vec3(0, -p.g, 0));
    EXPECT_LT((b - oracle.bias(s.q, s.qd)).norm(), 1e-8);
  }
}

TEST(BiasForces, EqualsGravityTorqueAtRest) {
  std::mt19937_64 rng(19);
  const auto tree = random_chain(rng, 4);
  auto s = random_state(tree, rng);
  s.qd.setZero();
  // J^T (m g) summed over links is the gravity generalized force.
  VecX expected = VecX::Zero(4);
  const auto x = forward_kinematics(tree, s.q, Transform::identity());
  for (int i = 0; i < 4; ++i) {
    const Vec3 c = x[static_cast<std::size_t>(i)].apply(tree.link(i).com);
    expected -= generalized_force(tree, s.q, Transform::identity(), i, c,
                                  tree.link(i).mass * kDefaultGravity);
  }
  EXPECT_LT((bias_forces(tree, s) - expected).norm(), 1e-10);
}

TEST(Contact, PenaltyFormula) {
  ContactProbe probe;
  probe.stiffness = 1000.0;
  probe.damping = 10.0;
  const auto c = penalty_contact(probe, 0.01, 0.0, Vec3::Zero(), Vec3::UnitZ());
  EXPECT_NEAR(c.normal_force, 10.0, 1e-12);
  EXPECT_TRUE(c.in_contact);
  const auto above = penalty_contact(probe, -0.01, 0.0, Vec3(1, 0, 0), Vec3::UnitZ());
  EXPECT_EQ(above.normal_force, 0.0);
  EXPECT_EQ(above.tangent_force.norm(), 0.0);
  EXPECT_FALSE(above.in_contact);
}

TEST(Contact, CoulombClamp) {
  ContactProbe probe;
  probe.stiffness = 1000.0;
  probe.friction = 0.5;
  const auto c = penalty_contact(probe, 0.01, 0.0, Vec3(100.0, 0, 0), Vec3::UnitZ());
  EXPECT_NEAR(c.tangent_force.norm(), 5.0, 1e-12);
  EXPECT_LT(c.tangent_force.x(), 0.0);
}

TEST(Contact, SeparatingVelocityNeverPulls) {
  ContactProbe probe;
  probe.stiffness = 1000.0;
  probe.damping = 1e4;
  const auto c = penalty_contact(probe, 0.001, 5.0, Vec3::Zero(), Vec3::UnitZ());
  EXPECT_EQ(c.normal_force, 0.0);
}

TEST(Contact, ProbeSetValidation) {
  ContactPointSet set;
  set.probes.push_back({});
  EXPECT_NO_THROW(set.validate());
  set.probes[0].radius = 0.0;
  EXPECT_THROW(set.validate(), InvalidArgument);
  set.probes[0].radius = 0.1;
  set.probes[0].damping = -1.0;
  EXPECT_THROW(set.validate(), InvalidArgument);
}

TEST(Step, AtRestWithoutGravityIsUnchanged) {
  std::mt19937_64 rng(20);
  const auto tree = random_chain(rng, 4);
  auto s = random_state(tree, rng);
  s.qd.setZero();
  const auto before = s;
  StepOptions opt;
  opt.gravity = Vec3::Zero();
  step(tree, s, VecX::Zero(4), opt);
  EXPECT_EQ(s.q, before.q);
  EXPECT_EQ(s.qd, before.qd);
}

TEST(Step, PendulumEnergyDriftBelowOnePercent) {
  const auto tree = single_revolute(Vec3::UnitY(), Vec3(1, 0, 0), Mat3::Identity() * 1e-3);
  ArticulationState s = ArticulationState::zeros(tree);
  StepOptions opt;
  opt.dt = 1e-3;
  // Potential measured from the lowest point so E0 = m g l.
  const double offset = 9.81;
  const double e0 = total_energy(tree, s) + offset;
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    step(tree, s, VecX::Zero(1), opt);
    worst = std::max(worst, std::abs(total_energy(tree, s) + offset - e0));
  }
  EXPECT_LT(worst / e0, 0.01);
}

TEST(Step, ImplicitPdStableWhereExplicitIsNot) {
  const auto tree = single_revolute(Vec3::UnitZ(), Vec3::Zero(), Mat3::Identity());
  StepOptions opt;
  opt.dt = 0.02;
  opt.gravity = Vec3::Zero();
  ImplicitPd pd;
  pd.stiffness = VecX::Constant(1, 1e4);
  pd.damping = VecX::Zero(1);
  pd.position_target = VecX::Zero(1);
  pd.velocity_target = VecX::Zero(1);

  ArticulationState implicit_state = ArticulationState::zeros(tree);
  implicit_state.q << 1.0;
  ArticulationState explicit_state = implicit_state;
  double implicit_max = 0.0, explicit_max = 0.0;
  for (int k = 0; k < 500; ++k) {
    StepOptions io = opt;
    io.implicit_pd = &pd;
    step(tree, implicit_state, VecX::Zero(1), io);
    implicit_max = std::max(implicit_max, std::abs(implicit_state.q(0)));
    VecX tau(1);
    tau << 1e4 * (0.0 - explicit_state.q(0));
    step(tree, explicit_state, tau, opt);
    explicit_max = std::max(explicit_max, std::abs(explicit_state.q(0)));
  }
  EXPECT_LT(implicit_max, 10.0);
  EXPECT_GT(explicit_max, 1e3);
}

TEST(Step, ImplicitPdEffortLimitClamps) {
  const auto tree = single_revolute(Vec3::UnitZ(), Vec3::Zero(), Mat3::Identity());
  StepOptions opt;
  opt.dt = 0.01;
  opt.gravity = Vec3::Zero();
  ImplicitPd pd;
  pd.stiffness = VecX::Constant(1, 1e3);
  pd.damping = VecX::Constant(1, 10.0);
  pd.position_target = VecX::Constant(1, 1.0);
  pd.velocity_target = VecX::Zero(1);
  pd.effort_limit = VecX::Constant(1, 5.0);
  opt.implicit_pd = &pd;
  ArticulationState s = ArticulationState::zeros(tree);
  const auto out = step(tree, s, VecX::Zero(1), opt);
  EXPECT_NEAR(out.implicit_effort(0), 5.0, 1e-12);
  EXPECT_NEAR(s.qd(0), 0.05, 1e-12);
}

TEST(Step, VelocityLimitClampsAfterSolve) {
  const auto tree = single_revolute(Vec3::UnitZ(), Vec3::Zero(), Mat3::Identity());
  StepOptions opt;
  opt.gravity = Vec3::Zero();
  opt.dt = 0.1;
  opt.velocity_limit = VecX::Constant(1, 0.5);
  ArticulationState s = ArticulationState::zeros(tree);
  step(tree, s, VecX::Constant(1, 100.0), opt);
  EXPECT_EQ(s.qd(0), 0.5);
}

TEST(Step, TwoLinkTrajectoryMatchesLagrangianSimulator) {
  testing::TwoLinkParams p;
  const auto tree = testing::two_link_tree(p);
  const testing::TwoLinkLagrangian oracle{p};
  ArticulationState s = ArticulationState::zeros(tree);
  s.q << 0.3, -0.7;
  s.qd << 0.5, 1.0;
  Eigen::Vector2d q = s.q, qd = s.qd;
  StepOptions opt;
  opt.dt = 1e-4;
  opt.gravity = Vec3(0, -p.g, 0);
  for (int k = 0; k < 1000; ++k) {
    step(tree, s, VecX::Zero(2), opt);
    oracle.step(q, qd, Eigen::Vector2d::Zero(), opt.dt);
    ASSERT_LT((s.q - q).norm() + (s.qd - qd).norm(), 1e-9) << "step " << k;
  }
}

TEST(Step, FreeBodyConservesLinearMomentum) {
  const auto tree = free_body(2.0, Vec3(0.1, 0.2, 0.3).asDiagonal());
  ArticulationState s = ArticulationState::zeros(tree);
  s.root_lin_vel = Vec3(1.0, -0.5, 0.25);
  s.root_ang_vel = Vec3(0.3, 2.0, -1.0);
  StepOptions opt;
  opt.gravity = Vec3::Zero();
  const Vec3 p0 = 2.0 * s.root_lin_vel;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 before = 2.0 * s.root_lin_vel;
    step(tree, s, VecX::Zero(0), opt);
    EXPECT_LT((2.0 * s.root_lin_vel - before).norm(), 1e-12);
  }
  EXPECT_LT((2.0 * s.root_lin_vel - p0).norm(), 1e-10);
  EXPECT_NEAR(s.root_pose.orientation.norm(), 1.0, 1e-12);
}

TEST(Step, DeterministicBitwise) {
  std::mt19937_64 rng(21);
  const auto tree = random_chain(rng, 5);
  const auto init = random_state(tree, rng);
  auto run = [&]() {
    ArticulationState s = init;
    StepOptions opt;
    for (int k = 0; k < 200; ++k) step(tree, s, VecX::Constant(5, 0.1), opt);
    return s;
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(std::memcmp(a.q.data(), b.q.data(), sizeof(double) * 5), 0);
  EXPECT_EQ(std::memcmp(a.qd.data(), b.qd.data(), sizeof(double) * 5), 0);
}

TEST(Step, DivergenceNamesEnv) {
  const auto tree = single_revolute(Vec3::UnitZ(), Vec3::Zero(), Mat3::Identity());
  ArticulationState s = ArticulationState::zeros(tree);
  s.qd(0) = std::numeric_limits<double>::infinity();
  StepOptions opt;
  opt.env_index = 7;
  try {
    step(tree, s, VecX::Zero(1), opt);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.env(), 7);
  }
}

TEST(Step, ProbeRestsOnGround) {
  // A point mass on a slider sinks until the spring balances gravity.
  KinematicTree tree;
  Link l;
  l.joint = JointKind::kPrismatic;
  l.axis = Vec3::UnitZ();
  l.mass = 1.0;
  tree.add_link(l);
  ContactPointSet probes;
  ContactProbe probe;
  probe.radius = 0.1;
  probe.stiffness = 1e4;
  probe.damping = 200.0;
  probes.probes.push_back(probe);
  ArticulationState s = ArticulationState::zeros(tree);
  s.q << 0.2;
  StepOptions opt;
  opt.probes = &probes;
  StepOutput out;
  for (int k = 0; k < 5000; ++k) out = step(tree, s, VecX::Zero(1), opt);
  EXPECT_NEAR(s.q(0), 0.1 - 9.81 / 1e4, 1e-5);
  ASSERT_EQ(out.contacts.size(), 1u);
  EXPECT_NEAR(out.contacts[0].normal_force, 9.81, 1e-3);
}

TEST(ExternalWrench, ZeroWrenchIsNoop) {
  std::mt19937_64 rng(22);
  const auto tree = random_chain(rng, 3);
  auto a = random_state(tree, rng);
  auto b = a;
  apply_external_wrench(tree, b, 2, Vec3::Zero(), Vec3::Zero());
  StepOptions opt;
  step(tree, a, VecX::Zero(3), opt);
  step(tree, b, VecX::Zero(3), opt);
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.qd, b.qd);
  EXPECT_THROW(apply_external_wrench(tree, b, 5, Vec3::Zero(), Vec3::Zero()), InvalidArgument);
}

TEST(ExternalWrench, UpwardForceHovers) {
  const double m = 1.5;
  const auto tree = free_body(m, Vec3(0.1, 0.1, 0.2).asDiagonal());
  ArticulationState s = ArticulationState::zeros(tree);
  StepOptions opt;
  for (int k = 0; k < 100; ++k) {
    apply_external_wrench(tree, s, 0, Vec3(0, 0, m * 9.81), Vec3::Zero());
    const Vec3 before = s.root_lin_vel;
    step(tree, s, VecX::Zero(0), opt);
    EXPECT_LT((s.root_lin_vel - before).norm(), 1e-9);
  }
}

TEST(ExternalWrench, TorqueSpinsFreeBody) {
  const auto tree = free_body(1.0, Vec3(0.1, 0.2, 0.4).asDiagonal());
  ArticulationState s = ArticulationState::zeros(tree);
  StepOptions opt;
  opt.gravity = Vec3::Zero();
  opt.dt = 0.01;
  apply_external_wrench(tree, s, 0, Vec3::Zero(), Vec3(0, 0, 2.0));
  step(tree, s, VecX::Zero(0), opt);
  EXPECT_NEAR(s.root_ang_vel.z(), 2.0 * 0.01 / 0.4, 1e-12);
  EXPECT_NEAR(s.root_ang_vel.head<2>().norm(), 0.0, 1e-12);
  // Consumed by the step.
  EXPECT_EQ(s.external_wrench[0].norm(), 0.0);
}

}  // namespace
}  // namespace batchlab::dyn
