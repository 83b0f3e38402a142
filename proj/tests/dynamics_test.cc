// Copyright 2026 The nechain Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "nechain/dynamics.hpp"
#include "nechain/reference_n3.hpp"
#include "test_util.hpp"

namespace nechain {
namespace {

using testing_util::max_abs;
using testing_util::random_consistent_state;
using testing_util::random_quat;
using testing_util::random_spec;
using testing_util::random_state;
using testing_util::random_vec;

// Configuration advanced along the current angular velocities only; enough
// for derivatives of configuration-dependent blocks that ignore positions.
ChainState TurnAttitudes(const ChainState& s, double h) {
  ChainState out = s;
  for (auto& b : out.bodies) b.attitude = rotate_inertial(b.attitude, h * b.omega);
  return out;
}

TEST(InertiaToInertial, IdentityAttitude) {
  const Mat3 i = Vec3(1, 2, 3).asDiagonal();
  EXPECT_EQ(inertia_to_inertial(i, UnitQuaternion()), i);
}

TEST(InertiaToInertial, EigenvaluesPreserved) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 100; ++k) {
    const Mat3 i = testing_util::random_inertia(rng);
    const Mat3 r = inertia_to_inertial(i, random_quat(rng));
    const Vec3 a = Eigen::SelfAdjointEigenSolver<Mat3>(i).eigenvalues();
    const Vec3 b = Eigen::SelfAdjointEigenSolver<Mat3>(r).eigenvalues();
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(max_abs(r - r.transpose()), 1e-15);
  }
}

TEST(InertiaToInertial, QuarterYaw) {
  const Mat3 r = inertia_to_inertial(Vec3(1, 2, 3).asDiagonal(), quat_from_euler({0, 0, std::numbers::pi / 2}));
  EXPECT_LT(max_abs(r - Mat3(Vec3(2, 1, 3).asDiagonal())), 1e-15);
}

ChainSpec TwoLinks(const Vec3& stiffness) {
  ChainSpec spec;
  spec.bodies = {{1.0, Mat3::Identity()}, {2.0, Vec3(0.2, 0.5, 0.6).asDiagonal()}};
  JointSpec js;
  js.attach_parent = Vec3(0.5, 0, 0);
  js.attach_child = Vec3(-0.5, 0, 0);
  js.stiffness = stiffness;
  spec.joints = {js};
  return spec;
}

TEST(JointMoments, AlignedBodiesGiveZero) {
  const ChainSpec spec = TwoLinks({3, 4, 5});
  const ChainState s = assemble_consistent_state(spec, {{}, quat_from_euler({0.3, 0.2, 0.1})}, {}, {}, {});
  const auto m = joint_moments(spec, s);
  EXPECT_LT(m[0].moment.norm(), 1e-15);
}

TEST(JointMoments, PureRoll) {
  const double k = 7.0, phi = 0.4;
  const ChainSpec spec = TwoLinks({k, 0, 0});
  const UnitQuaternion base = quat_from_euler({0.1, -0.3, 0.8});
  const ChainState s = assemble_consistent_state(spec, {{}, base}, {{phi, 0, 0}}, {}, {});
  const auto m = joint_moments(spec, s);
  EXPECT_NEAR(m[0].relative.phi, phi, 1e-14);
  EXPECT_NEAR(m[0].relative.theta, 0.0, 1e-14);
  EXPECT_NEAR(m[0].relative.psi, 0.0, 1e-14);
  const Vec3 b1 = rotation_from_quat(base).row(0).transpose();
  EXPECT_LT((m[0].moment - k * phi * b1).norm(), 1e-14);
  EXPECT_NEAR(m[0].moment.norm(), k * phi, 1e-14);
}

TEST(JointMoments, RecoversConstructionAngles) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  const ChainSpec spec = TwoLinks({1, 1, 1});
  for (int k = 0; k < 200; ++k) {
    const JointAngles a{u(rng), u(rng), u(rng)};
    const ChainState s = assemble_consistent_state(spec, {{}, random_quat(rng)}, {a}, {}, {});
    const auto m = joint_moments(spec, s);
    EXPECT_NEAR(m[0].relative.phi, a.phi, 1e-12);
    EXPECT_NEAR(m[0].relative.theta, a.theta, 1e-12);
    EXPECT_NEAR(m[0].relative.psi, a.psi, 1e-12);
    for (const Vec3& axis : m[0].axes) EXPECT_NEAR(axis.norm(), 1.0, 1e-12);
  }
}

TEST(JointMoments, SmallAngleMatchesRotationVector) {
  std::mt19937_64 rng(33);
  const double k = 5.0;
  const ChainSpec spec = TwoLinks({k, k, k});
  for (int trial = 0; trial < 50; ++trial) {
    const double eps = 1e-3;
    const JointAngles a{eps * random_vec(rng).x(), eps * random_vec(rng).y(), eps * random_vec(rng).z()};
    const ChainState s = assemble_consistent_state(spec, {{}, random_quat(rng)}, {a}, {}, {});
    const UnitQuaternion rel = quat_multiply(quat_conjugate(s.bodies[0].attitude), s.bodies[1].attitude);
    const Vec3 rv = rotation_from_quat(s.bodies[0].attitude).transpose() * rotation_vector(rel);
    const Vec3 m = joint_moments(spec, s)[0].moment;
    EXPECT_LT((m - k * rv).norm(), 10.0 * k * eps * eps);
  }
}

TEST(JointMoments, SpringIsRestoring) {
  // Moment on body 1 points along the relative rotation of body 2, pulling
  // body 1 toward it; body 2 gets the opposite.
  const ChainSpec spec = TwoLinks({2, 2, 2});
  const ChainState s = assemble_consistent_state(spec, {}, {{0, 0, 0.2}}, {}, {});
  const AssembledSystem sys = assemble(spec, s);
  EXPECT_GT(sys.force(6 + 2), 0.0);
  EXPECT_LT(sys.force(9 + 2), 0.0);
}

TEST(JointMoments, DampingOpposesRelativeRate) {
  ChainSpec spec = TwoLinks({0, 0, 0});
  spec.joints[0].damping = Vec3(0.5, 0.5, 0.5);
  const ChainState s = assemble_consistent_state(spec, {}, {}, {}, {Vec3(0, 0, 1.0)});
  const Vec3 m = joint_moments(spec, s)[0].moment;
  EXPECT_LT((m - Vec3(0, 0, 0.5)).norm(), 1e-15);
}

TEST(Assemble, SingleBody) {
  ChainSpec spec;
  const Mat3 ib = Vec3(1, 2, 3).asDiagonal();
  spec.bodies = {{2.0, ib}};
  spec.gravity = Vec3(0, 0, -9.81);
  std::mt19937_64 rng(34);
  ChainState s = random_state(rng, 1);
  VectorXd port(6);
  port << 1, 2, 3, 4, 5, 6;
  const AssembledSystem sys = assemble(spec, s, port);
  EXPECT_EQ(sys.jacobian.rows(), 0);
  const Mat3 ii = inertia_to_inertial(ib, s.bodies[0].attitude);
  EXPECT_LT(max_abs(sys.mass.topLeftCorner<3, 3>() - 2.0 * Mat3::Identity()), 1e-15);
  EXPECT_LT(max_abs(sys.mass.bottomRightCorner<3, 3>() - ii), 1e-15);
  const Vec3 w = s.bodies[0].omega;
  EXPECT_LT((sys.force.head<3>() - (Vec3(1, 2, 3) + 2.0 * spec.gravity)).norm(), 1e-14);
  EXPECT_LT((sys.force.tail<3>() - (Vec3(4, 5, 6) - w.cross(ii * w))).norm(), 1e-14);
}

TEST(Assemble, DistributionMatricesMatchJacobian) {
  std::mt19937_64 rng(35);
  for (int n = 1; n <= 6; ++n) {
    const ChainSpec spec = random_spec(rng, n);
    const AssembledSystem sys = assemble(spec, random_state(rng, n));
    EXPECT_EQ(max_abs(sys.force_dist + sys.jacobian.leftCols(3 * n).transpose()), 0.0);
    EXPECT_EQ(max_abs(sys.moment_dist + sys.jacobian.rightCols(3 * n).transpose()), 0.0);
    EXPECT_EQ(max_abs(sys.coriolis.topRows(3 * n)), 0.0);
    EXPECT_EQ(max_abs(sys.coriolis.leftCols(3 * n)), 0.0);
    EXPECT_LT(max_abs(sys.mass - sys.mass.transpose()), 1e-15);
  }
}

TEST(Assemble, ThreeBodyReferenceOracle) {
  const auto summary = reference::run_oracle(123, 100);
  EXPECT_LT(summary.worst_block.deviation, 1e-12) << summary.worst_block.block;
  EXPECT_LT(summary.worst_solve.deviation, 1e-11) << summary.worst_solve.block;
}

TEST(Assemble, OracleDetectsInjectedFault) {
  const auto summary = reference::run_oracle(123, 3, reference::Fault::kJOmega);
  EXPECT_FALSE(summary.passed);
  EXPECT_EQ(summary.worst_block.block, "J_omega");
}

TEST(Assemble, GammaIsMinusJacobianRateTimesTwist) {
  std::mt19937_64 rng(36);
  const ChainSpec spec = random_spec(rng, 4);
  const ChainState s = random_consistent_state(rng, spec);
  const AssembledSystem sys = assemble(spec, s);
  const VectorXd jdot_nu = jacobian_derivative(sys) * sys.twist;
  EXPECT_LT(max_abs(sys.gamma + jdot_nu), 1e-13);
  // Finite difference of J along the motion, applied to the frozen twist.
  for (double h : {1e-3, 1e-4}) {
    const MatrixXd jp = assemble_kinematics(spec, TurnAttitudes(s, h)).jacobian;
    const MatrixXd jm = assemble_kinematics(spec, TurnAttitudes(s, -h)).jacobian;
    const VectorXd fd = (jp - jm) / (2 * h) * sys.twist;
    EXPECT_LT(max_abs(fd + sys.gamma), 50.0 * h * h);
  }
}

TEST(Solve, FreeBody) {
  ChainSpec spec;
  spec.bodies = {{4.0, Mat3::Identity()}};
  ChainState s;
  s.bodies.resize(1);
  VectorXd port = VectorXd::Zero(6);
  port.head<3>() = Vec3(2, -4, 8);
  const SolveResult r = solve_augmented(assemble(spec, s, port));
  EXPECT_LT((r.accel.head<3>() - Vec3(0.5, -1, 2)).norm(), 1e-15);
  EXPECT_EQ(r.joint_forces.size(), 0);
}

TEST(Solve, TwoBodiesUnderGravity) {
  ChainSpec spec = TwoLinks({0, 0, 0});
  spec.gravity = Vec3(0, 0, -9.81);
  const ChainState s = assemble_consistent_state(spec, {{}, quat_from_euler({0.2, 0.4, 0.1})},
                                                 {{0.3, -0.5, 0.2}}, {}, {});
  const AssembledSystem sys = assemble(spec, s);
  const SolveResult r = solve_augmented(sys);
  EXPECT_LT(max_abs(sys.jacobian * r.accel - sys.gamma), 1e-14);
  const Vec3 total = 1.0 * r.accel.segment<3>(0) + 2.0 * r.accel.segment<3>(3);
  EXPECT_LT((total - 3.0 * spec.gravity).norm(), 1e-13);
}

TEST(Solve, SchurMatchesDense) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3;
    const ChainSpec spec = random_spec(rng, n);
    const AssembledSystem sys = assemble(spec, random_state(rng, n, 2.0));
    const SolveResult a = solve_augmented(sys, {SolvePath::kSchur});
    const SolveResult b = solve_augmented(sys, {SolvePath::kDense});
    EXPECT_FALSE(a.used_dense_fallback);
    EXPECT_TRUE(b.used_dense_fallback);
    EXPECT_LT(max_abs(a.accel - b.accel), 1e-11);
    EXPECT_LT(max_abs(a.joint_forces - b.joint_forces), 1e-11);
    EXPECT_LT(augmented_residual(sys, a), 1e-12);
    EXPECT_LT(augmented_residual(sys, b), 1e-12);
  }
}

TEST(Solve, ResidualSmallForLongChains) {
  std::mt19937_64 rng(38);
  for (int n : {2, 5, 8, 16}) {
    const ChainSpec spec = random_spec(rng, n);
    const AssembledSystem sys = assemble(spec, random_consistent_state(rng, spec, 1.0, 2.0));
    const SolveResult r = solve_augmented(sys);
    EXPECT_LT(augmented_residual(sys, r), 1e-10) << n;
    EXPECT_GE(r.condition_estimate, 1.0);
  }
}

TEST(Solve, FallbackOnConditionLimit) {
  std::mt19937_64 rng(39);
  const ChainSpec spec = random_spec(rng, 4);
  const AssembledSystem sys = assemble(spec, random_state(rng, 4));
  SolveOptions opts;
  opts.condition_limit = 0.5;
  const SolveResult a = solve_augmented(sys, opts);
  EXPECT_TRUE(a.used_dense_fallback);
  EXPECT_LT(max_abs(a.accel - solve_augmented(sys).accel), 1e-11);
  opts.path = SolvePath::kSchur;
  try {
    solve_augmented(sys, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRankDeficientConstraints);
  }
}

TEST(Solve, NonSpdMass) {
  std::mt19937_64 rng(40);
  const ChainSpec spec = random_spec(rng, 2);
  AssembledSystem sys = assemble(spec, random_state(rng, 2));
  sys.inertia[1] = -Mat3::Identity();
  try {
    solve_augmented(sys);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonSpdMass);
    EXPECT_TRUE(e.is_solver_failure());
  }
}

TEST(Solve, MomentumRatesVanishWithoutExternalLoads) {
  std::mt19937_64 rng(41);
  for (bool stiff : {false, true}) {
    ChainSpec spec = random_spec(rng, 5, stiff);
    spec.gravity = Vec3::Zero();
    const ChainState s = random_consistent_state(rng, spec, 1.0, 2.0);
    const AssembledSystem sys = assemble(spec, s);
    const SolveResult r = solve_augmented(sys);
    Vec3 dl = Vec3::Zero(), dh = Vec3::Zero();
    for (int i = 0; i < 5; ++i) {
      const Vec3 a = r.accel.segment<3>(3 * i);
      const Vec3 alpha = r.accel.segment<3>(15 + 3 * i);
      const Vec3 w = s.bodies[i].omega;
      dl += sys.masses[i] * a;
      dh += s.bodies[i].position.cross(sys.masses[i] * a) + sys.inertia[i] * alpha + w.cross(sys.inertia[i] * w);
    }
    EXPECT_LT(dl.norm(), 1e-10);
    EXPECT_LT(dh.norm(), 1e-10);
  }
}

TEST(KktInverse, SingleBody) {
  ChainSpec spec;
  spec.bodies = {{2.0, Vec3(1, 2, 3).asDiagonal()}};
  ChainState s;
  s.bodies.resize(1);
  const AssembledSystem sys = assemble(spec, s);
  const KktInverse k = kkt_inverse_blocks(sys);
  EXPECT_LT(max_abs(k.top_left - sys.mass.inverse()), 1e-15);
  EXPECT_EQ(k.top_right.size(), 0);
  EXPECT_EQ(k.bottom_right.size(), 0);
}

TEST(KktInverse, MultipliesBackToIdentity) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const ChainSpec spec = random_spec(rng, 3);
    const AssembledSystem sys = assemble(spec, random_state(rng, 3));
    const KktInverse inv = kkt_inverse_blocks(sys);
    const int nd = sys.dof(), nc = sys.constraints();
    MatrixXd k = MatrixXd::Zero(nd + nc, nd + nc), ki(nd + nc, nd + nc);
    k << sys.mass, sys.jacobian.transpose(), sys.jacobian, MatrixXd::Zero(nc, nc);
    ki << inv.top_left, inv.top_right, inv.bottom_left, inv.bottom_right;
    EXPECT_LT(max_abs(k * ki - MatrixXd::Identity(nd + nc, nd + nc)), 1e-10);
    EXPECT_LT(max_abs(inv.schur - inv.schur.transpose()), 1e-12);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatrixXd>(inv.schur).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(ConstraintProjector, Identities) {
  std::mt19937_64 rng(43);
  const ChainSpec spec = random_spec(rng, 4);
  const AssembledSystem sys = assemble(spec, random_state(rng, 4));
  const MatrixXd p = constraint_projector(sys);
  EXPECT_LT(max_abs(sys.jacobian * p), 1e-12);
  EXPECT_LT(max_abs(p * p - p), 1e-12);
  // M-orthogonal: M P is symmetric.
  const MatrixXd mp = sys.mass * p;
  EXPECT_LT(max_abs(mp - mp.transpose()), 1e-12);
  // Top-left block of the KKT inverse is P M^{-1}.
  EXPECT_LT(max_abs(kkt_inverse_blocks(sys).top_left - p * inverse_mass(sys)), 1e-12);
}

TEST(ConstraintProjector, RateMatchesFiniteDifference) {
  std::mt19937_64 rng(44);
  const ChainSpec spec = random_spec(rng, 4);
  const ChainState s = random_consistent_state(rng, spec, 1.0, 1.5);
  const MatrixXd dp = constraint_projector_derivative(assemble_kinematics(spec, s));
  double prev = 0.0;
  for (double h : {1e-3, 5e-4}) {
    const MatrixXd pp = constraint_projector(assemble_kinematics(spec, TurnAttitudes(s, h)));
    const MatrixXd pm = constraint_projector(assemble_kinematics(spec, TurnAttitudes(s, -h)));
    const double err = max_abs((pp - pm) / (2 * h) - dp);
    EXPECT_LT(err, 1e-4);
    if (prev > 0.0) {
      EXPECT_GT(prev / err, 3.0);
    }
    prev = err;
  }
}

TEST(SkewSymmetry, ZeroAngularVelocity) {
  std::mt19937_64 rng(45);
  const ChainSpec spec = random_spec(rng, 3);
  ChainState s = random_state(rng, 3);
  for (auto& b : s.bodies) b.omega.setZero();
  EXPECT_EQ(max_abs(mass_derivative_minus_2c(assemble(spec, s))), 0.0);
}

TEST(SkewSymmetry, RandomStates) {
  std::mt19937_64 rng(46);
  for (int trial = 0; trial < 200; ++trial) {
    const ChainSpec spec = random_spec(rng, 4);
    const AssembledSystem sys = assemble(spec, random_state(rng, 4, 3.0));
    const MatrixXd n = mass_derivative_minus_2c(sys);
    EXPECT_LT(max_abs(n + n.transpose()), 1e-12);
    EXPECT_LT(max_abs(n - (mass_derivative(sys) - 2.0 * sys.coriolis)), 1e-13);
    const VectorXd v = VectorXd::Random(sys.dof());
    EXPECT_LT(std::abs(v.dot(n * v)), 1e-12 * v.squaredNorm());
  }
}

TEST(SkewSymmetry, MassRateFiniteDifference) {
  std::mt19937_64 rng(47);
  const ChainSpec spec = random_spec(rng, 3);
  const ChainState s = random_state(rng, 3, 2.0);
  const AssembledSystem sys = assemble(spec, s);
  const MatrixXd dm = mass_derivative(sys);
  const MatrixXd n = mass_derivative_minus_2c(sys);
  double errs[2];
  int k = 0;
  for (double h : {1e-3, 5e-4}) {
    const MatrixXd mp = assemble_kinematics(spec, TurnAttitudes(s, h)).mass;
    const MatrixXd mm = assemble_kinematics(spec, TurnAttitudes(s, -h)).mass;
    const MatrixXd fd = (mp - mm) / (2 * h);
    errs[k++] = max_abs(fd - dm);
    EXPECT_LT(max_abs(fd - 2.0 * sys.coriolis - n), 1e-4);
  }
  EXPECT_NEAR(errs[0] / errs[1], 4.0, 0.2);
}

}  // namespace
}  // namespace nechain
