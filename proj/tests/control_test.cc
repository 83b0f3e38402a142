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
#include <random>

#include <gtest/gtest.h>

#include "nechain/control.hpp"
#include "nechain/trajectory.hpp"
#include "test_util.hpp"

namespace nechain {
namespace {

using testing_util::max_abs;
using testing_util::random_consistent_state;
using testing_util::random_quat;
using testing_util::random_spec;
using testing_util::random_state;
using testing_util::random_vec;

TEST(PortDecompose, ZeroExternalInput) {
  std::mt19937_64 rng(51);
  const ChainSpec spec = random_spec(rng, 3);
  const AssembledSystem sys = assemble(spec, random_consistent_state(rng, spec));
  const PortDecomposition d = port_decompose(sys);
  EXPECT_EQ(max_abs(d.tau), 0.0);
  EXPECT_LT(max_abs(d.known - sys.force), 1e-14);
}

TEST(PortDecompose, GravityOnly) {
  ChainSpec spec;
  spec.bodies = {{2.0, Mat3::Identity()}};
  spec.gravity = Vec3(0, 0, -9.81);
  ChainState s;
  s.bodies.resize(1);
  const PortDecomposition d = port_decompose(assemble(spec, s));
  EXPECT_EQ(max_abs(d.tau), 0.0);
  EXPECT_LT((d.known.head<3>() - Vec3(0, 0, -19.62)).norm(), 1e-15);
}

TEST(PortDecompose, ReconstructsGeneralizedForce) {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    const ChainSpec spec = random_spec(rng, 4);
    const VectorXd port = VectorXd::Random(24);
    const AssembledSystem sys = assemble(spec, random_state(rng, 4), port);
    const PortDecomposition d = port_decompose(sys);
    EXPECT_EQ(d.tau, port);
    EXPECT_LT(max_abs(d.known + d.tau - sys.force), 1e-14);
  }
}

ChainSpec Chain(int n, double stiffness = 0.0) {
  ChainSpec spec;
  for (int i = 0; i < n; ++i) spec.bodies.push_back({1.0 + 0.2 * i, Vec3(0.05, 0.3, 0.32).asDiagonal()});
  for (int j = 0; j + 1 < n; ++j) {
    JointSpec js;
    js.attach_parent = Vec3(0.5, 0, 0);
    js.attach_child = Vec3(-0.5, 0, 0);
    js.stiffness = Vec3::Constant(stiffness);
    spec.joints.push_back(js);
  }
  return spec;
}

TEST(ControlVelocity, OnTrajectory) {
  std::mt19937_64 rng(53);
  const ChainSpec spec = random_spec(rng, 4);
  ChainTrajectory traj;
  traj.omega = Vec3(0.1, 0.5, -0.3);
  traj.velocity = Vec3(0.2, 0.0, 0.1);
  ChainState s = random_consistent_state(rng, spec);
  s.time = 0.7;
  set_twist(s, traj.field_twist(s));
  const AssembledSystem sys = assemble(spec, s);
  const MatrixXd kd = 10.0 * MatrixXd::Identity(24, 24);
  const PortCommand c = control_velocity(sys, traj.field_twist(s), traj.field_accel(s), kd);
  EXPECT_LT(max_abs(c.sliding_surface), 1e-15);
  const VectorXd expected = sys.mass * traj.field_accel(s) + sys.coriolis * traj.field_twist(s) -
                            port_decompose(sys).gravity_joint;
  EXPECT_LT(max_abs(c.tau - expected), 1e-13);
  EXPECT_EQ(c.lyapunov_V, 0.0);
}

TEST(ControlVelocity, RestWithoutLoadsNeedsNoPort) {
  const ChainSpec spec = Chain(3);
  const ChainState s = assemble_consistent_state(spec, {}, {{0.2, 0.1, 0.0}}, {}, {});
  const AssembledSystem sys = assemble(spec, s);
  const PortCommand c = control_velocity(sys, VectorXd::Zero(18), VectorXd::Zero(18), MatrixXd::Identity(18, 18));
  EXPECT_EQ(max_abs(c.tau), 0.0);
}

TEST(ControlVelocity, RejectsInfeasibleTarget) {
  const ChainSpec spec = Chain(2);
  const ChainState s = assemble_consistent_state(spec, {}, {}, {}, {});
  const AssembledSystem sys = assemble(spec, s);
  VectorXd nu_d = VectorXd::Zero(12);
  nu_d(0) = 1.0;  // body 1 moves, body 2 does not
  try {
    control_velocity(sys, nu_d, VectorXd::Zero(12), MatrixXd::Identity(12, 12));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFeasibility);
  }
}

TEST(ChainTrajectory, DesiredIsFeasibleAndDifferentiates) {
  std::mt19937_64 rng(54);
  const ChainSpec spec = random_spec(rng, 4);
  ChainTrajectory traj;
  traj.reference = random_consistent_state(rng, spec, 0.8, 0.0);
  for (auto& b : traj.reference.bodies) b.velocity = b.omega = Vec3::Zero();
  traj.center = Vec3(0.3, -0.2, 0.1);
  traj.velocity = Vec3(0.1, 0.2, -0.1);
  traj.omega = Vec3(0.4, -0.2, 0.6);
  const double t = 1.3, h = 1e-5;
  const ChainState d = traj.desired(t);
  EXPECT_LT(constraint_residuals(spec, d).max_position_gap(), 1e-13);
  EXPECT_LT(constraint_residuals(spec, d).max_velocity_gap(), 1e-13);
  const VectorXd fd = (twist(traj.desired(t + h)) - twist(traj.desired(t - h))) / (2 * h);
  EXPECT_LT(max_abs(fd - traj.desired_accel(t)), 1e-8);
  for (int i = 0; i < 4; ++i) {
    const Vec3 dp = (traj.desired(t + h).bodies[i].position - traj.desired(t - h).bodies[i].position) / (2 * h);
    EXPECT_LT((dp - d.bodies[i].velocity).norm(), 1e-8);
  }
  // The field sampled on the desired configuration is the desired twist.
  EXPECT_LT(max_abs(traj.field_twist(d) - twist(d)), 1e-14);
}

TEST(PoseErrors, ZeroOnTarget) {
  std::mt19937_64 rng(55);
  const ChainState s = random_state(rng, 3);
  const PoseErrors e = pose_errors(s, s);
  EXPECT_LT(max_abs(e.error), 1e-15);
  EXPECT_LT(max_abs(e.rate), 1e-15);
}

TEST(PoseErrors, PureTranslation) {
  std::mt19937_64 rng(56);
  const ChainState d = random_state(rng, 2);
  ChainState s = d;
  const Vec3 delta(0.1, -0.2, 0.3);
  for (auto& b : s.bodies) b.position += delta;
  const PoseErrors e = pose_errors(s, d);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT((e.error.segment<3>(3 * i) - delta).norm(), 1e-15);
    EXPECT_LT(e.error.segment<3>(6 + 3 * i).norm(), 1e-15);
  }
}

TEST(PoseErrors, AttitudeRateMatchesFiniteDifference) {
  std::mt19937_64 rng(57);
  for (int trial = 0; trial < 20; ++trial) {
    const UnitQuaternion q0 = random_quat(rng), qd0 = random_quat(rng);
    const Vec3 w = random_vec(rng, 2.0), wd = random_vec(rng, 2.0);
    auto q = [&](double t) { return rotate_inertial(q0, w * t); };
    auto qd = [&](double t) { return rotate_inertial(qd0, wd * t); };
    const double t = 0.4;
    double errs[2];
    int k = 0;
    for (double h : {1e-3, 5e-4}) {
      const Vec3 fd = (attitude_error(q(t + h), qd(t + h)) - attitude_error(q(t - h), qd(t - h))) / (2 * h);
      errs[k++] = (fd - attitude_error_rate(q(t), qd(t), w, wd)).norm();
    }
    EXPECT_LT(errs[0], 1e-5);
    EXPECT_GT(errs[0] / errs[1], 3.5);
  }
}

TEST(ControlPose, ZeroErrorReducesToVelocityLaw) {
  std::mt19937_64 rng(58);
  const ChainSpec spec = random_spec(rng, 3);
  ControllerConfig cfg;
  cfg.mode = ControlMode::kPose;
  cfg.chain_target.reference = random_consistent_state(rng, spec, 0.8, 0.0);
  cfg.chain_target.omega = Vec3(0.2, 0.1, -0.3);
  cfg = resolve_gains(cfg, 3);
  ChainState s = cfg.chain_target.desired(0.5);
  const AssembledSystem sys = assemble(spec, s);
  const PortCommand a = control_pose(spec, s, sys, cfg);
  const PortCommand b = control_velocity(s, sys, cfg);
  EXPECT_LT(max_abs(a.tau - b.tau), 1e-11);
  EXPECT_LT(max_abs(a.pose_error), 1e-14);
}

TEST(ControlPose, ConstrainedReferenceIsFeasible) {
  std::mt19937_64 rng(59);
  const ChainSpec spec = random_spec(rng, 4);
  ControllerConfig cfg;
  cfg.mode = ControlMode::kPose;
  cfg.chain_target.reference = random_consistent_state(rng, spec, 0.8, 0.0);
  cfg = resolve_gains(cfg, 4);
  const ChainState s = random_consistent_state(rng, spec, 0.8, 1.0);
  const AssembledSystem sys = assemble(spec, s);
  const PortCommand c = control_pose(spec, s, sys, cfg);
  EXPECT_LT(max_abs(sys.jacobian * c.sliding_surface), 1e-12);
  cfg.form = ReferenceForm::kLiteral;
  const PortCommand lit = control_pose(spec, s, sys, cfg);
  EXPECT_GT(max_abs(sys.jacobian * lit.sliding_surface), 1e-3);
}

TEST(TaskJacobian, Selection) {
  EXPECT_EQ(task_jacobian(1), MatrixXd::Identity(6, 6));
  const MatrixXd j = task_jacobian(4);
  const VectorXd nu = VectorXd::Random(24);
  EXPECT_EQ(VectorXd(j * nu).head<3>(), nu.segment<3>(9));
  EXPECT_EQ(VectorXd(j * nu).tail<3>(), nu.segment<3>(21));
  EXPECT_EQ(j * j.transpose(), MatrixXd::Identity(6, 6));
  EXPECT_THROW(task_jacobian(0), Error);
}

TEST(MassWeightedPinv, IdentityMassIsPlainPseudoinverse) {
  const MatrixXd j = task_jacobian(3);
  EXPECT_LT(max_abs(mass_weighted_pinv(j, MatrixXd::Identity(18, 18)) - j.transpose()), 1e-15);
}

TEST(MassWeightedPinv, ProjectorIdentities) {
  std::mt19937_64 rng(60);
  const ChainSpec spec = random_spec(rng, 3);
  const AssembledSystem sys = assemble(spec, random_state(rng, 3));
  const MatrixXd j = task_jacobian(3);
  const MatrixXd pinv = mass_weighted_pinv(j, sys.mass);
  const MatrixXd p = null_projector(j, sys.mass);
  EXPECT_LT(max_abs(j * pinv - MatrixXd::Identity(6, 6)), 1e-10);
  EXPECT_LT(max_abs(p * p - p), 1e-10);
  for (int k = 0; k < 100; ++k) EXPECT_LT(max_abs(j * p * VectorXd::Random(18)), 1e-10);
}

TEST(MassWeightedPinv, SingularTask) {
  MatrixXd j = MatrixXd::Zero(6, 12);
  j(0, 0) = 1.0;
  EXPECT_THROW(mass_weighted_pinv(j, MatrixXd::Identity(12, 12)), Error);
}

TEST(ObstacleGradient, NoObstaclesOrOutOfRange) {
  std::mt19937_64 rng(61);
  const ChainState s = random_state(rng, 3);
  ControllerConfig cfg;
  EXPECT_EQ(max_abs(obstacle_gradient(s, cfg)), 0.0);
  cfg.obstacles = {{Vec3(100, 0, 0), 1.0, 1.0}};
  cfg.cutoff = 1.0;
  EXPECT_EQ(max_abs(obstacle_gradient(s, cfg)), 0.0);
}

TEST(ObstacleGradient, MatchesFiniteDifference) {
  std::mt19937_64 rng(62);
  ControllerConfig cfg;
  cfg.cutoff = 1.5;
  for (int trial = 0; trial < 20; ++trial) {
    ChainState s = random_state(rng, 4);
    cfg.obstacles = {{s.bodies[0].position + Vec3(0.8, 0.1, 0), 0.3, 0.7},
                     {s.bodies[2].position + random_vec(rng).normalized() * 0.9, 0.2, 0.4}};
    const VectorXd g = obstacle_gradient(s, cfg);
    EXPECT_EQ(max_abs(g.tail(12 + 3)), 0.0);  // angular slots and the end effector stay empty
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      for (int a = 0; a < 3; ++a) {
        ChainState sp = s, sm = s;
        sp.bodies[i].position[a] += h;
        sm.bodies[i].position[a] -= h;
        const double fd = (obstacle_potential(sp, cfg) - obstacle_potential(sm, cfg)) / (2 * h);
        EXPECT_NEAR(fd, g(3 * i + a), 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(ObstacleGradient, BodyInside) {
  ChainState s;
  s.bodies.resize(2);
  ControllerConfig cfg;
  cfg.obstacles = {{Vec3(0.1, 0, 0), 0.5, 1.0}};
  try {
    obstacle_gradient(s, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBodyInsideObstacle);
  }
}

ControllerConfig TaskConfig(const ChainState& s) {
  ControllerConfig cfg;
  cfg.mode = ControlMode::kTaskSpace;
  cfg.ee_target.path = LinePath{s.bodies.back().position, Vec3(0.1, 0, 0)};
  cfg.ee_target.attitude = s.bodies.back().attitude;
  return resolve_gains(cfg, s.size());
}

TEST(ControlTaskSpace, ReferenceTracksTaskAndStaysFeasible) {
  std::mt19937_64 rng(63);
  const ChainSpec spec = random_spec(rng, 5);
  const ChainState s = random_consistent_state(rng, spec, 0.6, 0.5);
  ControllerConfig cfg = TaskConfig(s);
  cfg.obstacles = {{s.bodies[1].position + Vec3(0, 0.6, 0), 0.2, 0.05}};
  const AssembledSystem sys = assemble(spec, s);
  const PortCommand c = control_task_space(spec, s, sys, cfg, 1e-3);
  EXPECT_LT(max_abs(sys.jacobian * c.reference), 1e-10);
  const TaskErrors e = task_errors(s, cfg);
  const Vec6 nu_er = cfg.ee_target.twist(s.time) - cfg.lambda_e * e.error;
  EXPECT_LT(max_abs(task_jacobian(5) * c.reference - nu_er), 1e-10);
}

TEST(ControlTaskSpace, OnTargetStabilizesAboutFeedforward) {
  std::mt19937_64 rng(64);
  const ChainSpec spec = random_spec(rng, 4);
  const ChainState s = random_consistent_state(rng, spec, 0.6, 0.0);
  const ControllerConfig cfg = TaskConfig(s);
  const AssembledSystem sys = assemble(spec, s);
  const PortCommand c = control_task_space(spec, s, sys, cfg, 1e-3);
  EXPECT_LT(max_abs(c.pose_error), 1e-15);
  const AssembledSystem kin = assemble_kinematics(spec, s);
  const MatrixXd pinv = weighted_pinv(task_jacobian(4), kkt_inverse_blocks(kin).top_left);
  EXPECT_LT(max_abs(c.reference - pinv * cfg.ee_target.twist(0.0)), 1e-12);
}

TEST(ControlTaskSpace, ReferenceRateIsSecondOrder) {
  std::mt19937_64 rng(65);
  const ChainSpec spec = random_spec(rng, 4);
  const ChainState s = random_consistent_state(rng, spec, 0.6, 0.5);
  ControllerConfig cfg = TaskConfig(s);
  cfg.ee_target.path = CirclePath{s.bodies.back().position, Vec3::UnitZ(), Vec3::UnitX(), 0.3, 1.0};
  const AssembledSystem sys = assemble(spec, s);
  const VectorXd fine = control_task_space(spec, s, sys, cfg, 1e-5).reference_rate;
  const double e1 = max_abs(control_task_space(spec, s, sys, cfg, 2e-3).reference_rate - fine);
  const double e2 = max_abs(control_task_space(spec, s, sys, cfg, 1e-3).reference_rate - fine);
  EXPECT_NEAR(e1 / e2, 4.0, 0.5);
}

TEST(Gains, DefaultsAndValidation) {
  ControllerConfig cfg = resolve_gains({}, 2);
  EXPECT_EQ(cfg.kd, 10.0 * MatrixXd::Identity(12, 12));
  EXPECT_EQ(cfg.lambda, 2.0 * MatrixXd::Identity(12, 12));
  EXPECT_EQ(cfg.lambda_e, 2.0 * MatrixXd::Identity(6, 6));
  ControllerConfig bad;
  bad.kd = -MatrixXd::Identity(12, 12);
  EXPECT_THROW(resolve_gains(bad, 2), Error);
  bad.kd = MatrixXd::Identity(6, 6);
  EXPECT_THROW(resolve_gains(bad, 2), Error);
  bad.kd = MatrixXd::Identity(12, 12);
  bad.kd(0, 1) = 0.5;
  EXPECT_THROW(resolve_gains(bad, 2), Error);
}

TEST(Paths, ClosedFormDerivatives) {
  const std::vector<EndEffectorPath> paths = {
      CirclePath{Vec3(1, 2, 3), Vec3(0, 1, 1), Vec3(1, 0, 0), 0.4, 0.7},
      LinePath{Vec3(0, 1, 0), Vec3(0.2, -0.1, 0.3)},
      QuinticPath{Vec3(0, 0, 0), Vec3(1, -1, 2), 3.0},
      WaypointPath{{0.0, 1.0, 2.5, 4.0}, {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 1)}},
  };
  const double h = 1e-5;
  for (const auto& p : paths) {
    for (double t : {0.3, 1.7, 2.9}) {
      const PathSample s = sample_path(p, t);
      const Vec3 v = (sample_path(p, t + h).position - sample_path(p, t - h).position) / (2 * h);
      const Vec3 a = (sample_path(p, t + h).velocity - sample_path(p, t - h).velocity) / (2 * h);
      EXPECT_LT((v - s.velocity).norm(), 1e-8);
      EXPECT_LT((a - s.accel).norm(), 1e-7);
    }
  }
  const auto& w = std::get<WaypointPath>(paths[3]);
  for (std::size_t i = 0; i < w.times.size(); ++i) {
    EXPECT_LT((sample_path(paths[3], w.times[i]).position - w.points[i]).norm(), 1e-14);
  }
  EXPECT_NEAR((sample_path(paths[0], 1.1).position - Vec3(1, 2, 3)).norm(), 0.4, 1e-15);
  EXPECT_LT((sample_path(paths[2], 3.0).position - Vec3(1, -1, 2)).norm(), 1e-15);
}

TEST(Paths, Validation) {
  EXPECT_THROW(validate_path(CirclePath{Vec3::Zero(), Vec3::UnitZ(), Vec3::UnitZ(), 1.0, 1.0}), Error);
  EXPECT_THROW(validate_path(QuinticPath{Vec3::Zero(), Vec3::Zero(), 0.0}), Error);
  EXPECT_THROW(validate_path(WaypointPath{{0.0, 0.0}, {Vec3::Zero(), Vec3::Zero()}}), Error);
  EXPECT_NO_THROW(validate_path(LinePath{}));
}

}  // namespace
}  // namespace nechain
