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

// Port-based tracking controllers.
//
// The applied load is split into a modeled part (gravity, joint moments,
// gyroscopic term) and the port tau = [F_B; M_B]. Each law returns the port
// command
//
//   tau_c = M D nu_r + C(nu) nu_r - F_gJ - K_d s,   s = nu - nu_r,
//
// which, applied exactly, gives M D s + C s + K_d s = J^T F_J and therefore
// dV/dt = -s^T K_d s for V = s^T M s / 2 whenever J s = 0.
//
//   velocity : nu_r = nu_d (a rigid velocity field of the chain)
//   pose     : nu_r = nu_d - Lambda e_p, projected onto the feasible set
//   task     : nu_r = J_t^# nu_e,r + nu_n with null-space obstacle avoidance

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nechain/chain.hpp"
#include "nechain/dynamics.hpp"
#include "nechain/errors.hpp"
#include "nechain/geom.hpp"
#include "nechain/trajectory.hpp"

namespace nechain {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// ---------------------------------------------------------------------------
// Port decomposition

struct PortDecomposition {
  VectorXd known;          // M_v g, C_F M_J - C(nu) nu   (6N)
  VectorXd gravity_joint;  // F_gJ = [M_v g; C_F M_J]     (6N)
  VectorXd tau;            // [F_B; M_B]                  (6N)
};

inline PortDecomposition port_decompose(const AssembledSystem& sys) {
  const int n = sys.bodies;
  PortDecomposition d;
  d.tau = sys.port;
  d.gravity_joint = VectorXd(6 * n);
  d.gravity_joint << sys.gravity_term, sys.force_dist * sys.joint_moments;
  d.known = d.gravity_joint - sys.coriolis * sys.twist;
  return d;
}

/// Adds an external load to an already assembled system.
inline void apply_port(AssembledSystem& sys, const VectorXd& port) {
  sys.force += port;
  sys.port += port;
}

// ---------------------------------------------------------------------------
// Configuration

enum class ControlMode { kNone, kVelocity, kPose, kTaskSpace };

/// kConstrained keeps the reference twist on the constraint-feasible set
/// (J nu_r = 0), which the Lyapunov argument needs. kLiteral uses the
/// unprojected reference and the plain mass-weighted task pseudoinverse.
enum class ReferenceForm { kConstrained, kLiteral };

struct Obstacle {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  double gain = 1.0;  // eta

  bool operator==(const Obstacle&) const = default;
};

struct ControllerConfig {
  ControlMode mode = ControlMode::kNone;
  ReferenceForm form = ReferenceForm::kConstrained;
  MatrixXd kd;        // 6N x 6N; empty: 10 I
  MatrixXd lambda;    // 6N x 6N; empty: 2 I
  MatrixXd lambda_e;  // 6 x 6;   empty: 2 I
  std::vector<Obstacle> obstacles;
  double cutoff = 1.0;   // potential influence distance d_cut [m]
  double fd_step = 0.0;  // task-space reference derivative step; 0: use dt

  ChainTrajectory chain_target;
  EndEffectorTrajectory ee_target;
};

inline void require_spd(const MatrixXd& m, int size, const std::string& name) {
  if (m.rows() != size || m.cols() != size) {
    throw Error(ErrorCode::kInvalidArgument, name + " must be " + std::to_string(size) + "x" + std::to_string(size));
  }
  if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::kInvalidArgument, name + " must be symmetric");
  }
  if (Eigen::SelfAdjointEigenSolver<MatrixXd>(m).eigenvalues().minCoeff() <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, name + " must be positive definite");
  }
}

/// Fills default gains for an N-body chain and checks all gains are SPD.
inline ControllerConfig resolve_gains(ControllerConfig cfg, int n) {
  if (cfg.kd.size() == 0) cfg.kd = 10.0 * MatrixXd::Identity(6 * n, 6 * n);
  if (cfg.lambda.size() == 0) cfg.lambda = 2.0 * MatrixXd::Identity(6 * n, 6 * n);
  if (cfg.lambda_e.size() == 0) cfg.lambda_e = 2.0 * MatrixXd::Identity(6, 6);
  require_spd(cfg.kd, 6 * n, "K_d");
  require_spd(cfg.lambda, 6 * n, "Lambda");
  require_spd(cfg.lambda_e, 6, "Lambda_e");
  for (const auto& o : cfg.obstacles) {
    if (!(o.radius >= 0.0) || !(o.gain >= 0.0) || !o.center.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "obstacle parameters must be finite and non-negative");
    }
  }
  if (!cfg.obstacles.empty() && !(cfg.cutoff > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "obstacle cutoff must be positive");
  }
  return cfg;
}

/// blockdiag(linear I_3N, angular I_3N) for a 6N twist, or 6x6 when n == 1
/// is used for the end effector.
inline MatrixXd split_gain(int n, double linear, double angular) {
  VectorXd d(6 * n);
  d << VectorXd::Constant(3 * n, linear), VectorXd::Constant(3 * n, angular);
  return d.asDiagonal();
}

// ---------------------------------------------------------------------------
// Controller output

struct PortCommand {
  VectorXd tau;               // commanded port, 6N
  VectorXd sliding_surface;   // s = nu - nu_r
  VectorXd reference;         // nu_r
  VectorXd reference_rate;    // D nu_r
  double lyapunov_V = 0.0;    // s^T M s / 2
  double lyapunov_Vdot = 0.0; // -s^T K_d s
  VectorXd pose_error;        // e_p (pose mode: 6N, task mode: 6)
  VectorXd pose_error_rate;
};

inline void fill_command(PortCommand& c, const AssembledSystem& sys, const MatrixXd& kd) {
  const PortDecomposition d = port_decompose(sys);
  c.sliding_surface = sys.twist - c.reference;
  c.tau = sys.mass * c.reference_rate + sys.coriolis * c.reference - d.gravity_joint - kd * c.sliding_surface;
  c.lyapunov_V = 0.5 * c.sliding_surface.dot(sys.mass * c.sliding_surface);
  c.lyapunov_Vdot = -c.sliding_surface.dot(kd * c.sliding_surface);
}

inline double feasibility_tolerance(const VectorXd& nu) { return 1e-9 * std::max(1.0, nu.lpNorm<Eigen::Infinity>()); }

/// `slack` widens the tolerance by a known, state-induced residual.
inline void require_feasible(const MatrixXd& jacobian, const VectorXd& nu, const char* what, double slack = 0.0) {
  if (jacobian.rows() == 0) return;
  const double r = (jacobian * nu).lpNorm<Eigen::Infinity>();
  if (r > feasibility_tolerance(nu) + slack) {
    throw Error(ErrorCode::kFeasibility, std::string(what) + " violates the joint constraints (|J nu_d| = " +
                                             std::to_string(r) + ")");
  }
}

// ---------------------------------------------------------------------------
// Velocity tracking

/// nu_d and D nu_d given explicitly (D nu_d is the derivative along the
/// actual motion).
inline PortCommand control_velocity(const AssembledSystem& sys, const VectorXd& nu_d, const VectorXd& dnu_d,
                                    const MatrixXd& kd, double feasibility_slack = 0.0) {
  require_feasible(sys.jacobian, nu_d, "desired twist", feasibility_slack);
  PortCommand c;
  c.reference = nu_d;
  c.reference_rate = dnu_d;
  fill_command(c, sys, kd);
  return c;
}

/// A rigid field sampled on a configuration with joint gaps g_j has
/// |J nu_d| = |omega x g_j|; that residual is allowed for.
inline PortCommand control_velocity(const ChainState& state, const AssembledSystem& sys, const ControllerConfig& cfg) {
  double gap = 0.0;
  for (int j = 0; j + 1 < state.size(); ++j) {
    const Vec3 g = (state.bodies[j + 1].position - sys.arm_child[j]) - (state.bodies[j].position - sys.arm_parent[j]);
    gap = std::max(gap, g.lpNorm<Eigen::Infinity>());
  }
  const double slack = 2.0 * cfg.chain_target.omega.norm() * gap;
  return control_velocity(sys, cfg.chain_target.field_twist(state), cfg.chain_target.field_accel(state), cfg.kd, slack);
}

// ---------------------------------------------------------------------------
// Pose tracking

/// Attitude error vec(q (x) q_d^-1): rotation from desired to actual,
/// inertial components, shortest way round.
inline Vec3 attitude_error(const UnitQuaternion& q, const UnitQuaternion& qd) {
  const UnitQuaternion e = quat_multiply(q, quat_conjugate(qd));
  return e.w() < 0.0 ? Vec3(-e.vec()) : e.vec();
}

/// Rate of attitude_error for inertial angular velocities w (actual) and wd.
inline Vec3 attitude_error_rate(const UnitQuaternion& q, const UnitQuaternion& qd, const Vec3& w, const Vec3& wd) {
  const UnitQuaternion e = quat_multiply(q, quat_conjugate(qd));
  const double sign = e.w() < 0.0 ? -1.0 : 1.0;
  const Vec4 ec = sign * e.coeffs();
  const Vec4 rate = 0.5 * hamilton(Vec4(0, w.x(), w.y(), w.z()), ec) - 0.5 * hamilton(ec, Vec4(0, wd.x(), wd.y(), wd.z()));
  return rate.tail<3>();
}

struct PoseErrors {
  VectorXd error;  // [e_pos (3N); e_att (3N)]
  VectorXd rate;
};

inline PoseErrors pose_errors(const ChainState& state, const ChainState& desired) {
  const int n = state.size();
  PoseErrors e{VectorXd(6 * n), VectorXd(6 * n)};
  for (int i = 0; i < n; ++i) {
    const BodyState& a = state.bodies[i];
    const BodyState& d = desired.bodies[i];
    e.error.segment<3>(3 * i) = a.position - d.position;
    e.rate.segment<3>(3 * i) = a.velocity - d.velocity;
    e.error.segment<3>(3 * n + 3 * i) = attitude_error(a.attitude, d.attitude);
    e.rate.segment<3>(3 * n + 3 * i) = attitude_error_rate(a.attitude, d.attitude, a.omega, d.omega);
  }
  return e;
}

inline PortCommand control_pose(const ChainSpec& spec, const ChainState& state, const AssembledSystem& sys,
                                const ControllerConfig& cfg) {
  const ChainState desired = cfg.chain_target.desired(state.time);
  const VectorXd nu_d = twist(desired);
  require_feasible(assemble_kinematics(spec, desired).jacobian, nu_d, "desired twist");
  const VectorXd dnu_d = cfg.chain_target.desired_accel(state.time);
  const PoseErrors e = pose_errors(state, desired);

  PortCommand c;
  c.pose_error = e.error;
  c.pose_error_rate = e.rate;
  const VectorXd w = nu_d - cfg.lambda * e.error;
  const VectorXd dw = dnu_d - cfg.lambda * e.rate;
  if (cfg.form == ReferenceForm::kLiteral) {
    c.reference = w;
    c.reference_rate = dw;
  } else {
    const MatrixXd p = constraint_projector(sys);
    c.reference = p * w;
    c.reference_rate = constraint_projector_derivative(sys) * w + p * dw;
  }
  fill_command(c, sys, cfg.kd);
  return c;
}

// ---------------------------------------------------------------------------
// Task space

/// 6 x 6N selection of the last body's [v; w].
inline MatrixXd task_jacobian(int n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "task_jacobian needs at least one body");
  MatrixXd j = MatrixXd::Zero(6, 6 * n);
  j.block<3, 3>(0, 3 * (n - 1)) = Mat3::Identity();
  j.block<3, 3>(3, 3 * n + 3 * (n - 1)) = Mat3::Identity();
  return j;
}

/// W J_t^T (J_t W J_t^T)^{-1} for an SPD (or PSD) weight W.
inline MatrixXd weighted_pinv(const MatrixXd& jt, const MatrixXd& w) {
  const MatrixXd wjt = w * jt.transpose();
  const MatrixXd lam = jt * wjt;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (lam + lam.transpose()));
  const VectorXd ev = eig.eigenvalues();
  if (eig.info() != Eigen::Success || !(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300))) {
    throw Error(ErrorCode::kTaskSingular, "task-space inertia is singular");
  }
  return wjt * eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

/// M^{-1} J_t^T (J_t M^{-1} J_t^T)^{-1}.
inline MatrixXd mass_weighted_pinv(const MatrixXd& jt, const MatrixXd& mass) {
  Eigen::LLT<MatrixXd> llt(mass);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNonSpdMass, "mass matrix not positive definite");
  return weighted_pinv(jt, llt.solve(MatrixXd::Identity(mass.rows(), mass.cols())));
}

/// I - J_t^# J_t with the mass-weighted pseudoinverse.
inline MatrixXd null_projector(const MatrixXd& jt, const MatrixXd& mass) {
  return MatrixXd::Identity(jt.cols(), jt.cols()) - mass_weighted_pinv(jt, mass) * jt;
}

inline double obstacle_potential(const ChainState& state, const ControllerConfig& cfg) {
  double u = 0.0;
  for (int i = 0; i + 1 < state.size(); ++i) {
    for (const auto& o : cfg.obstacles) {
      const double d = (state.bodies[i].position - o.center).norm() - o.radius;
      if (d <= 0.0) throw Error(ErrorCode::kBodyInsideObstacle, "body " + std::to_string(i + 1) + " inside obstacle");
      if (d < cfg.cutoff) u += o.gain * std::pow(1.0 / d - 1.0 / cfg.cutoff, 2);
    }
  }
  return u;
}

/// Gradient of obstacle_potential with respect to body positions, placed in
/// the linear-velocity slots of bodies 1 .. N-1.
inline VectorXd obstacle_gradient(const ChainState& state, const ControllerConfig& cfg) {
  const int n = state.size();
  VectorXd g = VectorXd::Zero(6 * n);
  for (int i = 0; i + 1 < n; ++i) {
    for (const auto& o : cfg.obstacles) {
      const Vec3 r = state.bodies[i].position - o.center;
      const double dist = r.norm();
      const double d = dist - o.radius;
      if (d <= 0.0) throw Error(ErrorCode::kBodyInsideObstacle, "body " + std::to_string(i + 1) + " inside obstacle");
      if (d < cfg.cutoff) {
        g.segment<3>(3 * i) += -2.0 * o.gain * (1.0 / d - 1.0 / cfg.cutoff) / (d * d) * r / dist;
      }
    }
  }
  return g;
}

struct TaskErrors {
  Vec6 error;  // [p_N - p_d; attitude error]
  Vec6 rate;
};

inline UnitQuaternion task_attitude_target(const ControllerConfig& cfg, const ChainState& state) {
  return cfg.ee_target.attitude.value_or(state.bodies.back().attitude);
}

inline TaskErrors task_errors(const ChainState& state, const ControllerConfig& cfg) {
  const BodyState& b = state.bodies.back();
  const PathSample p = sample_path(cfg.ee_target.path, state.time);
  const UnitQuaternion qd = task_attitude_target(cfg, state);
  TaskErrors e;
  e.error << b.position - p.position, attitude_error(b.attitude, qd);
  e.rate << b.velocity - p.velocity, attitude_error_rate(b.attitude, qd, b.omega, Vec3::Zero());
  return e;
}

/// nu_r for the task-space law; a function of configuration and time only.
inline VectorXd task_reference(const ChainSpec& spec, const ChainState& state, const ControllerConfig& cfg) {
  const int n = spec.size();
  const AssembledSystem kin = assemble_kinematics(spec, state);
  const MatrixXd jt = task_jacobian(n);
  const TaskErrors e = task_errors(state, cfg);
  const Vec6 nu_er = cfg.ee_target.twist(state.time) - cfg.lambda_e * e.error;
  const VectorXd grad = obstacle_gradient(state, cfg);
  if (cfg.form == ReferenceForm::kLiteral) {
    const MatrixXd pinv = mass_weighted_pinv(jt, kin.mass);
    const MatrixXd p = MatrixXd::Identity(6 * n, 6 * n) - pinv * jt;
    return pinv * nu_er - p * grad;
  }
  // Constrained inverse inertia A = P_c M^{-1} replaces M^{-1}.
  const MatrixXd a = kkt_inverse_blocks(kin).top_left;
  const MatrixXd pinv = weighted_pinv(jt, a);
  const MatrixXd pt = MatrixXd::Identity(6 * n, 6 * n) - pinv * jt;
  const VectorXd feasible_grad = constraint_projector(kin) * grad;
  return pinv * nu_er - pt * feasible_grad;
}

/// Configuration advanced by h along a twist (positions linearly, attitudes
/// by the exact rotation).
inline ChainState advance_configuration(const ChainState& s, const VectorXd& nu, double h) {
  ChainState out = s;
  const int n = s.size();
  out.time += h;
  for (int i = 0; i < n; ++i) {
    out.bodies[i].position += h * nu.segment<3>(3 * i);
    out.bodies[i].attitude = rotate_inertial(s.bodies[i].attitude, h * nu.segment<3>(3 * n + 3 * i));
  }
  return out;
}

/// `fd_step` must be positive; D nu_r is a centered difference of
/// task_reference along the current twist.
inline PortCommand control_task_space(const ChainSpec& spec, const ChainState& state, const AssembledSystem& sys,
                                      const ControllerConfig& cfg, double fd_step) {
  if (!(fd_step > 0.0)) throw Error(ErrorCode::kInvalidArgument, "task-space derivative step must be positive");
  PortCommand c;
  c.reference = task_reference(spec, state, cfg);
  const VectorXd plus = task_reference(spec, advance_configuration(state, sys.twist, fd_step), cfg);
  const VectorXd minus = task_reference(spec, advance_configuration(state, sys.twist, -fd_step), cfg);
  c.reference_rate = (plus - minus) / (2.0 * fd_step);
  const TaskErrors e = task_errors(state, cfg);
  c.pose_error = e.error;
  c.pose_error_rate = e.rate;
  fill_command(c, sys, cfg.kd);
  return c;
}

/// Dispatch on cfg.mode (gains must already be resolved). `sys` must be
/// assembled without any port load.
inline PortCommand control(const ChainSpec& spec, const ChainState& state, const AssembledSystem& sys,
                           const ControllerConfig& cfg, double dt) {
  switch (cfg.mode) {
    case ControlMode::kVelocity: return control_velocity(state, sys, cfg);
    case ControlMode::kPose: return control_pose(spec, state, sys, cfg);
    case ControlMode::kTaskSpace:
      return control_task_space(spec, state, sys, cfg, cfg.fd_step > 0.0 ? cfg.fd_step : dt);
    case ControlMode::kNone: break;
  }
  PortCommand c;
  c.tau = VectorXd::Zero(sys.dof());
  return c;
}

}  // namespace nechain
