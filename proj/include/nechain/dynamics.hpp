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

// Unreduced Newton-Euler model of the chain in augmented (KKT) form:
//
//   [ M  J^T ] [ D nu ]   [ F     ]
//   [ J  0   ] [ -F_J ] = [ gamma ]
//
// All blocks are expressed in inertial components. nu stacks all linear
// velocities first, then all angular velocities. F_J are the joint reaction
// forces exerted by body j on body j + 1.

#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "nechain/chain.hpp"
#include "nechain/errors.hpp"
#include "nechain/geom.hpp"

namespace nechain {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline Mat3 inertia_to_inertial(const Mat3& body_inertia, const UnitQuaternion& attitude) {
  const Mat3 t = rotation_from_quat(attitude);
  return t.transpose() * body_inertia * t;
}

struct JointMomentResult {
  Vec3 moment = Vec3::Zero();     // m_{J_j}, inertial components
  JointAngles relative;           // body j+1 relative to body j
  std::array<Vec3, 3> axes;       // b_{j,1}, x_{j,2}, b_{j+1,3} (inertial)
  bool near_gimbal_lock = false;  // |theta| close to pi/2
};

/// Constitutive joint moments (torsional spring plus optional damping).
inline std::vector<JointMomentResult> joint_moments(const ChainSpec& spec, const ChainState& state) {
  std::vector<JointMomentResult> out(spec.joints.size());
  for (std::size_t j = 0; j < spec.joints.size(); ++j) {
    const JointSpec& jt = spec.joints[j];
    const Mat3 t_parent = rotation_from_quat(state.bodies[j].attitude);
    const Mat3 t_child = rotation_from_quat(state.bodies[j + 1].attitude);
    // T^{B_j B_{j+1}} = R1(a) R2(b) R3(c) turns the child frame into the parent
    // frame, so (a, b, c) measure the parent relative to the child.
    const EulerResult e = euler_from_transform(t_parent * t_child.transpose());
    JointMomentResult& r = out[j];
    r.relative = {-e.angles.roll, -e.angles.pitch, -e.angles.yaw};
    r.near_gimbal_lock = e.near_gimbal_lock;
    r.axes[0] = t_parent.row(0).transpose();
    r.axes[1] = (axis_transform(2, e.angles.yaw) * t_child).row(1).transpose();
    r.axes[2] = t_child.row(2).transpose();
    r.moment = jt.stiffness[0] * r.relative.phi * r.axes[0] +
               jt.stiffness[1] * r.relative.theta * r.axes[1] +
               jt.stiffness[2] * r.relative.psi * r.axes[2];
    if (jt.damping.any()) {
      const Vec3 rel_rate = state.bodies[j + 1].omega - state.bodies[j].omega;
      for (int k = 0; k < 3; ++k) r.moment += jt.damping[k] * r.axes[k].dot(rel_rate) * r.axes[k];
    }
  }
  return out;
}

struct AssembledSystem {
  int bodies = 0;
  MatrixXd mass;          // 6N x 6N, blockdiag(M_v, M_w)
  MatrixXd jacobian;      // 3(N-1) x 6N, [J_v, J_w]
  MatrixXd coriolis;      // 6N x 6N, angular-angular quadrant only
  VectorXd force;         // 6N, generalized applied force
  VectorXd gamma;         // 3(N-1), velocity-product terms
  MatrixXd force_dist;    // C_F, 3N x 3(N-1)
  MatrixXd moment_dist;   // C_M, 3N x 3(N-1)
  VectorXd joint_moments; // M_J, 3(N-1)
  VectorXd gravity_term;  // 3N, M_v g_{3N}
  VectorXd port;          // 6N, [F_B; M_B]
  VectorXd twist;         // 6N, nu

  // Per-body / per-joint pieces in inertial components.
  std::vector<double> masses;
  std::vector<Mat3> inertia;       // I_{B_i}^I
  std::vector<Vec3> arm_parent;    // s_{B_j J_j}   (joint -> parent COM)
  std::vector<Vec3> arm_child;     // s_{B_{j+1} J_j} (joint -> child COM)

  int dof() const { return 6 * bodies; }
  int constraints() const { return 3 * (bodies - 1); }
  Vec3 omega(int i) const { return twist.segment<3>(3 * bodies + 3 * i); }
};

/// Mass matrix and constraint Jacobian only; depends on the configuration
/// (positions and attitudes), not on velocities or loads.
inline AssembledSystem assemble_kinematics(const ChainSpec& spec, const ChainState& state) {
  const int n = spec.size();
  AssembledSystem sys;
  sys.bodies = n;
  const int nc = 3 * (n - 1);
  sys.masses.resize(n);
  sys.inertia.resize(n);
  sys.arm_parent.resize(n - 1);
  sys.arm_child.resize(n - 1);
  sys.mass = MatrixXd::Zero(6 * n, 6 * n);
  sys.jacobian = MatrixXd::Zero(nc, 6 * n);
  sys.twist = twist(state);

  for (int i = 0; i < n; ++i) {
    sys.masses[i] = spec.bodies[i].mass;
    sys.inertia[i] = inertia_to_inertial(spec.bodies[i].inertia, state.bodies[i].attitude);
    sys.mass.block<3, 3>(3 * i, 3 * i) = sys.masses[i] * Mat3::Identity();
    sys.mass.block<3, 3>(3 * n + 3 * i, 3 * n + 3 * i) = sys.inertia[i];
  }
  for (int j = 0; j + 1 < n; ++j) {
    const Mat3 rp = rotation_from_quat(state.bodies[j].attitude).transpose();
    const Mat3 rc = rotation_from_quat(state.bodies[j + 1].attitude).transpose();
    sys.arm_parent[j] = -(rp * spec.joints[j].attach_parent);
    sys.arm_child[j] = -(rc * spec.joints[j].attach_child);
    sys.jacobian.block<3, 3>(3 * j, 3 * j) = -Mat3::Identity();
    sys.jacobian.block<3, 3>(3 * j, 3 * (j + 1)) = Mat3::Identity();
    sys.jacobian.block<3, 3>(3 * j, 3 * n + 3 * j) = -skew(sys.arm_parent[j]);
    sys.jacobian.block<3, 3>(3 * j, 3 * n + 3 * (j + 1)) = skew(sys.arm_child[j]);
  }
  return sys;
}

/// Builds every block of the augmented system. `port` is the external
/// generalized load [F_B; M_B] in inertial components (6N); an empty vector
/// means no external load.
inline AssembledSystem assemble(const ChainSpec& spec, const ChainState& state,
                                const VectorXd& port = VectorXd()) {
  require_valid(spec);
  const int n = spec.size();
  if (state.size() != n) throw Error(ErrorCode::kInvalidArgument, "state size does not match spec");
  AssembledSystem sys = assemble_kinematics(spec, state);
  const int nc = sys.constraints();

  sys.port = port.size() == 0 ? VectorXd::Zero(6 * n) : port;
  if (sys.port.size() != 6 * n) throw Error(ErrorCode::kInvalidArgument, "port has wrong size");

  sys.force_dist = MatrixXd::Zero(3 * n, nc);
  sys.moment_dist = MatrixXd::Zero(3 * n, nc);
  for (int j = 0; j + 1 < n; ++j) {
    sys.force_dist.block<3, 3>(3 * j, 3 * j) = Mat3::Identity();
    sys.force_dist.block<3, 3>(3 * (j + 1), 3 * j) = -Mat3::Identity();
    sys.moment_dist.block<3, 3>(3 * j, 3 * j) = -skew(sys.arm_parent[j]);
    sys.moment_dist.block<3, 3>(3 * (j + 1), 3 * j) = skew(sys.arm_child[j]);
  }

  sys.coriolis = MatrixXd::Zero(6 * n, 6 * n);
  for (int i = 0; i < n; ++i) {
    sys.coriolis.block<3, 3>(3 * n + 3 * i, 3 * n + 3 * i) = skew(sys.omega(i)) * sys.inertia[i];
  }

  sys.joint_moments = VectorXd::Zero(nc);
  const auto moments = joint_moments(spec, state);
  for (int j = 0; j + 1 < n; ++j) sys.joint_moments.segment<3>(3 * j) = moments[j].moment;

  sys.gravity_term = VectorXd(3 * n);
  for (int i = 0; i < n; ++i) sys.gravity_term.segment<3>(3 * i) = sys.masses[i] * spec.gravity;

  sys.force = VectorXd(6 * n);
  sys.force.head(3 * n) = sys.port.head(3 * n) + sys.gravity_term;
  sys.force.tail(3 * n) = sys.port.tail(3 * n) + sys.force_dist * sys.joint_moments -
                          (sys.coriolis * sys.twist).tail(3 * n);

  sys.gamma = VectorXd(nc);
  for (int j = 0; j + 1 < n; ++j) {
    const Mat3 wp = skew(sys.omega(j));
    const Mat3 wc = skew(sys.omega(j + 1));
    sys.gamma.segment<3>(3 * j) = wc * wc * sys.arm_child[j] - wp * wp * sys.arm_parent[j];
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Block-diagonal inverse mass

/// M^{-1} as a dense matrix, built block by block.
inline MatrixXd inverse_mass(const AssembledSystem& sys) {
  const int n = sys.bodies;
  MatrixXd inv = MatrixXd::Zero(6 * n, 6 * n);
  for (int i = 0; i < n; ++i) {
    if (!(sys.masses[i] > 0.0)) throw Error(ErrorCode::kNonSpdMass, "non-positive body mass");
    Eigen::LLT<Mat3> llt(sys.inertia[i]);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNonSpdMass, "inertia not positive definite");
    inv.block<3, 3>(3 * i, 3 * i) = Mat3::Identity() / sys.masses[i];
    inv.block<3, 3>(3 * n + 3 * i, 3 * n + 3 * i) = llt.solve(Mat3::Identity());
  }
  return inv;
}

/// M^{-1} * X exploiting the block-diagonal structure.
inline MatrixXd apply_inverse_mass(const AssembledSystem& sys, const MatrixXd& x) {
  const int n = sys.bodies;
  MatrixXd out(x.rows(), x.cols());
  for (int i = 0; i < n; ++i) {
    if (!(sys.masses[i] > 0.0)) throw Error(ErrorCode::kNonSpdMass, "non-positive body mass");
    Eigen::LLT<Mat3> llt(sys.inertia[i]);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::kNonSpdMass, "inertia not positive definite");
    out.middleRows(3 * i, 3) = x.middleRows(3 * i, 3) / sys.masses[i];
    out.middleRows(3 * n + 3 * i, 3) = llt.solve(x.middleRows(3 * n + 3 * i, 3));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solving the augmented system

struct SolveResult {
  VectorXd accel;          // D nu
  VectorXd joint_forces;   // F_J
  double condition_estimate = 1.0;
  bool used_dense_fallback = false;
};

enum class SolvePath { kAuto, kSchur, kDense };

struct SolveOptions {
  SolvePath path = SolvePath::kAuto;
  double condition_limit = 1e12;

  bool operator==(const SolveOptions&) const = default;
};

inline SolveResult solve_dense(const AssembledSystem& sys) {
  const int nd = sys.dof(), nc = sys.constraints();
  MatrixXd k = MatrixXd::Zero(nd + nc, nd + nc);
  k.topLeftCorner(nd, nd) = sys.mass;
  k.topRightCorner(nd, nc) = sys.jacobian.transpose();
  k.bottomLeftCorner(nc, nd) = sys.jacobian;
  VectorXd rhs(nd + nc);
  rhs << sys.force, sys.gamma;
  Eigen::FullPivLU<MatrixXd> lu(k);
  if (lu.rank() < nd + nc) {
    throw Error(ErrorCode::kRankDeficientConstraints, "augmented matrix is singular (ill-posed model)");
  }
  const VectorXd x = lu.solve(rhs);
  SolveResult r;
  r.accel = x.head(nd);
  r.joint_forces = -x.tail(nc);
  r.used_dense_fallback = true;
  const double rcond = lu.rcond();
  r.condition_estimate = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  return r;
}

/// Accelerations and joint forces. Default path: Schur complement
/// S = J M^{-1} J^T with the block-diagonal M^{-1}; falls back to a dense
/// factorization of the full matrix when S is ill-conditioned.
inline SolveResult solve_augmented(const AssembledSystem& sys, const SolveOptions& opts = {}) {
  if (opts.path == SolvePath::kDense) return solve_dense(sys);
  const int nc = sys.constraints();
  const VectorXd minv_f = apply_inverse_mass(sys, sys.force);
  SolveResult r;
  if (nc == 0) {
    r.accel = minv_f;
    r.joint_forces = VectorXd(0);
    return r;
  }
  const MatrixXd y = apply_inverse_mass(sys, sys.jacobian.transpose());  // M^{-1} J^T
  const MatrixXd s = sys.jacobian * y;
  Eigen::LLT<MatrixXd> llt(s);
  const bool ok = llt.info() == Eigen::Success;
  const double rcond = ok ? llt.rcond() : 0.0;
  r.condition_estimate = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!ok || r.condition_estimate > opts.condition_limit) {
    if (opts.path == SolvePath::kSchur) {
      throw Error(ErrorCode::kRankDeficientConstraints, "Schur complement is not invertible");
    }
    return solve_dense(sys);
  }
  // M a - J^T F_J = F and J a = gamma  =>  S F_J = gamma - J M^{-1} F.
  r.joint_forces = llt.solve(sys.gamma - sys.jacobian * minv_f);
  r.accel = minv_f + y * r.joint_forces;
  return r;
}

/// Residual of both block rows, relative to the size of the right-hand side.
inline double augmented_residual(const AssembledSystem& sys, const SolveResult& r) {
  const VectorXd top = sys.mass * r.accel - sys.jacobian.transpose() * r.joint_forces - sys.force;
  const VectorXd bottom = sys.jacobian * r.accel - sys.gamma;
  const double scale = std::max({1.0, sys.force.lpNorm<Eigen::Infinity>(),
                                 sys.gamma.size() ? sys.gamma.lpNorm<Eigen::Infinity>() : 0.0,
                                 (sys.mass * r.accel).lpNorm<Eigen::Infinity>()});
  double res = top.lpNorm<Eigen::Infinity>();
  if (bottom.size()) res = std::max(res, bottom.lpNorm<Eigen::Infinity>());
  return res / scale;
}

/// The four blocks of the analytic inverse of the augmented matrix.
struct KktInverse {
  MatrixXd top_left;      // M^{-1} - M^{-1} J^T S^{-1} J M^{-1}
  MatrixXd top_right;     // M^{-1} J^T S^{-1}
  MatrixXd bottom_left;   // S^{-1} J M^{-1}
  MatrixXd bottom_right;  // -S^{-1}
  MatrixXd schur;         // S = J M^{-1} J^T
};

inline KktInverse kkt_inverse_blocks(const AssembledSystem& sys) {
  const int nd = sys.dof(), nc = sys.constraints();
  const MatrixXd minv = inverse_mass(sys);
  KktInverse k;
  if (nc == 0) {
    k.top_left = minv;
    k.top_right = MatrixXd(nd, 0);
    k.bottom_left = MatrixXd(0, nd);
    k.bottom_right = MatrixXd(0, 0);
    k.schur = MatrixXd(0, 0);
    return k;
  }
  const MatrixXd y = minv * sys.jacobian.transpose();
  k.schur = sys.jacobian * y;
  Eigen::LLT<MatrixXd> llt(k.schur);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kRankDeficientConstraints, "Schur complement is not positive definite");
  }
  const MatrixXd s_inv = llt.solve(MatrixXd::Identity(nc, nc));
  k.top_right = y * s_inv;
  k.bottom_left = k.top_right.transpose();
  k.top_left = minv - k.top_right * y.transpose();
  k.bottom_right = -s_inv;
  return k;
}

/// P_c = I - M^{-1} J^T S^{-1} J: maps any twist onto the constraint-feasible
/// set (J P_c = 0); it is the M-orthogonal projector onto null(J).
inline MatrixXd constraint_projector(const AssembledSystem& sys) {
  const int nd = sys.dof(), nc = sys.constraints();
  if (nc == 0) return MatrixXd::Identity(nd, nd);
  const MatrixXd y = apply_inverse_mass(sys, sys.jacobian.transpose());
  const MatrixXd s = sys.jacobian * y;
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::kRankDeficientConstraints, "singular Schur complement");
  return MatrixXd::Identity(nd, nd) - y * llt.solve(sys.jacobian);
}

// ---------------------------------------------------------------------------
// Rates of the configuration-dependent blocks

/// D^I M from the Poisson equation: angular blocks W I - I W.
inline MatrixXd mass_derivative(const AssembledSystem& sys) {
  const int n = sys.bodies;
  MatrixXd d = MatrixXd::Zero(6 * n, 6 * n);
  for (int i = 0; i < n; ++i) {
    const Mat3 w = skew(sys.omega(i));
    d.block<3, 3>(3 * n + 3 * i, 3 * n + 3 * i) = w * sys.inertia[i] - sys.inertia[i] * w;
  }
  return d;
}

/// N = D^I M - 2 C: angular blocks -W I - I W (skew-symmetric).
inline MatrixXd mass_derivative_minus_2c(const AssembledSystem& sys) {
  const int n = sys.bodies;
  MatrixXd d = MatrixXd::Zero(6 * n, 6 * n);
  for (int i = 0; i < n; ++i) {
    const Mat3 w = skew(sys.omega(i));
    d.block<3, 3>(3 * n + 3 * i, 3 * n + 3 * i) = -w * sys.inertia[i] - sys.inertia[i] * w;
  }
  return d;
}

/// Time derivative of J along the current motion (attachment arms rotate
/// with their bodies).
inline MatrixXd jacobian_derivative(const AssembledSystem& sys) {
  const int n = sys.bodies;
  MatrixXd d = MatrixXd::Zero(sys.constraints(), 6 * n);
  for (int j = 0; j + 1 < n; ++j) {
    d.block<3, 3>(3 * j, 3 * n + 3 * j) = -skew(sys.omega(j).cross(sys.arm_parent[j]));
    d.block<3, 3>(3 * j, 3 * n + 3 * (j + 1)) = skew(sys.omega(j + 1).cross(sys.arm_child[j]));
  }
  return d;
}

/// Time derivative of constraint_projector along the current motion.
inline MatrixXd constraint_projector_derivative(const AssembledSystem& sys) {
  const int nd = sys.dof(), nc = sys.constraints();
  if (nc == 0) return MatrixXd::Zero(nd, nd);
  const MatrixXd minv = inverse_mass(sys);
  const MatrixXd dminv = -minv * mass_derivative(sys) * minv;
  const MatrixXd& j = sys.jacobian;
  const MatrixXd dj = jacobian_derivative(sys);
  const MatrixXd y = minv * j.transpose();
  const MatrixXd dy = dminv * j.transpose() + minv * dj.transpose();
  const MatrixXd s = j * y;
  const MatrixXd ds = dj * y + j * dy;
  Eigen::LLT<MatrixXd> llt(s);
  const MatrixXd s_inv = llt.solve(MatrixXd::Identity(nc, nc));
  // P = I - Y S^{-1} J
  return -(dy * s_inv * j - y * s_inv * ds * s_inv * j + y * s_inv * dj);
}

}  // namespace nechain
