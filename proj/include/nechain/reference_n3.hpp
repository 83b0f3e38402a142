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

// Explicit three-body coordination of the augmented system, written out
// matrix by matrix. It shares no code with dynamics.hpp (rotations come from
// Eigen::Quaterniond, joint angles from the relative quaternion) and serves
// as a cross-check for the general N-body assembler.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "nechain/chain.hpp"
#include "nechain/dynamics.hpp"

namespace nechain::reference {

using Mat18 = Eigen::Matrix<double, 18, 18>;
using Mat6x18 = Eigen::Matrix<double, 6, 18>;
using Mat9x6 = Eigen::Matrix<double, 9, 6>;
using Vec18 = Eigen::Matrix<double, 18, 1>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

struct Body {
  double mass;
  Mat3 inertia_body;
  Vec3 position;
  Eigen::Quaterniond attitude;  // body -> inertial
  Vec3 velocity;                // inertial
  Vec3 omega;                   // inertial
  Vec3 force;                   // inertial
  Vec3 moment_body;             // body components
};

struct Joint {
  Vec3 attach_parent;  // COM -> joint, parent body frame
  Vec3 attach_child;   // COM -> joint, child body frame
  Vec3 stiffness;
};

struct Problem {
  std::array<Body, 3> bodies;
  std::array<Joint, 2> joints;
  Vec3 gravity;
};

struct Blocks {
  Mat18 mass;
  Eigen::Matrix<double, 6, 9> jv;
  Eigen::Matrix<double, 6, 9> jw;
  Mat9x6 cf;
  Mat9x6 cm;
  Vec18 force;
  Vec6 gamma;
  Vec18 accel;
  Vec6 joint_forces;
};

inline Mat3 cross_matrix(const Vec3& a) {
  Mat3 m;
  m << 0, -a[2], a[1], a[2], 0, -a[0], -a[1], a[0], 0;
  return m;
}

// Joint moment from the relative rotation body j -> body j+1 written as
// Rx(phi) Ry(theta) Rz(psi).
inline Vec3 joint_moment(const Body& parent, const Body& child, const Joint& joint) {
  const Mat3 rp = parent.attitude.normalized().toRotationMatrix();
  const Mat3 rc = child.attitude.normalized().toRotationMatrix();
  const Mat3 rel = (parent.attitude.normalized().conjugate() * child.attitude.normalized()).toRotationMatrix();
  const double theta = std::asin(std::clamp(rel(0, 2), -1.0, 1.0));
  const double phi = std::atan2(-rel(1, 2), rel(2, 2));
  const double psi = std::atan2(-rel(0, 1), rel(0, 0));
  const Vec3 b1 = rp.col(0);
  const Vec3 x2 = rp * Eigen::AngleAxisd(phi, Vec3::UnitX()).toRotationMatrix().col(1);
  const Vec3 b3 = rc.col(2);
  return joint.stiffness[0] * phi * b1 + joint.stiffness[1] * theta * x2 + joint.stiffness[2] * psi * b3;
}

inline Blocks evaluate(const Problem& p) {
  Blocks b;
  std::array<Mat3, 3> inertia;
  std::array<Mat3, 3> t;  // inertial -> body
  for (int i = 0; i < 3; ++i) {
    t[i] = p.bodies[i].attitude.normalized().toRotationMatrix().transpose();
    inertia[i] = t[i].transpose() * p.bodies[i].inertia_body * t[i];
  }
  // Joint-to-COM vectors in inertial components.
  const Vec3 s_b1j1 = -(t[0].transpose() * p.joints[0].attach_parent);
  const Vec3 s_b2j1 = -(t[1].transpose() * p.joints[0].attach_child);
  const Vec3 s_b2j2 = -(t[1].transpose() * p.joints[1].attach_parent);
  const Vec3 s_b3j2 = -(t[2].transpose() * p.joints[1].attach_child);

  b.mass.setZero();
  for (int i = 0; i < 3; ++i) {
    b.mass.block<3, 3>(3 * i, 3 * i) = p.bodies[i].mass * Mat3::Identity();
    b.mass.block<3, 3>(9 + 3 * i, 9 + 3 * i) = inertia[i];
  }

  const Mat3 id = Mat3::Identity();
  const Mat3 z = Mat3::Zero();
  b.jv << -id, id, z,
          z, -id, id;
  b.jw << -cross_matrix(s_b1j1), cross_matrix(s_b2j1), z,
          z, -cross_matrix(s_b2j2), cross_matrix(s_b3j2);
  b.cf << id, z,
          -id, id,
          z, -id;
  b.cm << -cross_matrix(s_b1j1), z,
          cross_matrix(s_b2j1), -cross_matrix(s_b2j2),
          z, cross_matrix(s_b3j2);

  const Vec3 mj1 = joint_moment(p.bodies[0], p.bodies[1], p.joints[0]);
  const Vec3 mj2 = joint_moment(p.bodies[1], p.bodies[2], p.joints[1]);
  std::array<Vec3, 3> gyro;
  for (int i = 0; i < 3; ++i) {
    gyro[i] = cross_matrix(p.bodies[i].omega) * inertia[i] * p.bodies[i].omega;
  }
  const auto& bd = p.bodies;
  b.force << bd[0].force + bd[0].mass * p.gravity,
             bd[1].force + bd[1].mass * p.gravity,
             bd[2].force + bd[2].mass * p.gravity,
             t[0].transpose() * bd[0].moment_body + mj1 - gyro[0],
             t[1].transpose() * bd[1].moment_body - mj1 + mj2 - gyro[1],
             t[2].transpose() * bd[2].moment_body - mj2 - gyro[2];

  const Mat3 w1 = cross_matrix(bd[0].omega), w2 = cross_matrix(bd[1].omega), w3 = cross_matrix(bd[2].omega);
  b.gamma << -w1 * w1 * s_b1j1 + w2 * w2 * s_b2j1,
             -w2 * w2 * s_b2j2 + w3 * w3 * s_b3j2;

  Eigen::Matrix<double, 24, 24> k = Eigen::Matrix<double, 24, 24>::Zero();
  Mat6x18 j;
  j << b.jv, b.jw;
  k.topLeftCorner<18, 18>() = b.mass;
  k.topRightCorner<18, 6>() = j.transpose();
  k.bottomLeftCorner<6, 18>() = j;
  Eigen::Matrix<double, 24, 1> rhs;
  rhs << b.force, b.gamma;
  const Eigen::Matrix<double, 24, 1> x = k.partialPivLu().solve(rhs);
  b.accel = x.head<18>();
  b.joint_forces = -x.tail<6>();
  return b;
}

/// Random physically valid three-body problem. Positions need not close the
/// joints; the block formulas do not depend on it.
inline Problem random_problem(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.5, 3.0);
  auto vec = [&](double scale) { return Vec3(scale * u(rng), scale * u(rng), scale * u(rng)); };
  auto quat = [&]() {
    Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
    return q.normalized();
  };
  Problem p;
  for (auto& body : p.bodies) {
    body.mass = pos(rng);
    // Principal moments built from positive "mass distribution" terms keep
    // the triangle inequality strict.
    const double a = pos(rng), bb = pos(rng), c = pos(rng);
    const Mat3 principal = Eigen::Vector3d(bb + c, a + c, a + bb).asDiagonal();
    const Mat3 r = quat().toRotationMatrix();
    body.inertia_body = r * principal * r.transpose();
    body.inertia_body = 0.5 * (body.inertia_body + body.inertia_body.transpose()).eval();
    body.position = vec(2.0);
    body.attitude = quat();
    body.velocity = vec(1.0);
    body.omega = vec(2.0);
    body.force = vec(3.0);
    body.moment_body = vec(1.0);
  }
  for (auto& joint : p.joints) {
    joint.attach_parent = vec(1.0);
    joint.attach_child = vec(1.0);
    joint.stiffness = Vec3(pos(rng), pos(rng), pos(rng));
  }
  p.gravity = vec(10.0);
  return p;
}

inline UnitQuaternion to_unit(const Eigen::Quaterniond& q) { return {q.w(), q.x(), q.y(), q.z()}; }

inline ChainSpec to_spec(const Problem& p) {
  ChainSpec spec;
  for (const auto& b : p.bodies) spec.bodies.push_back({b.mass, b.inertia_body});
  for (const auto& j : p.joints) {
    JointSpec js;
    js.attach_parent = j.attach_parent;
    js.attach_child = j.attach_child;
    js.stiffness = j.stiffness;
    spec.joints.push_back(js);
  }
  spec.gravity = p.gravity;
  return spec;
}

inline ChainState to_state(const Problem& p) {
  ChainState s;
  for (const auto& b : p.bodies) s.bodies.push_back({b.position, to_unit(b.attitude), b.velocity, b.omega});
  return s;
}

/// External port [F_B; M_B] in inertial components.
inline VectorXd to_port(const Problem& p) {
  VectorXd port(18);
  for (int i = 0; i < 3; ++i) {
    port.segment<3>(3 * i) = p.bodies[i].force;
    port.segment<3>(9 + 3 * i) = p.bodies[i].attitude.normalized().toRotationMatrix() * p.bodies[i].moment_body;
  }
  return port;
}

struct Mismatch {
  std::string block;
  int row = -1;
  int col = -1;
  double deviation = 0.0;
};

/// Largest entrywise deviation between two matrices, with its location.
inline Mismatch compare(const std::string& name, const MatrixXd& a, const MatrixXd& b) {
  Mismatch m{name, -1, -1, 0.0};
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    m.deviation = std::numeric_limits<double>::infinity();
    return m;
  }
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double d = std::abs(a(r, c) - b(r, c));
      if (!(d <= m.deviation)) {
        m.deviation = d;
        m.row = static_cast<int>(r);
        m.col = static_cast<int>(c);
      }
    }
  }
  return m;
}

/// Which assembler block to corrupt, for exercising the comparison itself.
enum class Fault { kNone, kJOmega };

struct TrialResult {
  std::vector<Mismatch> blocks;  // assembly blocks
  std::vector<Mismatch> solve;   // accel, joint forces
};

inline TrialResult run_trial(const Problem& p, Fault fault = Fault::kNone) {
  const Blocks ref = evaluate(p);
  AssembledSystem sys = assemble(to_spec(p), to_state(p), to_port(p));
  if (fault == Fault::kJOmega) sys.jacobian(0, 9) += 1e-6;
  TrialResult r;
  r.blocks.push_back(compare("M", sys.mass, ref.mass));
  r.blocks.push_back(compare("J_v", sys.jacobian.leftCols(9), ref.jv));
  r.blocks.push_back(compare("J_omega", sys.jacobian.rightCols(9), ref.jw));
  r.blocks.push_back(compare("C_F", sys.force_dist, ref.cf));
  r.blocks.push_back(compare("C_M", sys.moment_dist, ref.cm));
  r.blocks.push_back(compare("F", sys.force, ref.force));
  r.blocks.push_back(compare("gamma", sys.gamma, ref.gamma));
  const SolveResult sol = solve_augmented(sys);
  r.solve.push_back(compare("accel", sol.accel, ref.accel));
  r.solve.push_back(compare("F_J", sol.joint_forces, ref.joint_forces));
  return r;
}

struct OracleSummary {
  int trials = 0;
  Mismatch worst_block;
  Mismatch worst_solve;
  bool passed = true;
};

inline OracleSummary run_oracle(std::uint64_t seed, int trials, Fault fault = Fault::kNone,
                                double block_tol = 1e-12, double solve_tol = 1e-11) {
  std::mt19937_64 rng(seed);
  OracleSummary s;
  s.trials = trials;
  for (int t = 0; t < trials; ++t) {
    const TrialResult r = run_trial(random_problem(rng), fault);
    for (const auto& m : r.blocks) {
      if (!(m.deviation <= s.worst_block.deviation)) s.worst_block = m;
    }
    for (const auto& m : r.solve) {
      if (!(m.deviation <= s.worst_solve.deviation)) s.worst_solve = m;
    }
  }
  s.passed = s.worst_block.deviation < block_tol && s.worst_solve.deviation < solve_tol;
  return s;
}

}  // namespace nechain::reference
