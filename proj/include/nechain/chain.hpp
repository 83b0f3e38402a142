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

// Physical description and dynamic state of a serial chain of rigid bodies
// joined by spherical joints with torsional stiffness.
//
// Body i (0-based in code) has its frame at its center of mass. Joint j
// connects body j (parent) to body j + 1 (child). Attachment vectors are the
// offsets from each body's center of mass to the joint point, in that body's
// own frame.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nechain/errors.hpp"
#include "nechain/geom.hpp"

namespace nechain {

struct BodySpec {
  double mass = 1.0;
  Mat3 inertia = Mat3::Identity();  // body frame, about the center of mass

  bool operator==(const BodySpec&) const = default;
};

struct JointSpec {
  Vec3 attach_parent = Vec3::Zero();  // parent COM -> joint, parent frame
  Vec3 attach_child = Vec3::Zero();   // child COM -> joint, child frame
  Vec3 stiffness = Vec3::Zero();      // K_phi, K_theta, K_psi [N m / rad]
  Vec3 damping = Vec3::Zero();        // per-axis viscous [N m s / rad]

  bool operator==(const JointSpec&) const = default;
};

struct ChainSpec {
  std::vector<BodySpec> bodies;
  std::vector<JointSpec> joints;
  Vec3 gravity = Vec3::Zero();  // inertial frame

  int size() const { return static_cast<int>(bodies.size()); }
  bool operator==(const ChainSpec&) const = default;
};

struct BodyState {
  Vec3 position = Vec3::Zero();  // s_{B_i I}
  UnitQuaternion attitude;       // q^{B_i I}
  Vec3 velocity = Vec3::Zero();  // v_{B_i}^I, inertial components
  Vec3 omega = Vec3::Zero();     // w_{B_i}^I, inertial components
};

struct ChainState {
  std::vector<BodyState> bodies;
  double time = 0.0;

  int size() const { return static_cast<int>(bodies.size()); }
};

/// Generalized twist nu = [v_1 .. v_N, w_1 .. w_N].
inline Eigen::VectorXd twist(const ChainState& state) {
  const int n = state.size();
  Eigen::VectorXd nu(6 * n);
  for (int i = 0; i < n; ++i) {
    nu.segment<3>(3 * i) = state.bodies[i].velocity;
    nu.segment<3>(3 * n + 3 * i) = state.bodies[i].omega;
  }
  return nu;
}

inline void set_twist(ChainState& state, const Eigen::VectorXd& nu) {
  const int n = state.size();
  for (int i = 0; i < n; ++i) {
    state.bodies[i].velocity = nu.segment<3>(3 * i);
    state.bodies[i].omega = nu.segment<3>(3 * n + 3 * i);
  }
}

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
  kEmptyChain,
  kJointCountMismatch,
  kNonPositiveMass,
  kNonFiniteValue,
  kInertiaNotSymmetric,
  kInertiaNotPositiveDefinite,
  kTriangleInequalityViolated,
  kNegativeStiffness,
  kNegativeDamping,
};

inline std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kEmptyChain: return "EmptyChain";
    case ViolationKind::kJointCountMismatch: return "JointCountMismatch";
    case ViolationKind::kNonPositiveMass: return "NonPositiveMass";
    case ViolationKind::kNonFiniteValue: return "NonFiniteValue";
    case ViolationKind::kInertiaNotSymmetric: return "InertiaNotSymmetric";
    case ViolationKind::kInertiaNotPositiveDefinite: return "InertiaNotPositiveDefinite";
    case ViolationKind::kTriangleInequalityViolated: return "TriangleInequalityViolated";
    case ViolationKind::kNegativeStiffness: return "NegativeStiffness";
    case ViolationKind::kNegativeDamping: return "NegativeDamping";
  }
  return "Unknown";
}

struct Violation {
  ViolationKind kind;
  int index = -1;  // body or joint index, -1 for chain-level
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// Checks every body, joint and chain invariant; never throws.
inline std::vector<Violation> validate_spec(const ChainSpec& spec) {
  std::vector<Violation> out;
  auto add = [&out](ViolationKind kind, int index, std::string msg) {
    out.push_back({kind, index, std::move(msg)});
  };
  if (spec.bodies.empty()) add(ViolationKind::kEmptyChain, -1, "chain has no bodies");
  if (!spec.bodies.empty() && spec.joints.size() + 1 != spec.bodies.size()) {
    add(ViolationKind::kJointCountMismatch, -1,
        "expected " + std::to_string(spec.bodies.size() - 1) + " joints, got " +
            std::to_string(spec.joints.size()));
  }
  if (!spec.gravity.allFinite()) add(ViolationKind::kNonFiniteValue, -1, "gravity is not finite");

  for (int i = 0; i < spec.size(); ++i) {
    const BodySpec& b = spec.bodies[i];
    const std::string where = "body " + std::to_string(i + 1);
    if (!std::isfinite(b.mass) || !b.inertia.allFinite()) {
      add(ViolationKind::kNonFiniteValue, i, where + ": non-finite mass or inertia");
      continue;
    }
    if (b.mass <= 0.0) add(ViolationKind::kNonPositiveMass, i, where + ": mass must be > 0");
    const double scale = std::max(1.0, b.inertia.cwiseAbs().maxCoeff());
    if ((b.inertia - b.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      add(ViolationKind::kInertiaNotSymmetric, i, where + ": inertia not symmetric");
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(b.inertia);
    const Vec3 moments = eig.eigenvalues();
    if (moments.minCoeff() <= 0.0) {
      add(ViolationKind::kInertiaNotPositiveDefinite, i, where + ": inertia not positive definite");
      continue;
    }
    const double tol = 1e-12 * moments.maxCoeff();
    for (int k = 0; k < 3; ++k) {
      if (moments[k] > moments[(k + 1) % 3] + moments[(k + 2) % 3] + tol) {
        add(ViolationKind::kTriangleInequalityViolated, i,
            where + ": principal moments violate the triangle inequality");
        break;
      }
    }
  }

  for (int j = 0; j < static_cast<int>(spec.joints.size()); ++j) {
    const JointSpec& jt = spec.joints[j];
    const std::string where = "joint " + std::to_string(j + 1);
    if (!jt.attach_parent.allFinite() || !jt.attach_child.allFinite() ||
        !jt.stiffness.allFinite() || !jt.damping.allFinite()) {
      add(ViolationKind::kNonFiniteValue, j, where + ": non-finite attachment or gains");
      continue;
    }
    if (jt.stiffness.minCoeff() < 0.0) add(ViolationKind::kNegativeStiffness, j, where + ": negative stiffness");
    if (jt.damping.minCoeff() < 0.0) add(ViolationKind::kNegativeDamping, j, where + ": negative damping");
  }
  return out;
}

inline void require_valid(const ChainSpec& spec) {
  const auto violations = validate_spec(spec);
  if (!violations.empty()) {
    std::string msg;
    for (const auto& v : violations) {
      if (!msg.empty()) msg += "; ";
      msg += to_string(v.kind) + " (" + v.message + ")";
    }
    throw Error(ErrorCode::kSpecInvalid, msg);
  }
}

// ---------------------------------------------------------------------------
// Consistent initial conditions

/// Relative attitude of body j+1 with respect to body j: body j+1 is body j
/// turned by phi about its axis 1, then theta about the new axis 2, then psi
/// about the resulting axis 3. These are the angles the joint spring acts on.
struct JointAngles {
  double phi = 0.0;
  double theta = 0.0;
  double psi = 0.0;

  bool operator==(const JointAngles&) const = default;
};

inline UnitQuaternion joint_rotation(const JointAngles& a) {
  const UnitQuaternion qx(std::cos(0.5 * a.phi), std::sin(0.5 * a.phi), 0.0, 0.0);
  const UnitQuaternion qy(std::cos(0.5 * a.theta), 0.0, std::sin(0.5 * a.theta), 0.0);
  const UnitQuaternion qz(std::cos(0.5 * a.psi), 0.0, 0.0, std::sin(0.5 * a.psi));
  return quat_multiply(quat_multiply(qx, qy), qz);
}

struct BasePose {
  Vec3 position = Vec3::Zero();
  UnitQuaternion attitude;
};

struct BaseTwist {
  Vec3 velocity = Vec3::Zero();  // inertial
  Vec3 omega = Vec3::Zero();     // inertial
};

/// Joint point of joint j as seen from the parent and from the child body.
inline Vec3 joint_point_parent(const ChainSpec& spec, const ChainState& s, int j) {
  const BodyState& b = s.bodies[j];
  return b.position + rotation_from_quat(b.attitude).transpose() * spec.joints[j].attach_parent;
}

inline Vec3 joint_point_child(const ChainSpec& spec, const ChainState& s, int j) {
  const BodyState& b = s.bodies[j + 1];
  return b.position + rotation_from_quat(b.attitude).transpose() * spec.joints[j].attach_child;
}

/// Places every body by forward propagation from the base so that all joint
/// gaps vanish and the velocity constraints hold. `joint_angles` and
/// `joint_rates` may be shorter than the joint list (missing entries are
/// zero). Joint rates are w_{j+1} - w_j in body-j components.
inline ChainState assemble_consistent_state(const ChainSpec& spec, const BasePose& base,
                                            const std::vector<JointAngles>& joint_angles,
                                            const BaseTwist& base_twist,
                                            const std::vector<Vec3>& joint_rates,
                                            double time = 0.0) {
  require_valid(spec);
  const int n = spec.size();
  ChainState s;
  s.time = time;
  s.bodies.resize(n);
  s.bodies[0].position = base.position;
  s.bodies[0].attitude = base.attitude;
  s.bodies[0].velocity = base_twist.velocity;
  s.bodies[0].omega = base_twist.omega;
  for (int j = 0; j + 1 < n; ++j) {
    const JointSpec& jt = spec.joints[j];
    const BodyState& parent = s.bodies[j];
    BodyState& child = s.bodies[j + 1];
    const JointAngles angles = j < static_cast<int>(joint_angles.size()) ? joint_angles[j] : JointAngles{};
    const Vec3 rate = j < static_cast<int>(joint_rates.size()) ? joint_rates[j] : Vec3::Zero();

    child.attitude = quat_multiply(parent.attitude, joint_rotation(angles));
    const Mat3 rp = rotation_from_quat(parent.attitude).transpose();
    const Mat3 rc = rotation_from_quat(child.attitude).transpose();
    const Vec3 arm_parent = rp * jt.attach_parent;
    const Vec3 arm_child = rc * jt.attach_child;
    child.position = parent.position + arm_parent - arm_child;
    child.omega = parent.omega + rp * rate;
    child.velocity = parent.velocity + parent.omega.cross(arm_parent) - child.omega.cross(arm_child);
  }
  return s;
}

struct ConstraintResiduals {
  std::vector<Vec3> position_gap;  // parent-side joint point minus child-side
  std::vector<Vec3> velocity_gap;  // left side of the velocity constraint

  double max_position_gap() const {
    double m = 0.0;
    for (const auto& g : position_gap) m = std::max(m, g.norm());
    return m;
  }
  double max_velocity_gap() const {
    double m = 0.0;
    for (const auto& g : velocity_gap) m = std::max(m, g.norm());
    return m;
  }
};

inline ConstraintResiduals constraint_residuals(const ChainSpec& spec, const ChainState& s) {
  ConstraintResiduals out;
  const int joints = static_cast<int>(spec.joints.size());
  out.position_gap.reserve(joints);
  out.velocity_gap.reserve(joints);
  for (int j = 0; j < joints; ++j) {
    const BodyState& a = s.bodies[j];
    const BodyState& b = s.bodies[j + 1];
    const Vec3 arm_a = rotation_from_quat(a.attitude).transpose() * spec.joints[j].attach_parent;
    const Vec3 arm_b = rotation_from_quat(b.attitude).transpose() * spec.joints[j].attach_child;
    out.position_gap.push_back((a.position + arm_a) - (b.position + arm_b));
    // v_{j+1} - v_j - S(s_{B_j J_j}) w_j + S(s_{B_{j+1} J_j}) w_{j+1}, s_{BJ} = -arm.
    out.velocity_gap.push_back(b.velocity - a.velocity + skew(arm_a) * a.omega - skew(arm_b) * b.omega);
  }
  return out;
}

}  // namespace nechain
