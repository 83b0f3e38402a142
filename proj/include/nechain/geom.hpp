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

// Small-vector algebra and attitude kinematics.
//
// Frame convention used throughout the library: `rotation_from_quat(q)`
// returns T^{BI}, the matrix that maps inertial-frame components of a vector
// to body-frame components. Its rows are the body axes written in inertial
// components. "Express in inertial frame" is therefore always T^T * x_body.
// Quaternions follow the Hamilton product and are scalar-first (w, x, y, z);
// with that product T(a * b) = T(b) * T(a).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nechain {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Cross-product matrix: skew(v) * w == v x w.
inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

/// Roll / pitch / yaw of a Z-Y-X (yaw first) rotation sequence, radians.
struct EulerZYX {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  bool operator==(const EulerZYX&) const = default;
};

/// Scalar-first unit quaternion. Every constructor normalizes.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;

  UnitQuaternion(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    w_ = w / n;
    x_ = x / n;
    y_ = y / n;
    z_ = z / n;
  }

  explicit UnitQuaternion(const Vec4& c) : UnitQuaternion(c[0], c[1], c[2], c[3]) {}

  static UnitQuaternion identity() { return {}; }

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  Vec4 coeffs() const { return {w_, x_, y_, z_}; }
  Vec3 vec() const { return {x_, y_, z_}; }

  bool operator==(const UnitQuaternion&) const = default;

 private:
  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

/// Hamilton product on raw 4-vectors (no normalization).
inline Vec4 hamilton(const Vec4& a, const Vec4& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

inline UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
  return UnitQuaternion(hamilton(a.coeffs(), b.coeffs()));
}

inline UnitQuaternion quat_conjugate(const UnitQuaternion& q) {
  return {q.w(), -q.x(), -q.y(), -q.z()};
}

/// Quaternion rate 0.5 * Omega4(p, q, r) * q for a body-frame angular velocity.
/// Works on an unnormalized quaternion too (the map is linear in q).
inline Vec4 quat_derivative(const Vec4& q, const Vec3& omega_body) {
  const double p = omega_body.x();
  const double r_q = omega_body.y();
  const double r = omega_body.z();
  Eigen::Matrix4d omega4;
  omega4 << 0.0, -p, -r_q, -r,
            p, 0.0, r, -r_q,
            r_q, -r, 0.0, p,
            r, r_q, -p, 0.0;
  return 0.5 * omega4 * q;
}

inline Vec4 quat_derivative(const UnitQuaternion& q, const Vec3& omega_body) {
  return quat_derivative(q.coeffs(), omega_body);
}

inline UnitQuaternion quat_from_euler(const EulerZYX& e) {
  const double cr = std::cos(0.5 * e.roll), sr = std::sin(0.5 * e.roll);
  const double cp = std::cos(0.5 * e.pitch), sp = std::sin(0.5 * e.pitch);
  const double cy = std::cos(0.5 * e.yaw), sy = std::sin(0.5 * e.yaw);
  return {cy * cp * cr + sy * sp * sr,
          cy * cp * sr - sy * sp * cr,
          cy * sp * cr + sy * cp * sr,
          sy * cp * cr - cy * sp * sr};
}

/// Euler angles plus a soft flag raised when pitch is within
/// `kGimbalTolerance` of +-pi/2. The angles are still returned (asin clamped).
struct EulerResult {
  EulerZYX angles;
  bool near_gimbal_lock = false;
};

inline constexpr double kGimbalTolerance = 1e-6;

inline EulerResult euler_from_quat(const UnitQuaternion& q) {
  const double q0 = q.w(), q1 = q.x(), q2 = q.y(), q3 = q.z();
  const double sin_pitch = std::clamp(-2.0 * (q1 * q3 - q0 * q2), -1.0, 1.0);
  EulerResult out;
  out.angles.roll = std::atan2(2.0 * (q2 * q3 + q0 * q1),
                               q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3);
  out.angles.pitch = std::asin(sin_pitch);
  out.angles.yaw = std::atan2(2.0 * (q1 * q2 + q0 * q3),
                              q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3);
  out.near_gimbal_lock =
      std::numbers::pi / 2.0 - std::abs(out.angles.pitch) < kGimbalTolerance;
  return out;
}

/// T^{BI}: inertial components -> body components.
inline Mat3 rotation_from_quat(const UnitQuaternion& q) {
  const double q0 = q.w(), q1 = q.x(), q2 = q.y(), q3 = q.z();
  Mat3 t;
  t << q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2.0 * (q1 * q2 + q0 * q3),
      2.0 * (q1 * q3 - q0 * q2),
      2.0 * (q1 * q2 - q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3,
      2.0 * (q2 * q3 + q0 * q1),
      2.0 * (q1 * q3 + q0 * q2), 2.0 * (q2 * q3 - q0 * q1),
      q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3;
  return t;
}

/// Elementary frame transformation about body axis 1, 2 or 3 (0-based index):
/// the coordinates of a vector in a frame turned by `angle` about that axis.
inline Mat3 axis_transform(int axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 t;
  switch (axis) {
    case 0:
      t << 1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c;
      break;
    case 1:
      t << c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c;
      break;
    default:
      t << c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0;
      break;
  }
  return t;
}

/// Decomposes T = axis_transform(0, roll) * axis_transform(1, pitch) *
/// axis_transform(2, yaw); the matrix counterpart of euler_from_quat.
inline EulerResult euler_from_transform(const Mat3& t) {
  EulerResult out;
  const double sin_pitch = std::clamp(-t(0, 2), -1.0, 1.0);
  out.angles.roll = std::atan2(t(1, 2), t(2, 2));
  out.angles.pitch = std::asin(sin_pitch);
  out.angles.yaw = std::atan2(t(0, 1), t(0, 0));
  out.near_gimbal_lock =
      std::numbers::pi / 2.0 - std::abs(out.angles.pitch) < kGimbalTolerance;
  return out;
}

/// Quaternion of the active rotation by |v| about v/|v|.
inline UnitQuaternion quat_from_rotation_vector(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-8) {
    // Second-order series; the constructor renormalizes.
    return {1.0 - angle * angle / 8.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z()};
  }
  const Vec3 axis = v / angle;
  const double s = std::sin(0.5 * angle);
  return {std::cos(0.5 * angle), s * axis.x(), s * axis.y(), s * axis.z()};
}

/// Rotation vector of q (inverse of quat_from_rotation_vector), angle in [0, pi].
inline Vec3 rotation_vector(const UnitQuaternion& q) {
  Vec3 v = q.vec();
  double w = q.w();
  if (w < 0.0) {
    v = -v;
    w = -w;
  }
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  return 2.0 * std::atan2(s, w) * v / s;
}

/// Attitude after turning the body by `rotation` (inertial components).
inline UnitQuaternion rotate_inertial(const UnitQuaternion& q, const Vec3& rotation) {
  return quat_multiply(quat_from_rotation_vector(rotation), q);
}

/// Quaternion whose rotation_from_quat equals the orthonormal matrix `t`.
inline UnitQuaternion quat_from_transform(const Mat3& t) {
  // Shepperd's method on R = t^T (body -> inertial).
  const Mat3 r = t.transpose();
  const double trace = r.trace();
  double w, x, y, z;
  if (trace > r(0, 0) && trace > r(1, 1) && trace > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    w = 0.25 * s;
    x = (r(2, 1) - r(1, 2)) / s;
    y = (r(0, 2) - r(2, 0)) / s;
    z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    w = (r(2, 1) - r(1, 2)) / s;
    x = 0.25 * s;
    y = (r(0, 1) + r(1, 0)) / s;
    z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    w = (r(0, 2) - r(2, 0)) / s;
    x = (r(0, 1) + r(1, 0)) / s;
    y = 0.25 * s;
    z = (r(1, 2) + r(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    w = (r(1, 0) - r(0, 1)) / s;
    x = (r(0, 2) + r(2, 0)) / s;
    y = (r(1, 2) + r(2, 1)) / s;
    z = 0.25 * s;
  }
  if (w < 0.0) return {-w, -x, -y, -z};
  return {w, x, y, z};
}

}  // namespace nechain
