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

// Desired motions for the controllers.
//
// ChainTrajectory moves a constraint-consistent reference configuration by a
// rigid motion (constant linear velocity plus constant spin about a moving
// center), so every sample is feasible. EndEffectorTrajectory describes the
// last body's pose: a closed-form path or a waypoint spline for the position,
// and a fixed attitude.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nechain/chain.hpp"
#include "nechain/errors.hpp"
#include "nechain/geom.hpp"

namespace nechain {

struct ChainTrajectory {
  ChainState reference;          // configuration at t = 0
  Vec3 center = Vec3::Zero();    // rotation center at t = 0
  Vec3 velocity = Vec3::Zero();  // drift of the center
  Vec3 omega = Vec3::Zero();     // spin, inertial components

  /// Desired pose and twist of every body.
  ChainState desired(double t) const {
    ChainState d = reference;
    d.time = t;
    const UnitQuaternion turn = quat_from_rotation_vector(omega * t);
    const Mat3 rot = rotation_from_quat(turn).transpose();
    for (auto& b : d.bodies) {
      const Vec3 r = rot * (b.position - center);
      b.position = center + velocity * t + r;
      b.attitude = quat_multiply(turn, b.attitude);
      b.velocity = velocity + omega.cross(r);
      b.omega = omega;
    }
    return d;
  }

  /// D nu_d along the desired motion.
  Eigen::VectorXd desired_accel(double t) const {
    const ChainState d = desired(t);
    const int n = d.size();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(6 * n);
    for (int i = 0; i < n; ++i) {
      a.segment<3>(3 * i) = omega.cross(d.bodies[i].velocity - velocity);
    }
    return a;
  }

  /// The same rigid velocity field sampled at the actual body positions;
  /// feasible for any constraint-consistent configuration.
  Eigen::VectorXd field_twist(const ChainState& s) const {
    const int n = s.size();
    Eigen::VectorXd nu(6 * n);
    const Vec3 c = center + velocity * s.time;
    for (int i = 0; i < n; ++i) {
      nu.segment<3>(3 * i) = velocity + omega.cross(s.bodies[i].position - c);
      nu.segment<3>(3 * n + 3 * i) = omega;
    }
    return nu;
  }

  /// Time derivative of field_twist along the actual motion.
  Eigen::VectorXd field_accel(const ChainState& s) const {
    const int n = s.size();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(6 * n);
    for (int i = 0; i < n; ++i) a.segment<3>(3 * i) = omega.cross(s.bodies[i].velocity - velocity);
    return a;
  }
};

// ---------------------------------------------------------------------------
// End-effector paths

struct CirclePath {
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 start_direction = Vec3::UnitX();  // projected onto the plane
  double radius = 1.0;
  double rate = 1.0;                     // rad/s

  bool operator==(const CirclePath&) const = default;
};

struct LinePath {
  Vec3 start = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();

  bool operator==(const LinePath&) const = default;
};

/// Rest-to-rest quintic blend from `start` to `end` over `duration`.
struct QuinticPath {
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
  double duration = 1.0;

  bool operator==(const QuinticPath&) const = default;
};

/// Natural cubic spline through (time, point) pairs; held constant outside
/// the time range.
struct WaypointPath {
  std::vector<double> times;
  std::vector<Vec3> points;

  bool operator==(const WaypointPath&) const = default;
};

using EndEffectorPath = std::variant<CirclePath, LinePath, QuinticPath, WaypointPath>;

struct PathSample {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

namespace detail {

inline PathSample sample(const CirclePath& c, double t) {
  const Vec3 n = c.normal.normalized();
  const Vec3 u = (c.start_direction - c.start_direction.dot(n) * n).normalized();
  const Vec3 w = n.cross(u);
  const double a = c.rate * t, ca = std::cos(a), sa = std::sin(a);
  PathSample s;
  s.position = c.center + c.radius * (ca * u + sa * w);
  s.velocity = c.radius * c.rate * (-sa * u + ca * w);
  s.accel = -c.radius * c.rate * c.rate * (ca * u + sa * w);
  return s;
}

inline PathSample sample(const LinePath& l, double t) { return {l.start + t * l.velocity, l.velocity, Vec3::Zero()}; }

inline PathSample sample(const QuinticPath& q, double t) {
  const double tau = std::clamp(t / q.duration, 0.0, 1.0);
  const bool moving = t > 0.0 && t < q.duration;
  const double sv = tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau);
  const double dv = moving ? 30.0 * tau * tau * (1.0 - tau) * (1.0 - tau) / q.duration : 0.0;
  const double av = moving ? 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * tau * tau) / (q.duration * q.duration) : 0.0;
  const Vec3 d = q.end - q.start;
  return {q.start + sv * d, dv * d, av * d};
}

inline PathSample sample(const WaypointPath& w, double t) {
  const int n = static_cast<int>(w.times.size());
  if (n == 0) return {};
  if (n == 1 || t <= w.times.front()) return {w.points.front(), Vec3::Zero(), Vec3::Zero()};
  if (t >= w.times.back()) return {w.points.back(), Vec3::Zero(), Vec3::Zero()};
  // Second derivatives of the natural spline (Thomas algorithm).
  std::vector<Vec3> m(n, Vec3::Zero());
  if (n > 2) {
    std::vector<double> diag(n - 2), upper(n - 2);
    std::vector<Vec3> rhs(n - 2);
    for (int i = 1; i + 1 < n; ++i) {
      const double h0 = w.times[i] - w.times[i - 1], h1 = w.times[i + 1] - w.times[i];
      diag[i - 1] = 2.0 * (h0 + h1);
      upper[i - 1] = h1;
      rhs[i - 1] = 6.0 * ((w.points[i + 1] - w.points[i]) / h1 - (w.points[i] - w.points[i - 1]) / h0);
    }
    for (int i = 1; i < n - 2; ++i) {
      const double h0 = w.times[i + 1] - w.times[i];
      const double f = h0 / diag[i - 1];
      diag[i] -= f * upper[i - 1];
      rhs[i] -= f * rhs[i - 1];
    }
    for (int i = n - 3; i >= 0; --i) {
      Vec3 r = rhs[i];
      if (i + 1 < n - 2) r -= upper[i] * m[i + 2];
      m[i + 1] = r / diag[i];
    }
  }
  const int k = static_cast<int>(std::upper_bound(w.times.begin(), w.times.end(), t) - w.times.begin()) - 1;
  const double h = w.times[k + 1] - w.times[k];
  const double a = (w.times[k + 1] - t) / h, b = (t - w.times[k]) / h;
  const Vec3& p0 = w.points[k];
  const Vec3& p1 = w.points[k + 1];
  PathSample s;
  s.position = a * p0 + b * p1 + ((a * a * a - a) * m[k] + (b * b * b - b) * m[k + 1]) * h * h / 6.0;
  s.velocity = (p1 - p0) / h + (-(3.0 * a * a - 1.0) * m[k] + (3.0 * b * b - 1.0) * m[k + 1]) * h / 6.0;
  s.accel = a * m[k] + b * m[k + 1];
  return s;
}

}  // namespace detail

inline PathSample sample_path(const EndEffectorPath& path, double t) {
  return std::visit([t](const auto& p) { return detail::sample(p, t); }, path);
}

/// Throws kInvalidArgument on degenerate parameters.
inline void validate_path(const EndEffectorPath& path) {
  auto bad = [](const char* what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (const auto* c = std::get_if<CirclePath>(&path)) {
    if (c->normal.norm() < 1e-12) bad("circle normal is zero");
    const Vec3 n = c->normal.normalized();
    if ((c->start_direction - c->start_direction.dot(n) * n).norm() < 1e-12) bad("circle start direction is parallel to the normal");
    if (!(c->radius > 0.0)) bad("circle radius must be positive");
  } else if (const auto* q = std::get_if<QuinticPath>(&path)) {
    if (!(q->duration > 0.0)) bad("quintic duration must be positive");
  } else if (const auto* w = std::get_if<WaypointPath>(&path)) {
    if (w->times.size() != w->points.size() || w->times.empty()) bad("waypoint table is empty or ragged");
    for (std::size_t i = 1; i < w->times.size(); ++i) {
      if (!(w->times[i] > w->times[i - 1])) bad("waypoint times must increase");
    }
  }
}

struct EndEffectorTrajectory {
  EndEffectorPath path = LinePath{};
  std::optional<UnitQuaternion> attitude;  // unset: hold the initial attitude

  /// [v; w] desired and its derivative (6-vectors).
  Eigen::Matrix<double, 6, 1> twist(double t) const {
    Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
    v.head<3>() = sample_path(path, t).velocity;
    return v;
  }
  Eigen::Matrix<double, 6, 1> accel(double t) const {
    Eigen::Matrix<double, 6, 1> a = Eigen::Matrix<double, 6, 1>::Zero();
    a.head<3>() = sample_path(path, t).accel;
    return a;
  }
};

}  // namespace nechain
