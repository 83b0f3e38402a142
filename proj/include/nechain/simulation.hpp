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

// Fixed-step integration of the chain, the external load schedule, and the
// per-run monitors.
//
// Loads are resolved once per step: a pulse is active for a whole step when
// the step midpoint lies in [t_start, t_stop), and is held across all RK4
// stages. Body-frame pulses follow the stage attitude. A controller, when
// configured, is evaluated at every stage and its port command is applied
// as the actual load (ideal port).

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nechain/chain.hpp"
#include "nechain/control.hpp"
#include "nechain/dynamics.hpp"
#include "nechain/errors.hpp"
#include "nechain/geom.hpp"

namespace nechain {

enum class Integrator { kRk4, kSemiImplicitEuler };

struct IntegrationConfig {
  double dt = 1e-3;
  double t_end = 10.0;
  Integrator method = Integrator::kRk4;
  bool project_positions = false;
  int decimation = 1;  // keep every k-th record (the last one is always kept)
  SolveOptions solve;

  bool operator==(const IntegrationConfig&) const = default;
};

enum class PulseKind { kForce, kMoment };
enum class PulseFrame { kInertial, kBody };

struct Pulse {
  int body = 0;  // 0-based
  PulseKind kind = PulseKind::kForce;
  PulseFrame frame = PulseFrame::kInertial;
  Vec3 vector = Vec3::Zero();
  double t_start = 0.0;
  double t_stop = 0.0;

  bool active_at(double t) const { return t >= t_start && t < t_stop; }
  bool operator==(const Pulse&) const = default;
};

using PulseSchedule = std::vector<Pulse>;

struct SimulationInputs {
  PulseSchedule pulses;
  bool gravity_compensation = false;  // adds -m_i g to every body
  std::optional<ControllerConfig> controller;
};

inline void validate(const IntegrationConfig& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw Error(ErrorCode::kInvalidArgument, "dt must be positive");
  if (!(cfg.t_end >= 0.0) || !std::isfinite(cfg.t_end)) throw Error(ErrorCode::kInvalidArgument, "t_end must be non-negative");
  if (cfg.decimation < 1) throw Error(ErrorCode::kInvalidArgument, "decimation must be at least 1");
}

inline void validate(const PulseSchedule& pulses, int n) {
  for (const auto& p : pulses) {
    if (p.body < 0 || p.body >= n) throw Error(ErrorCode::kInvalidArgument, "pulse body index out of range");
    if (!(p.t_start < p.t_stop)) throw Error(ErrorCode::kInvalidArgument, "pulse t_start must precede t_stop");
    if (!p.vector.allFinite()) throw Error(ErrorCode::kInvalidArgument, "pulse vector is not finite");
  }
}

inline std::vector<Pulse> active_pulses(const PulseSchedule& pulses, double t) {
  std::vector<Pulse> out;
  for (const auto& p : pulses) {
    if (p.active_at(t)) out.push_back(p);
  }
  return out;
}

/// Open-loop port load of the held pulses (plus gravity compensation).
inline VectorXd disturbance_port(const ChainSpec& spec, const ChainState& state, const std::vector<Pulse>& pulses,
                                 bool gravity_compensation) {
  const int n = spec.size();
  VectorXd port = VectorXd::Zero(6 * n);
  for (const auto& p : pulses) {
    const Vec3 v = p.frame == PulseFrame::kBody
                       ? Vec3(rotation_from_quat(state.bodies[p.body].attitude).transpose() * p.vector)
                       : p.vector;
    const int offset = p.kind == PulseKind::kForce ? 3 * p.body : 3 * n + 3 * p.body;
    port.segment<3>(offset) += v;
  }
  if (gravity_compensation) {
    for (int i = 0; i < n; ++i) port.segment<3>(3 * i) -= spec.bodies[i].mass * spec.gravity;
  }
  return port;
}

/// Everything computed at one state: the assembled system including every
/// load, the solve, and the controller command if any.
struct Evaluation {
  AssembledSystem sys;
  SolveResult solve;
  std::optional<PortCommand> command;
};

inline Evaluation evaluate(const ChainSpec& spec, const ChainState& state, const SimulationInputs& inputs,
                           const std::vector<Pulse>& held, double dt, const SolveOptions& solve_opts = {}) {
  Evaluation e;
  e.sys = assemble(spec, state, disturbance_port(spec, state, held, inputs.gravity_compensation));
  if (inputs.controller && inputs.controller->mode != ControlMode::kNone) {
    e.command = control(spec, state, e.sys, *inputs.controller, dt);
    apply_port(e.sys, e.command->tau);
  }
  e.solve = solve_augmented(e.sys, solve_opts);
  return e;
}

// ---------------------------------------------------------------------------
// Integration

namespace detail {

// Flat state: per body [p (3), q (4), v (3), w (3)].
inline VectorXd pack(const ChainState& s) {
  const int n = s.size();
  VectorXd x(13 * n);
  for (int i = 0; i < n; ++i) {
    const BodyState& b = s.bodies[i];
    x.segment<3>(13 * i) = b.position;
    x.segment<4>(13 * i + 3) = b.attitude.coeffs();
    x.segment<3>(13 * i + 7) = b.velocity;
    x.segment<3>(13 * i + 10) = b.omega;
  }
  return x;
}

inline ChainState unpack(const VectorXd& x, double t) {
  const int n = static_cast<int>(x.size() / 13);
  ChainState s;
  s.time = t;
  s.bodies.resize(n);
  for (int i = 0; i < n; ++i) {
    BodyState& b = s.bodies[i];
    b.position = x.segment<3>(13 * i);
    b.attitude = UnitQuaternion(Vec4(x.segment<4>(13 * i + 3)));
    b.velocity = x.segment<3>(13 * i + 7);
    b.omega = x.segment<3>(13 * i + 10);
  }
  return s;
}

inline VectorXd rates(const VectorXd& x, const ChainState& s, const VectorXd& accel) {
  const int n = s.size();
  VectorXd dx(13 * n);
  for (int i = 0; i < n; ++i) {
    const BodyState& b = s.bodies[i];
    const Vec3 w_body = rotation_from_quat(b.attitude) * b.omega;
    dx.segment<3>(13 * i) = b.velocity;
    dx.segment<4>(13 * i + 3) = quat_derivative(Vec4(x.segment<4>(13 * i + 3)), w_body);
    dx.segment<3>(13 * i + 7) = accel.segment<3>(3 * i);
    dx.segment<3>(13 * i + 10) = accel.segment<3>(3 * n + 3 * i);
  }
  return dx;
}

}  // namespace detail

struct StepResult {
  ChainState next;
  Evaluation start;  // evaluation at the initial state of the step
};

/// Shifts body positions by the smallest mass-weighted correction that
/// closes every joint gap; total mass-weighted position (the COM) is kept.
inline ChainState project_positions(const ChainSpec& spec, const ChainState& state) {
  const int n = spec.size();
  if (n < 2) return state;
  const ConstraintResiduals r = constraint_residuals(spec, state);
  std::vector<Vec3> cumulative(n, Vec3::Zero());
  for (int i = 1; i < n; ++i) cumulative[i] = cumulative[i - 1] + r.position_gap[i - 1];
  Vec3 weighted = Vec3::Zero();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    weighted += spec.bodies[i].mass * cumulative[i];
    total += spec.bodies[i].mass;
  }
  const Vec3 c = -weighted / total;
  ChainState out = state;
  for (int i = 0; i < n; ++i) out.bodies[i].position += c + cumulative[i];
  return out;
}

/// One step from `state`. Pulses active at the step midpoint are held.
inline StepResult step(const ChainSpec& spec, const ChainState& state, const SimulationInputs& inputs,
                       const IntegrationConfig& cfg) {
  const double dt = cfg.dt, t = state.time;
  const std::vector<Pulse> held = active_pulses(inputs.pulses, t + 0.5 * dt);
  StepResult out;
  out.start = evaluate(spec, state, inputs, held, dt, cfg.solve);
  const VectorXd x0 = detail::pack(state);

  VectorXd x1;
  if (cfg.method == Integrator::kRk4) {
    auto stage = [&](const VectorXd& x, double ts) {
      const ChainState s = detail::unpack(x, ts);
      return detail::rates(x, s, evaluate(spec, s, inputs, held, dt, cfg.solve).solve.accel);
    };
    const VectorXd k1 = detail::rates(x0, state, out.start.solve.accel);
    const VectorXd k2 = stage(x0 + 0.5 * dt * k1, t + 0.5 * dt);
    const VectorXd k3 = stage(x0 + 0.5 * dt * k2, t + 0.5 * dt);
    const VectorXd k4 = stage(x0 + dt * k3, t + dt);
    x1 = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  } else {
    // Symplectic Euler: velocities first, then configuration with the new
    // velocities (attitude through the exact exponential map).
    const int n = spec.size();
    const VectorXd& a = out.start.solve.accel;
    x1 = x0;
    for (int i = 0; i < n; ++i) {
      const Vec3 v = state.bodies[i].velocity + dt * a.segment<3>(3 * i);
      const Vec3 w = state.bodies[i].omega + dt * a.segment<3>(3 * n + 3 * i);
      x1.segment<3>(13 * i) += dt * v;
      x1.segment<4>(13 * i + 3) = rotate_inertial(state.bodies[i].attitude, dt * w).coeffs();
      x1.segment<3>(13 * i + 7) = v;
      x1.segment<3>(13 * i + 10) = w;
    }
  }

  out.next = detail::unpack(x1, t + dt);
  if (cfg.project_positions) out.next = project_positions(spec, out.next);
  return out;
}

// ---------------------------------------------------------------------------
// Trace

struct Momentum {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();  // about the inertial origin
};

inline Momentum momentum_totals(const ChainSpec& spec, const ChainState& state) {
  Momentum m;
  for (int i = 0; i < spec.size(); ++i) {
    const BodyState& b = state.bodies[i];
    const Vec3 p = spec.bodies[i].mass * b.velocity;
    m.linear += p;
    m.angular += b.position.cross(p) + inertia_to_inertial(spec.bodies[i].inertia, b.attitude) * b.omega;
  }
  return m;
}

/// Kinetic energy plus gravity potential (springs excluded).
inline double mechanical_energy(const ChainSpec& spec, const ChainState& state) {
  double e = 0.0;
  for (int i = 0; i < spec.size(); ++i) {
    const BodyState& b = state.bodies[i];
    const Mat3 inertia = inertia_to_inertial(spec.bodies[i].inertia, b.attitude);
    e += 0.5 * spec.bodies[i].mass * b.velocity.squaredNorm() + 0.5 * b.omega.dot(inertia * b.omega);
    e -= spec.bodies[i].mass * spec.gravity.dot(b.position);
  }
  return e;
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TraceRecord {
  double time = 0.0;
  ChainState state;
  VectorXd joint_forces;
  Momentum momentum;
  double energy = 0.0;
  double position_gap = 0.0;  // max over joints
  double velocity_gap = 0.0;
  double quat_norm_error = 0.0;
  bool disturbed = false;     // a pulse acts on the step that starts here
  bool moment_only = false;   // every acting pulse is a moment
  double condition_estimate = 1.0;

  // Closed-loop diagnostics (NaN in open loop).
  double s_norm = kNaN;
  double lyapunov_V = kNaN;
  double lyapunov_Vdot = kNaN;           // -s^T K_d s
  double lyapunov_Vdot_measured = kNaN;  // s^T M Ds + s^T (DM) s / 2 from the solve
  double constraint_s = kNaN;            // |J s|_inf
  double position_error = kNaN;          // pose: worst body; task: end effector [m]
  double attitude_error = kNaN;          // same, as a rotation angle [rad]
  double obstacle_distance = kNaN;       // min clearance of bodies 1 .. N-1
};

inline double rotation_angle_of_error(const Vec3& e) { return 2.0 * std::asin(std::min(1.0, e.norm())); }

inline double obstacle_clearance(const ChainState& s, const std::vector<Obstacle>& obstacles) {
  if (obstacles.empty() || s.size() < 2) return kNaN;
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i + 1 < s.size(); ++i) {
    for (const auto& o : obstacles) m = std::min(m, (s.bodies[i].position - o.center).norm() - o.radius);
  }
  return m;
}

inline TraceRecord make_record(const ChainSpec& spec, const ChainState& state, const Evaluation& e,
                               const std::vector<Pulse>& held, const SimulationInputs& inputs) {
  TraceRecord r;
  r.time = state.time;
  r.state = state;
  r.joint_forces = e.solve.joint_forces;
  r.momentum = momentum_totals(spec, state);
  r.energy = mechanical_energy(spec, state);
  const ConstraintResiduals res = constraint_residuals(spec, state);
  r.position_gap = res.max_position_gap();
  r.velocity_gap = res.max_velocity_gap();
  for (const auto& b : state.bodies) r.quat_norm_error = std::max(r.quat_norm_error, std::abs(b.attitude.coeffs().norm() - 1.0));
  r.disturbed = !held.empty();
  r.moment_only = r.disturbed && std::all_of(held.begin(), held.end(), [](const Pulse& p) { return p.kind == PulseKind::kMoment; });
  r.condition_estimate = e.solve.condition_estimate;

  if (!e.command) return r;
  const PortCommand& c = *e.command;
  const ControllerConfig& cfg = *inputs.controller;
  const VectorXd& s = c.sliding_surface;
  r.s_norm = s.lpNorm<Eigen::Infinity>();
  r.lyapunov_V = c.lyapunov_V;
  r.lyapunov_Vdot = c.lyapunov_Vdot;
  const VectorXd ds = e.solve.accel - c.reference_rate;
  r.lyapunov_Vdot_measured = s.dot(e.sys.mass * ds) + 0.5 * s.dot(mass_derivative(e.sys) * s);
  r.constraint_s = e.sys.jacobian.rows() ? (e.sys.jacobian * s).lpNorm<Eigen::Infinity>() : 0.0;
  const int n = spec.size();
  if (cfg.mode == ControlMode::kPose) {
    double pe = 0.0, ae = 0.0;
    for (int i = 0; i < n; ++i) {
      pe = std::max(pe, c.pose_error.segment<3>(3 * i).norm());
      ae = std::max(ae, rotation_angle_of_error(c.pose_error.segment<3>(3 * n + 3 * i)));
    }
    r.position_error = pe;
    r.attitude_error = ae;
  } else if (cfg.mode == ControlMode::kTaskSpace) {
    r.position_error = c.pose_error.head<3>().norm();
    r.attitude_error = rotation_angle_of_error(c.pose_error.tail<3>());
  }
  r.obstacle_distance = obstacle_clearance(state, cfg.obstacles);
  return r;
}

// ---------------------------------------------------------------------------
// Monitors

struct Monitor {
  std::string name;
  bool applicable = true;
  bool pass = true;
  double value = 0.0;
  double threshold = 0.0;
};

struct RunSummary {
  std::vector<Monitor> monitors;
  int steps = 0;
  double max_linear_momentum_deviation = 0.0;   // relative, quiet intervals
  double max_angular_momentum_deviation = 0.0;
  double max_position_gap = 0.0;
  double max_velocity_gap = 0.0;
  double max_quat_norm_error = 0.0;
  double max_joint_force_moment_pulse = 0.0;    // |F_J|_inf during moment-only pulses
  double max_joint_force_force_pulse = 0.0;
  double energy_relative_drift = 0.0;
  double max_lyapunov_increase = 0.0;
  double vdot_relative_mismatch = 0.0;
  double max_constraint_s = 0.0;
  double final_s_norm = kNaN;
  double final_position_error = kNaN;
  double final_attitude_error = kNaN;
  double min_obstacle_distance = kNaN;

  bool all_pass() const {
    return std::all_of(monitors.begin(), monitors.end(), [](const Monitor& m) { return !m.applicable || m.pass; });
  }
  const Monitor* find(const std::string& name) const {
    for (const auto& m : monitors) {
      if (m.name == name) return &m;
    }
    return nullptr;
  }
};

struct MonitorThresholds {
  double quat_norm = 1e-12;
  double position_gap = 1e-6;
  double position_gap_projected = 1e-12;
  double momentum = 1e-8;
  double lyapunov_slack = 1e-9;
  double vdot_match = 1e-6;
  double constraint_s = 1e-9;
  double tracking = 1e-3;
};

/// Streaming evaluation of the monitors; sees every record, decimated or not.
class MonitorAccumulator {
 public:
  MonitorAccumulator(const ChainSpec& spec, const SimulationInputs& inputs, const IntegrationConfig& cfg,
                     MonitorThresholds th = {})
      : th_(th), projected_(cfg.project_positions) {
    closed_loop_ = inputs.controller && inputs.controller->mode != ControlMode::kNone;
    mode_ = closed_loop_ ? inputs.controller->mode : ControlMode::kNone;
    constrained_ = closed_loop_ && inputs.controller->form == ReferenceForm::kConstrained;
    net_gravity_ = !inputs.gravity_compensation && spec.gravity.norm() > 0.0;
  }

  void add(const TraceRecord& r) {
    RunSummary& s = summary_;
    s.max_quat_norm_error = std::max(s.max_quat_norm_error, r.quat_norm_error);
    s.max_position_gap = std::max(s.max_position_gap, r.position_gap);
    s.max_velocity_gap = std::max(s.max_velocity_gap, r.velocity_gap);
    if (!r.joint_forces.allFinite()) finite_forces_ = false;
    const double fj = r.joint_forces.size() ? r.joint_forces.lpNorm<Eigen::Infinity>() : 0.0;
    if (r.moment_only) s.max_joint_force_moment_pulse = std::max(s.max_joint_force_moment_pulse, fj);
    if (r.disturbed && !r.moment_only) s.max_joint_force_force_pulse = std::max(s.max_joint_force_force_pulse, fj);

    if (!energy_ref_) energy_ref_ = r.energy;
    energy_scale_ = std::max(energy_scale_, std::abs(r.energy));
    max_energy_dev_ = std::max(max_energy_dev_, std::abs(r.energy - *energy_ref_));

    // Momentum over quiet stretches (open loop only).
    if (momentum_ref_) {
      const double dl = (r.momentum.linear - momentum_ref_->linear).norm() / std::max(momentum_ref_->linear.norm(), 1e-9);
      const double dh = (r.momentum.angular - momentum_ref_->angular).norm() / std::max(momentum_ref_->angular.norm(), 1e-9);
      s.max_linear_momentum_deviation = std::max(s.max_linear_momentum_deviation, dl);
      s.max_angular_momentum_deviation = std::max(s.max_angular_momentum_deviation, dh);
    }
    if (r.disturbed || closed_loop_) {
      momentum_ref_.reset();
    } else if (!momentum_ref_) {
      momentum_ref_ = r.momentum;
    }

    if (closed_loop_) {
      if (prev_ && !prev_->disturbed) {
        s.max_lyapunov_increase = std::max(s.max_lyapunov_increase, r.lyapunov_V - prev_->lyapunov_V);
      }
      if (!r.disturbed) {
        max_vdot_err_ = std::max(max_vdot_err_, std::abs(r.lyapunov_Vdot_measured - r.lyapunov_Vdot));
        max_vdot_ = std::max(max_vdot_, std::abs(r.lyapunov_Vdot));
      }
      s.max_constraint_s = std::max(s.max_constraint_s, r.constraint_s);
      s.final_s_norm = r.s_norm;
      s.final_position_error = r.position_error;
      s.final_attitude_error = r.attitude_error;
      if (!std::isnan(r.obstacle_distance)) {
        s.min_obstacle_distance = std::isnan(s.min_obstacle_distance) ? r.obstacle_distance
                                                                      : std::min(s.min_obstacle_distance, r.obstacle_distance);
      }
      prev_ = r;
    }
  }

  RunSummary finish(int steps) {
    RunSummary s = summary_;
    s.steps = steps;
    s.energy_relative_drift = max_energy_dev_ / std::max(energy_scale_, 1e-300);
    // Relative to the largest rate seen, with a 1e-9 W floor for runs that
    // start on the trajectory.
    s.vdot_relative_mismatch = max_vdot_err_ / std::max(max_vdot_, 1e-9);
    auto add = [&](std::string name, bool applicable, double value, double threshold) {
      s.monitors.push_back({std::move(name), applicable, value <= threshold, value, threshold});
    };
    add("quaternion_norm", true, s.max_quat_norm_error, th_.quat_norm);
    add("constraint_position_gap", true, s.max_position_gap,
        projected_ ? th_.position_gap_projected : th_.position_gap);
    s.monitors.push_back({"joint_forces_finite", true, finite_forces_, finite_forces_ ? 1.0 : 0.0, 1.0});
    const bool momentum_applicable = !closed_loop_ && !net_gravity_;
    add("linear_momentum", momentum_applicable, s.max_linear_momentum_deviation, th_.momentum);
    add("angular_momentum", momentum_applicable, s.max_angular_momentum_deviation, th_.momentum);
    add("lyapunov_nonincreasing", closed_loop_, s.max_lyapunov_increase, th_.lyapunov_slack);
    add("lyapunov_rate_match", closed_loop_ && mode_ != ControlMode::kTaskSpace, s.vdot_relative_mismatch,
        th_.vdot_match);
    // The J s = 0 invariant belongs to the velocity and pose laws.
    add("constraint_sliding_surface", closed_loop_ && constrained_ && mode_ != ControlMode::kTaskSpace,
        s.max_constraint_s, th_.constraint_s);
    if (mode_ == ControlMode::kVelocity) {
      add("final_velocity_error", true, s.final_s_norm, th_.tracking);
    } else if (mode_ == ControlMode::kPose || mode_ == ControlMode::kTaskSpace) {
      add("final_position_error", true, s.final_position_error, th_.tracking);
      add("final_attitude_error", true, s.final_attitude_error, th_.tracking);
    }
    return s;
  }

 private:
  MonitorThresholds th_;
  bool projected_ = false;
  bool closed_loop_ = false;
  bool constrained_ = false;
  bool net_gravity_ = false;
  ControlMode mode_ = ControlMode::kNone;
  RunSummary summary_;
  bool finite_forces_ = true;
  std::optional<Momentum> momentum_ref_;
  std::optional<double> energy_ref_;
  double energy_scale_ = 0.0;
  double max_energy_dev_ = 0.0;
  double max_vdot_err_ = 0.0;
  double max_vdot_ = 0.0;
  std::optional<TraceRecord> prev_;
};

// ---------------------------------------------------------------------------
// Runs

struct RunResult {
  std::vector<TraceRecord> trace;  // decimated
  RunSummary summary;
  ChainState final_state;
};

/// Checks the inputs and fills controller defaults (gains, the held
/// end-effector attitude, the derivative step).
inline SimulationInputs prepare_inputs(const ChainSpec& spec, const ChainState& initial, SimulationInputs inputs,
                                       const IntegrationConfig& cfg) {
  require_valid(spec);
  validate(cfg);
  validate(inputs.pulses, spec.size());
  if (initial.size() != spec.size()) throw Error(ErrorCode::kInvalidArgument, "initial state size does not match spec");
  if (inputs.controller && inputs.controller->mode != ControlMode::kNone) {
    ControllerConfig c = resolve_gains(*inputs.controller, spec.size());
    if (c.mode == ControlMode::kTaskSpace) {
      validate_path(c.ee_target.path);
      if (!c.ee_target.attitude) c.ee_target.attitude = initial.bodies.back().attitude;
      if (!(c.fd_step > 0.0)) c.fd_step = cfg.dt;
    }
    if ((c.mode == ControlMode::kVelocity || c.mode == ControlMode::kPose) && c.chain_target.reference.size() != spec.size()) {
      throw Error(ErrorCode::kInvalidArgument, "chain target has the wrong number of bodies");
    }
    inputs.controller = std::move(c);
  }
  return inputs;
}

inline RunResult simulate(const ChainSpec& spec, const ChainState& initial, const SimulationInputs& raw_inputs,
                          const IntegrationConfig& cfg, const MonitorThresholds& thresholds = {}) {
  const SimulationInputs inputs = prepare_inputs(spec, initial, raw_inputs, cfg);
  const long steps = std::lround(cfg.t_end / cfg.dt);
  RunResult out;
  MonitorAccumulator monitors(spec, inputs, cfg, thresholds);
  ChainState state = initial;
  for (long k = 0; k < steps; ++k) {
    const std::vector<Pulse> held = active_pulses(inputs.pulses, state.time + 0.5 * cfg.dt);
    StepResult r = step(spec, state, inputs, cfg);
    TraceRecord rec = make_record(spec, state, r.start, held, inputs);
    monitors.add(rec);
    if (k % cfg.decimation == 0) out.trace.push_back(std::move(rec));
    state = std::move(r.next);
    // Keep the clock exact on long runs.
    state.time = static_cast<double>(k + 1) * cfg.dt;
  }
  const std::vector<Pulse> held = active_pulses(inputs.pulses, state.time + 0.5 * cfg.dt);
  const Evaluation last = evaluate(spec, state, inputs, held, cfg.dt, cfg.solve);
  TraceRecord rec = make_record(spec, state, last, held, inputs);
  monitors.add(rec);
  out.trace.push_back(std::move(rec));
  out.summary = monitors.finish(static_cast<int>(steps));
  out.final_state = state;
  return out;
}

inline RunResult run_open_loop(const ChainSpec& spec, const ChainState& initial, const PulseSchedule& pulses,
                               const IntegrationConfig& cfg, bool gravity_compensation = false) {
  SimulationInputs in;
  in.pulses = pulses;
  in.gravity_compensation = gravity_compensation;
  return simulate(spec, initial, in, cfg);
}

inline RunResult run_closed_loop(const ChainSpec& spec, const ChainState& initial, const ControllerConfig& controller,
                                 const IntegrationConfig& cfg, const PulseSchedule& disturbances = {}) {
  SimulationInputs in;
  in.pulses = disturbances;
  in.controller = controller;
  return simulate(spec, initial, in, cfg);
}

}  // namespace nechain
