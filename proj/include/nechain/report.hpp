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

// Machine-readable run output: the trace CSV and the run report.
//
// Both files start with a comment line carrying the config hash, the FNV-1a
// digest of the canonical scenario text, so every output can be traced back
// to the exact inputs that produced it.

#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nechain/scenario.hpp"
#include "nechain/simulation.hpp"

namespace nechain {

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const Scenario& s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(write_scenario(s))));
  return buf;
}

// ---------------------------------------------------------------------------
// Trace CSV

/// Column names in output order.
inline std::vector<std::string> trace_columns(int bodies) {
  std::vector<std::string> c = {"time"};
  for (int i = 1; i <= bodies; ++i) {
    const std::string b = "b" + std::to_string(i) + "_";
    for (const char* f : {"px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"}) c.push_back(b + f);
  }
  for (int j = 1; j < bodies; ++j) {
    const std::string p = "fj" + std::to_string(j) + "_";
    for (const char* f : {"x", "y", "z"}) c.push_back(p + f);
  }
  for (const char* m : {"position_gap", "velocity_gap", "quat_norm_error", "linear_momentum_x", "linear_momentum_y",
                        "linear_momentum_z", "angular_momentum_x", "angular_momentum_y", "angular_momentum_z",
                        "energy", "condition_estimate", "disturbed", "s_norm", "lyapunov_V", "lyapunov_Vdot",
                        "lyapunov_Vdot_measured", "constraint_s", "position_error", "attitude_error",
                        "obstacle_distance"}) {
    c.push_back(m);
  }
  return c;
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace, int bodies,
                            const std::string& hash) {
  using detail::num;
  out << "# nechain trace config_hash=" << hash << "\n";
  const auto cols = trace_columns(bodies);
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << "\n";
  for (const TraceRecord& r : trace) {
    std::string line = num(r.time);
    auto add = [&line](double v) {
      line += ',';
      line += num(v);
    };
    for (const BodyState& b : r.state.bodies) {
      for (int a = 0; a < 3; ++a) add(b.position[a]);
      for (int a = 0; a < 4; ++a) add(b.attitude.coeffs()[a]);
      for (int a = 0; a < 3; ++a) add(b.velocity[a]);
      for (int a = 0; a < 3; ++a) add(b.omega[a]);
    }
    for (Eigen::Index k = 0; k < r.joint_forces.size(); ++k) add(r.joint_forces[k]);
    for (double v : {r.position_gap, r.velocity_gap, r.quat_norm_error}) add(v);
    for (int a = 0; a < 3; ++a) add(r.momentum.linear[a]);
    for (int a = 0; a < 3; ++a) add(r.momentum.angular[a]);
    for (double v : {r.energy, r.condition_estimate, r.disturbed ? 1.0 : 0.0, r.s_norm, r.lyapunov_V, r.lyapunov_Vdot,
                     r.lyapunov_Vdot_measured, r.constraint_s, r.position_error, r.attitude_error,
                     r.obstacle_distance}) {
      add(v);
    }
    out << line << "\n";
  }
}

// ---------------------------------------------------------------------------
// Run report

struct RunReport {
  std::string name;
  std::string config_hash;
  RunSummary summary;
  double wall_seconds = 0.0;
};

inline bool report_passed(const RunReport& r) { return r.summary.all_pass(); }

/// `key = value` lines followed by one line per monitor.
inline std::string format_report(const RunReport& r) {
  using detail::num;
  const RunSummary& s = r.summary;
  std::ostringstream o;
  o << "# nechain run report config_hash=" << r.config_hash << "\n";
  o << "scenario = " << r.name << "\n";
  o << "config_hash = " << r.config_hash << "\n";
  o << "result = " << (s.all_pass() ? "PASS" : "FAIL") << "\n";
  o << "steps = " << s.steps << "\n";
  o << "wall_clock_s = " << num(r.wall_seconds) << "\n";
  auto kv = [&o](const char* k, double v) { o << k << " = " << num(v) << "\n"; };
  kv("max_linear_momentum_deviation", s.max_linear_momentum_deviation);
  kv("max_angular_momentum_deviation", s.max_angular_momentum_deviation);
  kv("max_position_gap", s.max_position_gap);
  kv("max_velocity_gap", s.max_velocity_gap);
  kv("max_quat_norm_error", s.max_quat_norm_error);
  kv("max_joint_force_moment_pulse", s.max_joint_force_moment_pulse);
  kv("max_joint_force_force_pulse", s.max_joint_force_force_pulse);
  kv("energy_relative_drift", s.energy_relative_drift);
  kv("max_lyapunov_increase", s.max_lyapunov_increase);
  kv("vdot_relative_mismatch", s.vdot_relative_mismatch);
  kv("max_constraint_s", s.max_constraint_s);
  kv("final_s_norm", s.final_s_norm);
  kv("final_position_error", s.final_position_error);
  kv("final_attitude_error", s.final_attitude_error);
  kv("min_obstacle_distance", s.min_obstacle_distance);
  for (const Monitor& m : s.monitors) {
    o << "monitor " << m.name << " " << (!m.applicable ? "n/a" : (m.pass ? "PASS" : "FAIL")) << " value=" << num(m.value)
      << " threshold=" << num(m.threshold) << "\n";
  }
  return o.str();
}

}  // namespace nechain
