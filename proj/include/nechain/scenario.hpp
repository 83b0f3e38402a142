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

// Scenario files.
//
// A scenario is line-oriented text split into sections:
//
//   [bodies]       mass=1 inertia=0.05,0.1,0.1 repeat=5
//   [joints]       parent=0.5,0,0 child=-0.5,0,0 stiffness=2 damping=0 repeat=4
//   [gravity]      vector=0,0,-9.81 compensate=true
//   [initial]      position=.. attitude=w,x,y,z velocity=.. omega=..
//                  joint index=2 angles=phi,theta,psi rates=..
//   [control]      mode=none|velocity|pose|task form=constrained|literal
//                  kd=.. lambda=.. lambda_e=.. center=.. drift=.. spin=..
//                  attitude=.. cutoff=.. fd_step=..
//                  target position=.. attitude=..
//                  target_joint index=2 angles=..
//                  path kind=circle center=.. normal=.. start=.. radius=.. rate=..
//                  path kind=line start=.. velocity=..
//                  path kind=quintic start=.. end=.. duration=..
//                  path kind=waypoints   (followed by: waypoint t=.. p=..)
//                  obstacle center=.. radius=.. gain=..
//   [pulses]       body=2 kind=force|moment frame=inertial|body vector=.. start=.. stop=..
//   [integration]  dt=.. t_end=.. method=rk4|semi_implicit_euler project=false
//                  decimation=1 solver=auto|schur|dense condition_limit=1e12
//   [output]       dir=.. name=.. trace=true
//
// `#` starts a comment. Vectors are comma-separated without spaces. Body,
// joint and pulse indices are 1-based. Gains take one value (scaled
// identity), two (linear, angular), the diagonal, or the full matrix in
// row-major order. The chain target defaults to the initial configuration.

#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nechain/chain.hpp"
#include "nechain/control.hpp"
#include "nechain/errors.hpp"
#include "nechain/geom.hpp"
#include "nechain/simulation.hpp"
#include "nechain/trajectory.hpp"

namespace nechain {

/// Diagnostic anchored to a source line (0 when the whole file is at fault).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, int line, const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct GainInput {
  std::vector<double> values;  // empty: default gain

  bool operator==(const GainInput&) const = default;
};

struct InitialInput {
  Vec3 position = Vec3::Zero();
  Vec4 attitude = Vec4(1, 0, 0, 0);  // as written; normalized on use
  Vec3 velocity = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  std::vector<JointAngles> angles;   // N-1
  std::vector<Vec3> rates;           // N-1, child body frame

  bool operator==(const InitialInput&) const = default;
};

struct ControlInput {
  ControlMode mode = ControlMode::kNone;
  ReferenceForm form = ReferenceForm::kConstrained;
  GainInput kd, lambda, lambda_e;

  // Chain target (velocity and pose modes).
  std::optional<Vec3> target_position;
  std::optional<Vec4> target_attitude;
  std::map<int, JointAngles> target_joints;  // 0-based joint index
  Vec3 center = Vec3::Zero();
  Vec3 drift = Vec3::Zero();
  Vec3 spin = Vec3::Zero();

  // End-effector target (task mode).
  std::optional<EndEffectorPath> path;
  std::optional<Vec4> attitude;
  std::vector<Obstacle> obstacles;
  double cutoff = 1.0;
  double fd_step = 0.0;

  bool operator==(const ControlInput&) const = default;
};

struct OutputInput {
  std::string dir;
  std::string name;
  bool trace = true;

  bool operator==(const OutputInput&) const = default;
};

struct Scenario {
  ChainSpec spec;
  bool gravity_compensation = false;
  InitialInput initial;
  ControlInput control;
  PulseSchedule pulses;
  IntegrationConfig integration;
  OutputInput output;

  bool operator==(const Scenario&) const = default;
};

// ---------------------------------------------------------------------------
// Gains

/// Expands a gain list to a dim x dim matrix; a two-value list splits into
/// equal linear and angular halves.
inline MatrixXd expand_gain(const std::vector<double>& v, int dim) {
  const int k = static_cast<int>(v.size());
  if (k == 0) return MatrixXd();
  if (k == 1) return v[0] * MatrixXd::Identity(dim, dim);
  if (k == 2) {
    VectorXd d(dim);
    d << VectorXd::Constant(dim / 2, v[0]), VectorXd::Constant(dim - dim / 2, v[1]);
    return d.asDiagonal();
  }
  if (k == dim) return Eigen::Map<const VectorXd>(v.data(), dim).asDiagonal();
  if (k == dim * dim) return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), dim, dim);
  throw Error(ErrorCode::kInvalidArgument, "gain needs 1, 2, " + std::to_string(dim) + " or " +
                                               std::to_string(dim * dim) + " values, got " + std::to_string(k));
}

// ---------------------------------------------------------------------------
// Building runtime objects

inline ChainState build_state(const ChainSpec& spec, const Vec3& position, const Vec4& attitude,
                              const std::vector<JointAngles>& angles, const Vec3& velocity = Vec3::Zero(),
                              const Vec3& omega = Vec3::Zero(), const std::vector<Vec3>& rates = {}) {
  return assemble_consistent_state(spec, {position, UnitQuaternion(attitude)}, angles, {velocity, omega}, rates);
}

inline ChainState initial_state(const Scenario& s) {
  const InitialInput& i = s.initial;
  return build_state(s.spec, i.position, i.attitude, i.angles, i.velocity, i.omega, i.rates);
}

inline ControllerConfig controller_config(const Scenario& s) {
  const ControlInput& c = s.control;
  const int n = s.spec.size();
  ControllerConfig cfg;
  cfg.mode = c.mode;
  cfg.form = c.form;
  cfg.kd = expand_gain(c.kd.values, 6 * n);
  cfg.lambda = expand_gain(c.lambda.values, 6 * n);
  cfg.lambda_e = expand_gain(c.lambda_e.values, 6);
  cfg.obstacles = c.obstacles;
  cfg.cutoff = c.cutoff;
  cfg.fd_step = c.fd_step;

  std::vector<JointAngles> angles = s.initial.angles;
  for (const auto& [j, a] : c.target_joints) angles[j] = a;
  cfg.chain_target.reference = build_state(s.spec, c.target_position.value_or(s.initial.position),
                                           c.target_attitude.value_or(s.initial.attitude), angles);
  cfg.chain_target.center = c.center;
  cfg.chain_target.velocity = c.drift;
  cfg.chain_target.omega = c.spin;

  if (c.path) cfg.ee_target.path = *c.path;
  if (c.attitude) cfg.ee_target.attitude = UnitQuaternion(*c.attitude);
  return cfg;
}

inline SimulationInputs simulation_inputs(const Scenario& s) {
  SimulationInputs in;
  in.pulses = s.pulses;
  in.gravity_compensation = s.gravity_compensation;
  if (s.control.mode != ControlMode::kNone) in.controller = controller_config(s);
  return in;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class LineReader {
 public:
  LineReader(std::string source, int line) : source_(std::move(source)), line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(source_, line_, msg); }

  double number(std::string_view key, std::string_view text) const {
    std::string_view t = text;
    if (!t.empty() && t.front() == '+') t.remove_prefix(1);
    double v = 0.0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty()) {
      fail("'" + std::string(key) + "': '" + std::string(text) + "' is not a number");
    }
    return v;
  }

  std::vector<double> list(std::string_view key, std::string_view text) const {
    std::vector<double> out;
    std::size_t pos = 0;
    while (true) {
      const auto comma = text.find(',', pos);
      out.push_back(number(key, text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return out;
  }

  Vec3 vec3(std::string_view key, std::string_view text, bool allow_scalar = false) const {
    const auto v = list(key, text);
    if (allow_scalar && v.size() == 1) return Vec3::Constant(v[0]);
    if (v.size() != 3) fail("'" + std::string(key) + "' needs 3 comma-separated values");
    return {v[0], v[1], v[2]};
  }

  Vec4 quat(std::string_view key, std::string_view text) const {
    const auto v = list(key, text);
    if (v.size() != 4) fail("'" + std::string(key) + "' needs 4 values w,x,y,z");
    const Vec4 q(v[0], v[1], v[2], v[3]);
    if (!q.allFinite() || q.norm() < 1e-12) fail("'" + std::string(key) + "' is not a usable quaternion");
    return q;
  }

  bool boolean(std::string_view key, std::string_view text) const {
    if (text == "true" || text == "on" || text == "yes" || text == "1") return true;
    if (text == "false" || text == "off" || text == "no" || text == "0") return false;
    fail("'" + std::string(key) + "' expects true or false");
  }

  int integer(std::string_view key, std::string_view text) const {
    int v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size() || text.empty()) {
      fail("'" + std::string(key) + "' expects an integer");
    }
    return v;
  }

  int line() const { return line_; }

 private:
  std::string source_;
  int line_;
};

/// One logical record: optional leading tag plus key=value pairs.
struct Record {
  int line = 0;
  std::string tag;
  std::vector<std::pair<std::string, std::string>> pairs;
};

/// Consumes keys from a record and rejects leftovers.
class KeyTaker {
 public:
  KeyTaker(const Record& r, const LineReader& in) : in_(in) {
    for (const auto& [k, v] : r.pairs) {
      if (map_.count(k)) in.fail("duplicate key '" + k + "'");
      map_[k] = v;
    }
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    std::string v = it->second;
    map_.erase(it);
    return v;
  }

  std::string require(const std::string& key) {
    auto v = take(key);
    if (!v) in_.fail("missing key '" + key + "'");
    return *v;
  }

  void finish(const std::string& where) const {
    if (!map_.empty()) in_.fail("unknown key '" + map_.begin()->first + "' in " + where);
  }

 private:
  const LineReader& in_;
  std::map<std::string, std::string> map_;
};

}  // namespace detail

/// Parses a scenario; throws ParseError with the offending line. The chain
/// is validated and violations are reported at the line that declared the
/// body or joint.
inline Scenario parse_scenario(std::string_view text, const std::string& source = "<scenario>") {
  using detail::KeyTaker;
  using detail::LineReader;
  using detail::Record;

  static const std::vector<std::string> kSections = {"bodies", "joints", "gravity", "initial",
                                                   "control", "pulses", "integration", "output"};
  std::map<std::string, std::vector<Record>> sections;
  std::map<std::string, int> section_line;
  std::string current;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const LineReader in(source, line_no);
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view l = detail::trim(raw);
    if (l.empty()) continue;
    if (l.front() == '[') {
      if (l.back() != ']') in.fail("malformed section header");
      current = std::string(detail::trim(l.substr(1, l.size() - 2)));
      if (std::find(kSections.begin(), kSections.end(), current) == kSections.end()) {
        in.fail("unknown section [" + current + "]");
      }
      if (section_line.count(current)) in.fail("section [" + current + "] appears twice");
      section_line[current] = line_no;
      sections[current];
      continue;
    }
    if (current.empty()) in.fail("content before the first section header");
    Record rec;
    rec.line = line_no;
    std::istringstream words{std::string(l)};
    std::string word;
    bool first = true;
    while (words >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos) {
        if (!first) in.fail("expected key=value, got '" + word + "'");
        rec.tag = word;
      } else {
        if (eq == 0 || eq + 1 == word.size()) in.fail("malformed key=value '" + word + "'");
        rec.pairs.emplace_back(word.substr(0, eq), word.substr(eq + 1));
      }
      first = false;
    }
    sections[current].push_back(std::move(rec));
  }

  Scenario s;
  auto reader = [&](const Record& r) { return LineReader(source, r.line); };
  auto untagged = [&](const Record& r, const LineReader& in, const std::string& sec) {
    if (!r.tag.empty()) in.fail("unexpected '" + r.tag + "' in [" + sec + "]");
  };

  // [bodies]
  std::vector<int> body_lines;
  for (const Record& r : sections["bodies"]) {
    const LineReader in = reader(r);
    untagged(r, in, "bodies");
    KeyTaker k(r, in);
    BodySpec b;
    b.mass = in.number("mass", k.require("mass"));
    const auto iv = in.list("inertia", k.require("inertia"));
    if (iv.size() == 1) {
      b.inertia = iv[0] * Mat3::Identity();
    } else if (iv.size() == 3) {
      b.inertia = Vec3(iv[0], iv[1], iv[2]).asDiagonal();
    } else if (iv.size() == 6) {
      b.inertia << iv[0], iv[3], iv[4], iv[3], iv[1], iv[5], iv[4], iv[5], iv[2];
    } else if (iv.size() == 9) {
      b.inertia = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(iv.data());
    } else {
      in.fail("'inertia' needs 1, 3 (diagonal), 6 (xx,yy,zz,xy,xz,yz) or 9 values");
    }
    int repeat = 1;
    if (const auto v = k.take("repeat")) repeat = in.integer("repeat", *v);
    if (repeat < 1) in.fail("'repeat' must be at least 1");
    k.finish("[bodies]");
    for (int i = 0; i < repeat; ++i) {
      s.spec.bodies.push_back(b);
      body_lines.push_back(r.line);
    }
  }
  if (s.spec.bodies.empty()) {
    throw ParseError(source, section_line.count("bodies") ? section_line["bodies"] : 0, "EmptyChain: no bodies declared");
  }
  const int n = s.spec.size();

  // [joints]
  std::vector<int> joint_lines;
  for (const Record& r : sections["joints"]) {
    const LineReader in = reader(r);
    untagged(r, in, "joints");
    KeyTaker k(r, in);
    JointSpec j;
    j.attach_parent = in.vec3("parent", k.require("parent"));
    j.attach_child = in.vec3("child", k.require("child"));
    if (const auto v = k.take("stiffness")) j.stiffness = in.vec3("stiffness", *v, true);
    if (const auto v = k.take("damping")) j.damping = in.vec3("damping", *v, true);
    int repeat = 1;
    if (const auto v = k.take("repeat")) repeat = in.integer("repeat", *v);
    if (repeat < 1) in.fail("'repeat' must be at least 1");
    k.finish("[joints]");
    for (int i = 0; i < repeat; ++i) {
      s.spec.joints.push_back(j);
      joint_lines.push_back(r.line);
    }
  }

  // [gravity]
  for (const Record& r : sections["gravity"]) {
    const LineReader in = reader(r);
    untagged(r, in, "gravity");
    KeyTaker k(r, in);
    if (const auto v = k.take("vector")) s.spec.gravity = in.vec3("vector", *v);
    if (const auto v = k.take("compensate")) s.gravity_compensation = in.boolean("compensate", *v);
    k.finish("[gravity]");
  }

  // Chain validation, anchored to the declaring lines.
  for (const Violation& v : validate_spec(s.spec)) {
    int line = 0;
    const bool joint_kind = v.kind == ViolationKind::kNegativeStiffness || v.kind == ViolationKind::kNegativeDamping ||
                            (v.kind == ViolationKind::kNonFiniteValue && v.message.rfind("joint", 0) == 0);
    if (v.index >= 0 && joint_kind && v.index < static_cast<int>(joint_lines.size())) {
      line = joint_lines[v.index];
    } else if (v.index >= 0 && v.index < static_cast<int>(body_lines.size())) {
      line = body_lines[v.index];
    } else if (section_line.count("joints")) {
      line = section_line["joints"];
    }
    throw ParseError(source, line, to_string(v.kind) + ": " + v.message);
  }

  auto joint_index = [&](const LineReader& in, KeyTaker& k) {
    const int j = in.integer("index", k.require("index"));
    if (j < 1 || j > n - 1) in.fail("joint index " + std::to_string(j) + " out of range 1.." + std::to_string(n - 1));
    return j - 1;
  };
  auto angles_of = [](const Vec3& v) { return JointAngles{v[0], v[1], v[2]}; };

  // [initial]
  s.initial.angles.assign(n - 1, JointAngles{});
  s.initial.rates.assign(n - 1, Vec3::Zero());
  for (const Record& r : sections["initial"]) {
    const LineReader in = reader(r);
    KeyTaker k(r, in);
    if (r.tag == "joint") {
      const int j = joint_index(in, k);
      if (const auto v = k.take("angles")) s.initial.angles[j] = angles_of(in.vec3("angles", *v));
      if (const auto v = k.take("rates")) s.initial.rates[j] = in.vec3("rates", *v);
      k.finish("[initial] joint");
      continue;
    }
    untagged(r, in, "initial");
    if (const auto v = k.take("position")) s.initial.position = in.vec3("position", *v);
    if (const auto v = k.take("attitude")) s.initial.attitude = in.quat("attitude", *v);
    if (const auto v = k.take("velocity")) s.initial.velocity = in.vec3("velocity", *v);
    if (const auto v = k.take("omega")) s.initial.omega = in.vec3("omega", *v);
    k.finish("[initial]");
  }

  // [control]
  ControlInput& c = s.control;
  bool expect_waypoints = false;
  auto gain = [&](const LineReader& in, const std::string& key, const std::string& text, int dim) {
    GainInput g{in.list(key, text)};
    try {
      MatrixXd m = expand_gain(g.values, dim);
      require_spd(m, dim, key);
    } catch (const Error& e) {
      in.fail(e.what());
    }
    return g;
  };
  for (const Record& r : sections["control"]) {
    const LineReader in = reader(r);
    KeyTaker k(r, in);
    if (r.tag == "target") {
      if (const auto v = k.take("position")) c.target_position = in.vec3("position", *v);
      if (const auto v = k.take("attitude")) c.target_attitude = in.quat("attitude", *v);
      k.finish("[control] target");
    } else if (r.tag == "target_joint") {
      const int j = joint_index(in, k);
      c.target_joints[j] = angles_of(in.vec3("angles", k.require("angles")));
      k.finish("[control] target_joint");
    } else if (r.tag == "path") {
      if (c.path) in.fail("only one path may be given");
      const std::string kind = k.require("kind");
      if (kind == "circle") {
        CirclePath p;
        p.center = in.vec3("center", k.require("center"));
        if (const auto v = k.take("normal")) p.normal = in.vec3("normal", *v);
        if (const auto v = k.take("start")) p.start_direction = in.vec3("start", *v);
        p.radius = in.number("radius", k.require("radius"));
        p.rate = in.number("rate", k.require("rate"));
        c.path = p;
      } else if (kind == "line") {
        LinePath p;
        p.start = in.vec3("start", k.require("start"));
        if (const auto v = k.take("velocity")) p.velocity = in.vec3("velocity", *v);
        c.path = p;
      } else if (kind == "quintic") {
        QuinticPath p;
        p.start = in.vec3("start", k.require("start"));
        p.end = in.vec3("end", k.require("end"));
        p.duration = in.number("duration", k.require("duration"));
        c.path = p;
      } else if (kind == "waypoints") {
        c.path = WaypointPath{};
        expect_waypoints = true;
      } else {
        in.fail("unknown path kind '" + kind + "'");
      }
      k.finish("[control] path");
      try {
        if (kind != "waypoints") validate_path(*c.path);
      } catch (const Error& e) {
        in.fail(e.what());
      }
    } else if (r.tag == "waypoint") {
      if (!expect_waypoints) in.fail("waypoint without a preceding 'path kind=waypoints'");
      auto& w = std::get<WaypointPath>(*c.path);
      const double t = in.number("t", k.require("t"));
      if (!w.times.empty() && !(t > w.times.back())) in.fail("waypoint times must increase");
      w.times.push_back(t);
      w.points.push_back(in.vec3("p", k.require("p")));
      k.finish("[control] waypoint");
    } else if (r.tag == "obstacle") {
      Obstacle o;
      o.center = in.vec3("center", k.require("center"));
      o.radius = in.number("radius", k.require("radius"));
      if (const auto v = k.take("gain")) o.gain = in.number("gain", *v);
      if (!(o.radius >= 0.0) || !(o.gain >= 0.0)) in.fail("obstacle radius and gain must be non-negative");
      k.finish("[control] obstacle");
      c.obstacles.push_back(o);
    } else {
      untagged(r, in, "control");
      if (const auto v = k.take("mode")) {
        if (*v == "none") c.mode = ControlMode::kNone;
        else if (*v == "velocity") c.mode = ControlMode::kVelocity;
        else if (*v == "pose") c.mode = ControlMode::kPose;
        else if (*v == "task") c.mode = ControlMode::kTaskSpace;
        else in.fail("unknown mode '" + *v + "' (none, velocity, pose, task)");
      }
      if (const auto v = k.take("form")) {
        if (*v == "constrained") c.form = ReferenceForm::kConstrained;
        else if (*v == "literal") c.form = ReferenceForm::kLiteral;
        else in.fail("unknown form '" + *v + "' (constrained, literal)");
      }
      if (const auto v = k.take("kd")) c.kd = gain(in, "kd", *v, 6 * n);
      if (const auto v = k.take("lambda")) c.lambda = gain(in, "lambda", *v, 6 * n);
      if (const auto v = k.take("lambda_e")) c.lambda_e = gain(in, "lambda_e", *v, 6);
      if (const auto v = k.take("center")) c.center = in.vec3("center", *v);
      if (const auto v = k.take("drift")) c.drift = in.vec3("drift", *v);
      if (const auto v = k.take("spin")) c.spin = in.vec3("spin", *v);
      if (const auto v = k.take("attitude")) c.attitude = in.quat("attitude", *v);
      if (const auto v = k.take("cutoff")) {
        c.cutoff = in.number("cutoff", *v);
        if (!(c.cutoff > 0.0)) in.fail("'cutoff' must be positive");
      }
      if (const auto v = k.take("fd_step")) {
        c.fd_step = in.number("fd_step", *v);
        if (!(c.fd_step >= 0.0)) in.fail("'fd_step' must be non-negative");
      }
      k.finish("[control]");
    }
  }
  if (expect_waypoints) {
    const int line = section_line["control"];
    try {
      validate_path(*c.path);
    } catch (const Error& e) {
      throw ParseError(source, line, e.what());
    }
  }
  if (c.mode == ControlMode::kTaskSpace && !c.path) {
    throw ParseError(source, section_line["control"], "task mode needs a path");
  }

  // [pulses]
  for (const Record& r : sections["pulses"]) {
    const LineReader in = reader(r);
    untagged(r, in, "pulses");
    KeyTaker k(r, in);
    Pulse p;
    const int b = in.integer("body", k.require("body"));
    if (b < 1 || b > n) in.fail("pulse body " + std::to_string(b) + " out of range 1.." + std::to_string(n));
    p.body = b - 1;
    const std::string kind = k.require("kind");
    if (kind == "force") p.kind = PulseKind::kForce;
    else if (kind == "moment") p.kind = PulseKind::kMoment;
    else in.fail("unknown pulse kind '" + kind + "' (force, moment)");
    if (const auto v = k.take("frame")) {
      if (*v == "inertial") p.frame = PulseFrame::kInertial;
      else if (*v == "body") p.frame = PulseFrame::kBody;
      else in.fail("unknown pulse frame '" + *v + "' (inertial, body)");
    }
    p.vector = in.vec3("vector", k.require("vector"));
    p.t_start = in.number("start", k.require("start"));
    p.t_stop = in.number("stop", k.require("stop"));
    if (!(p.t_start < p.t_stop)) in.fail("pulse start must precede stop");
    k.finish("[pulses]");
    s.pulses.push_back(p);
  }

  // [integration]
  IntegrationConfig& ic = s.integration;
  for (const Record& r : sections["integration"]) {
    const LineReader in = reader(r);
    untagged(r, in, "integration");
    KeyTaker k(r, in);
    if (const auto v = k.take("dt")) ic.dt = in.number("dt", *v);
    if (const auto v = k.take("t_end")) ic.t_end = in.number("t_end", *v);
    if (const auto v = k.take("method")) {
      if (*v == "rk4") ic.method = Integrator::kRk4;
      else if (*v == "semi_implicit_euler") ic.method = Integrator::kSemiImplicitEuler;
      else in.fail("unknown method '" + *v + "' (rk4, semi_implicit_euler)");
    }
    if (const auto v = k.take("project")) ic.project_positions = in.boolean("project", *v);
    if (const auto v = k.take("decimation")) ic.decimation = in.integer("decimation", *v);
    if (const auto v = k.take("solver")) {
      if (*v == "auto") ic.solve.path = SolvePath::kAuto;
      else if (*v == "schur") ic.solve.path = SolvePath::kSchur;
      else if (*v == "dense") ic.solve.path = SolvePath::kDense;
      else in.fail("unknown solver '" + *v + "' (auto, schur, dense)");
    }
    if (const auto v = k.take("condition_limit")) ic.solve.condition_limit = in.number("condition_limit", *v);
    k.finish("[integration]");
    try {
      validate(ic);
    } catch (const Error& e) {
      in.fail(e.what());
    }
  }

  // [output]
  for (const Record& r : sections["output"]) {
    const LineReader in = reader(r);
    untagged(r, in, "output");
    KeyTaker k(r, in);
    if (const auto v = k.take("dir")) s.output.dir = *v;
    if (const auto v = k.take("name")) s.output.name = *v;
    if (const auto v = k.take("trace")) s.output.trace = in.boolean("trace", *v);
    k.finish("[output]");
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError(path, 0, "cannot open file");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_scenario(buf.str(), path);
}

// ---------------------------------------------------------------------------
// Writing

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename Derived>
std::string nums(const Eigen::MatrixBase<Derived>& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += num(v(i));
  }
  return out;
}

inline std::string nums(const std::vector<double>& v) {
  return nums(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

inline std::string angles(const JointAngles& a) { return nums(Vec3(a.phi, a.theta, a.psi)); }

inline std::string inertia(const Mat3& m) {
  if (m.isDiagonal(0.0)) return nums(m.diagonal());
  if (m == m.transpose()) return nums(Eigen::Matrix<double, 6, 1>(m(0, 0), m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2)));
  const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> r = m;
  return nums(Eigen::Map<const Eigen::Matrix<double, 9, 1>>(r.data()));
}

}  // namespace detail

/// Canonical text; parse_scenario(write_scenario(s)) == s.
inline std::string write_scenario(const Scenario& s) {
  using detail::num;
  using detail::nums;
  std::ostringstream o;
  o << "[bodies]\n";
  for (const auto& b : s.spec.bodies) o << "mass=" << num(b.mass) << " inertia=" << detail::inertia(b.inertia) << "\n";
  if (!s.spec.joints.empty()) {
    o << "\n[joints]\n";
    for (const auto& j : s.spec.joints) {
      o << "parent=" << nums(j.attach_parent) << " child=" << nums(j.attach_child) << " stiffness=" << nums(j.stiffness)
        << " damping=" << nums(j.damping) << "\n";
    }
  }
  o << "\n[gravity]\nvector=" << nums(s.spec.gravity) << " compensate=" << (s.gravity_compensation ? "true" : "false") << "\n";

  const InitialInput& i = s.initial;
  o << "\n[initial]\nposition=" << nums(i.position) << " attitude=" << nums(i.attitude) << " velocity=" << nums(i.velocity)
    << " omega=" << nums(i.omega) << "\n";
  for (std::size_t j = 0; j < i.angles.size(); ++j) {
    o << "joint index=" << j + 1 << " angles=" << detail::angles(i.angles[j]) << " rates=" << nums(i.rates[j]) << "\n";
  }

  const ControlInput& c = s.control;
  static const char* kModes[] = {"none", "velocity", "pose", "task"};
  o << "\n[control]\nmode=" << kModes[static_cast<int>(c.mode)]
    << " form=" << (c.form == ReferenceForm::kConstrained ? "constrained" : "literal") << "\n";
  if (!c.kd.values.empty()) o << "kd=" << nums(c.kd.values) << "\n";
  if (!c.lambda.values.empty()) o << "lambda=" << nums(c.lambda.values) << "\n";
  if (!c.lambda_e.values.empty()) o << "lambda_e=" << nums(c.lambda_e.values) << "\n";
  o << "center=" << nums(c.center) << " drift=" << nums(c.drift) << " spin=" << nums(c.spin) << "\n";
  o << "cutoff=" << num(c.cutoff) << " fd_step=" << num(c.fd_step) << "\n";
  if (c.attitude) o << "attitude=" << nums(*c.attitude) << "\n";
  if (c.target_position || c.target_attitude) {
    o << "target";
    if (c.target_position) o << " position=" << nums(*c.target_position);
    if (c.target_attitude) o << " attitude=" << nums(*c.target_attitude);
    o << "\n";
  }
  for (const auto& [j, a] : c.target_joints) o << "target_joint index=" << j + 1 << " angles=" << detail::angles(a) << "\n";
  if (c.path) {
    if (const auto* p = std::get_if<CirclePath>(&*c.path)) {
      o << "path kind=circle center=" << nums(p->center) << " normal=" << nums(p->normal)
        << " start=" << nums(p->start_direction) << " radius=" << num(p->radius) << " rate=" << num(p->rate) << "\n";
    } else if (const auto* p = std::get_if<LinePath>(&*c.path)) {
      o << "path kind=line start=" << nums(p->start) << " velocity=" << nums(p->velocity) << "\n";
    } else if (const auto* p = std::get_if<QuinticPath>(&*c.path)) {
      o << "path kind=quintic start=" << nums(p->start) << " end=" << nums(p->end) << " duration=" << num(p->duration)
        << "\n";
    } else if (const auto* p = std::get_if<WaypointPath>(&*c.path)) {
      o << "path kind=waypoints\n";
      for (std::size_t k = 0; k < p->times.size(); ++k) {
        o << "waypoint t=" << num(p->times[k]) << " p=" << nums(p->points[k]) << "\n";
      }
    }
  }
  for (const auto& ob : c.obstacles) {
    o << "obstacle center=" << nums(ob.center) << " radius=" << num(ob.radius) << " gain=" << num(ob.gain) << "\n";
  }

  if (!s.pulses.empty()) {
    o << "\n[pulses]\n";
    for (const auto& p : s.pulses) {
      o << "body=" << p.body + 1 << " kind=" << (p.kind == PulseKind::kForce ? "force" : "moment")
        << " frame=" << (p.frame == PulseFrame::kInertial ? "inertial" : "body") << " vector=" << nums(p.vector)
        << " start=" << num(p.t_start) << " stop=" << num(p.t_stop) << "\n";
    }
  }

  const IntegrationConfig& ic = s.integration;
  static const char* kSolvers[] = {"auto", "schur", "dense"};
  o << "\n[integration]\ndt=" << num(ic.dt) << " t_end=" << num(ic.t_end)
    << " method=" << (ic.method == Integrator::kRk4 ? "rk4" : "semi_implicit_euler")
    << " project=" << (ic.project_positions ? "true" : "false") << " decimation=" << ic.decimation
    << " solver=" << kSolvers[static_cast<int>(ic.solve.path)] << " condition_limit=" << num(ic.solve.condition_limit)
    << "\n";

  o << "\n[output]\n";
  if (!s.output.dir.empty()) o << "dir=" << s.output.dir << " ";
  if (!s.output.name.empty()) o << "name=" << s.output.name << " ";
  o << "trace=" << (s.output.trace ? "true" : "false") << "\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Frame rotation

/// Re-expresses every inertial-frame input in a frame turned by `rot`
/// (positions p -> R p, attitudes q -> rot * q). Body-frame quantities
/// (inertias, attachments, joint angles and rates, body-frame pulses) are
/// unchanged. Gains that are not isotropic per block are rotated as full
/// matrices.
inline Scenario rotate_scenario(const Scenario& in, const UnitQuaternion& rot) {
  Scenario s = in;
  const Mat3 r = rotation_from_quat(rot).transpose();
  auto rq = [&](const Vec4& q) { return quat_multiply(rot, UnitQuaternion(q)).coeffs(); };
  const int n = s.spec.size();

  s.spec.gravity = r * s.spec.gravity;
  s.initial.position = r * s.initial.position;
  s.initial.attitude = rq(s.initial.attitude);
  s.initial.velocity = r * s.initial.velocity;
  s.initial.omega = r * s.initial.omega;

  ControlInput& c = s.control;
  c.target_position = r * c.target_position.value_or(in.initial.position);
  c.target_attitude = rq(c.target_attitude.value_or(in.initial.attitude));
  c.center = r * c.center;
  c.drift = r * c.drift;
  c.spin = r * c.spin;
  if (c.attitude) c.attitude = rq(*c.attitude);
  if (c.path) {
    std::visit(
        [&](auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, CirclePath>) {
            p.center = r * p.center;
            p.normal = r * p.normal;
            p.start_direction = r * p.start_direction;
          } else if constexpr (std::is_same_v<T, LinePath>) {
            p.start = r * p.start;
            p.velocity = r * p.velocity;
          } else if constexpr (std::is_same_v<T, QuinticPath>) {
            p.start = r * p.start;
            p.end = r * p.end;
          } else {
            for (auto& pt : p.points) pt = r * pt;
          }
        },
        *c.path);
  }
  for (auto& o : c.obstacles) o.center = r * o.center;
  for (auto& p : s.pulses) {
    if (p.frame == PulseFrame::kInertial) p.vector = r * p.vector;
  }

  auto rotate_gain = [&](GainInput& g, int blocks) {
    if (g.values.size() <= 2) return;
    const int dim = 3 * blocks;
    MatrixXd rb = MatrixXd::Zero(dim, dim);
    for (int b = 0; b < blocks; ++b) rb.block<3, 3>(3 * b, 3 * b) = r;
    const MatrixXd m = rb * expand_gain(g.values, dim) * rb.transpose();
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    g.values.assign(rm.data(), rm.data() + rm.size());
  };
  rotate_gain(c.kd, 2 * n);
  rotate_gain(c.lambda, 2 * n);
  rotate_gain(c.lambda_e, 2);
  return s;
}

}  // namespace nechain
