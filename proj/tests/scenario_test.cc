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

#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "nechain/report.hpp"
#include "nechain/scenario.hpp"
#include "nechain/sweep.hpp"

namespace nechain {
namespace {

const char* kShipped[] = {"validate_5body.scn",  "track_endeffector.scn", "avoid_obstacle.scn",
                          "torque_free_spin.scn", "pose_tracking.scn",     "velocity_spin.scn"};

std::string path_of(const std::string& name) { return std::string(NECHAIN_SCENARIO_DIR) + "/" + name; }

const char* kTwoBody = R"(# two rods
[bodies]
mass=2 inertia=0.1,0.2,0.2 repeat=2
[joints]
parent=0.5,0,0 child=-0.5,0,0 stiffness=1
[initial]
velocity=0.1,0,0
joint index=1 angles=0,0,0.2
[integration]
dt=1e-3 t_end=0.05
)";

int error_line(const std::string& text) {
  try {
    parse_scenario(text, "t.scn");
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

std::string error_text(const std::string& text) {
  try {
    parse_scenario(text, "t.scn");
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(Scenario, ParsesMinimalFile) {
  const Scenario s = parse_scenario(kTwoBody);
  ASSERT_EQ(s.spec.size(), 2);
  EXPECT_EQ(s.spec.bodies[1].mass, 2.0);
  EXPECT_EQ(s.spec.joints[0].stiffness, Vec3(1, 1, 1));
  EXPECT_EQ(s.initial.angles[0].psi, 0.2);
  EXPECT_EQ(s.integration.dt, 1e-3);
  EXPECT_EQ(s.control.mode, ControlMode::kNone);
}

TEST(Scenario, ShippedFilesRoundTrip) {
  for (const char* name : kShipped) {
    SCOPED_TRACE(name);
    const Scenario s = load_scenario(path_of(name));
    const std::string text = write_scenario(s);
    const Scenario back = parse_scenario(text);
    EXPECT_EQ(back, s);
    EXPECT_EQ(write_scenario(back), text);
  }
}

TEST(Scenario, RepeatExpandsBodies) {
  const Scenario s = load_scenario(path_of("validate_5body.scn"));
  EXPECT_EQ(s.spec.size(), 5);
  EXPECT_EQ(s.spec.joints.size(), 4u);
  EXPECT_EQ(s.pulses[0].body, 0);  // 1-based in the file
}

TEST(Scenario, NonPositiveMassNamesTheBodyLine) {
  const std::string text = "[bodies]\nmass=1 inertia=1\nmass=-1 inertia=1\n[joints]\nparent=1,0,0 child=-1,0,0\n";
  EXPECT_EQ(error_line(text), 3);
  EXPECT_NE(error_text(text).find("NonPositiveMass"), std::string::npos);
}

TEST(Scenario, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("[bodies]\nmass=1 inertia=1\n[nonsense]\n"), 3);
  EXPECT_EQ(error_line("[bodies]\nmass=1 inertia=1 colour=red\n"), 2);
  EXPECT_EQ(error_line("mass=1\n"), 1);
  EXPECT_EQ(error_line("[bodies]\nmass=1 inertia=1,2\n"), 2);
  EXPECT_EQ(error_line("[bodies]\nmass=abc inertia=1\n"), 2);
  EXPECT_EQ(error_line(std::string(kTwoBody) + "[pulses]\nbody=3 kind=force vector=1,0,0 start=0 stop=1\n"), 12);
  EXPECT_EQ(error_line(std::string(kTwoBody) + "[pulses]\nbody=1 kind=force vector=1,0,0 start=1 stop=1\n"), 12);
  EXPECT_GT(error_line("[gravity]\nvector=0,0,-9.81\n"), -1);  // no bodies
}

TEST(Scenario, TaskModeNeedsPath) {
  EXPECT_NE(error_text(std::string(kTwoBody) + "[control]\nmode=task\n").find("needs a path"), std::string::npos);
}

TEST(Scenario, MissingFile) { EXPECT_THROW(load_scenario("/nonexistent/x.scn"), ParseError); }

TEST(ExpandGain, AllForms) {
  EXPECT_EQ(expand_gain({}, 6).size(), 0);
  EXPECT_EQ(expand_gain({3}, 6), 3.0 * MatrixXd::Identity(6, 6));
  const MatrixXd two = expand_gain({1, 2}, 6);
  EXPECT_EQ(two.diagonal(), (VectorXd(6) << 1, 1, 1, 2, 2, 2).finished());
  const MatrixXd diag = expand_gain({1, 2, 3, 4, 5, 6}, 6);
  EXPECT_EQ(diag(4, 4), 5.0);
  std::vector<double> full(36, 0.0);
  full[1] = 7.0;
  EXPECT_EQ(expand_gain(full, 6)(0, 1), 7.0);
  EXPECT_THROW(expand_gain({1, 2, 3}, 6), Error);
}

TEST(Scenario, TargetJointsOverrideInitialAngles) {
  const Scenario s = load_scenario(path_of("pose_tracking.scn"));
  const ControllerConfig c = controller_config(s);
  const ChainState expect = build_state(s.spec, Vec3::Zero(), Vec4(1, 0, 0, 0),
                                        {JointAngles{0.2, -0.1, 0.3}, JointAngles{0, 0.2, -0.2}});
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT((c.chain_target.reference.bodies[i].position - expect.bodies[i].position).norm(), 1e-15);
  }
}

TEST(RotateScenario, IdentityIsNoOp) {
  const Scenario s = load_scenario(path_of("track_endeffector.scn"));
  const Scenario r = rotate_scenario(s, UnitQuaternion());
  EXPECT_EQ(r.spec, s.spec);
  EXPECT_EQ(r.control.path, s.control.path);
}

TEST(RotateScenario, RotatesInertialInputsOnly) {
  const Scenario s = load_scenario(path_of("validate_5body.scn"));
  const UnitQuaternion q = quat_from_rotation_vector(Vec3(0, 0, M_PI / 2));
  const Scenario r = rotate_scenario(s, q);
  EXPECT_LT((r.spec.gravity - s.spec.gravity).norm(), 1e-15);
  EXPECT_LT((r.initial.velocity - Vec3(0, 0.1, 0)).norm(), 1e-15);
  EXPECT_EQ(r.pulses[0].vector, s.pulses[0].vector);  // body frame
  EXPECT_LT((r.pulses[1].vector - Vec3(-0.5, 0, 0)).norm(), 1e-15);
  EXPECT_EQ(r.spec.joints, s.spec.joints);
}

// ---------------------------------------------------------------------------

TEST(Report, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Report, ConfigHashTracksInputs) {
  Scenario s = parse_scenario(kTwoBody);
  const std::string h = config_hash(s);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(config_hash(parse_scenario(write_scenario(s))), h);
  s.integration.dt = 2e-3;
  EXPECT_NE(config_hash(s), h);
}

TEST(Report, TraceCsvLayout) {
  const Scenario s = parse_scenario(kTwoBody);
  const RunResult r = simulate(s.spec, initial_state(s), simulation_inputs(s), s.integration);
  const auto cols = trace_columns(2);
  EXPECT_EQ(cols.size(), 1u + 13 * 2 + 3 + 20);
  std::ostringstream out;
  write_trace_csv(out, r.trace, 2, "abc");
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# nechain trace config_hash=abc");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("time,b1_px,", 0), 0u);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')), cols.size() - 1);
  }
  EXPECT_EQ(rows, 51);
}

TEST(Report, FormatListsMonitors) {
  const Scenario s = parse_scenario(kTwoBody);
  const RunResult r = simulate(s.spec, initial_state(s), simulation_inputs(s), s.integration);
  const RunReport rep{"two", config_hash(s), r.summary, 0.1};
  const std::string text = format_report(rep);
  EXPECT_TRUE(report_passed(rep));
  EXPECT_NE(text.find("result = PASS"), std::string::npos);
  EXPECT_NE(text.find("monitor constraint_position_gap PASS"), std::string::npos);
  EXPECT_NE(text.find("monitor lyapunov_nonincreasing n/a"), std::string::npos);
}

// ---------------------------------------------------------------------------

TEST(Sweep, ParseParam) {
  const SweepParam p = parse_sweep_param("dt=1e-3,5e-4");
  EXPECT_EQ(p.name, "dt");
  EXPECT_EQ(p.values, (std::vector<double>{1e-3, 5e-4}));
  EXPECT_TRUE(parse_sweep_param("kd_scale=").values.empty());
  EXPECT_THROW(parse_sweep_param("speed=1"), Error);
  EXPECT_THROW(parse_sweep_param("dt"), Error);
  EXPECT_THROW(parse_sweep_param("dt=-1"), Error);
  EXPECT_THROW(parse_sweep_param("dt=x"), Error);
  EXPECT_NO_THROW(parse_sweep_param("t_end=0"));
}

TEST(Sweep, GridOrderAndEmpty) {
  EXPECT_TRUE(sweep_grid({}).empty());
  EXPECT_TRUE(sweep_grid({{"dt", {}}}).empty());
  const auto g = sweep_grid({{"dt", {1, 2}}, {"kd_scale", {3, 4, 5}}});
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g[1], (std::vector<double>{1, 4}));
  EXPECT_EQ(g[3], (std::vector<double>{2, 3}));
}

TEST(Sweep, ApplyPointScalesDefaults) {
  Scenario s = parse_scenario(kTwoBody);
  s.control.kd.values = {2, 1};
  const Scenario t = apply_sweep_point(s, {{"kd_scale", {}}, {"lambda_scale", {}}, {"dt", {}}}, {3, 2, 1e-4});
  EXPECT_EQ(t.control.kd.values, (std::vector<double>{6, 3}));
  EXPECT_EQ(t.control.lambda.values, (std::vector<double>{4}));
  EXPECT_EQ(t.integration.dt, 1e-4);
}

TEST(Sweep, ConvergenceTime) {
  std::vector<TraceRecord> t(4);
  const double s[] = {1.0, 1e-4, 1e-2, 1e-4};
  for (int k = 0; k < 4; ++k) {
    t[k].time = k;
    t[k].s_norm = s[k];
  }
  EXPECT_EQ(s_convergence_time(t, 1e-3), 3.0);
  t[3].s_norm = 1.0;
  EXPECT_TRUE(std::isnan(s_convergence_time(t, 1e-3)));
}

TEST(Sweep, ConvergenceOrderFromSyntheticRows) {
  // x(dt) = dt^4 gives order 4 exactly.
  std::vector<SweepParam> params = {{"dt", {0.4, 0.2, 0.1}}};
  std::vector<SweepRow> rows(3);
  for (int k = 0; k < 3; ++k) {
    rows[k].point = {params[0].values[k]};
    rows[k].final_state = VectorXd::Constant(1, std::pow(params[0].values[k], 4));
    rows[k].status = "PASS";
  }
  fill_convergence_orders(rows, params);
  EXPECT_NEAR(rows[0].convergence_order, 4.0, 1e-12);
  EXPECT_TRUE(std::isnan(rows[1].convergence_order));
}

TEST(Sweep, RunsInGridOrderOnWorkers) {
  const Scenario base = parse_scenario(kTwoBody);
  const std::vector<SweepParam> params = {{"dt", {2e-3, 1e-3, 5e-4}}, {"t_end", {0.02, 0.04}}};
  const auto rows = run_sweep(base, params, 4);
  const auto grid = sweep_grid(params);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& expect = grid[k];
    EXPECT_EQ(rows[k].point, expect);
    EXPECT_EQ(rows[k].status, "PASS");
    EXPECT_EQ(rows[k].summary.steps, std::lround(expect[1] / expect[0]));
  }
  EXPECT_FALSE(std::isnan(rows[0].convergence_order));
  const std::string table = format_sweep_table(params, rows);
  EXPECT_NE(table.find("config_hash"), std::string::npos);
}

TEST(Sweep, ErrorRowsAreReported) {
  Scenario base = parse_scenario(kTwoBody);
  base.control.mode = ControlMode::kVelocity;
  base.control.kd.values = {1, 2, 3};  // no valid expansion for 12 dof
  const std::vector<SweepParam> params = {{"kd_scale", {1}}};
  const auto rows = run_sweep(base, params, 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].status, "ERROR");
  EXPECT_NE(format_sweep_table(params, rows).find("row 0 error:"), std::string::npos);
}

}  // namespace
}  // namespace nechain
