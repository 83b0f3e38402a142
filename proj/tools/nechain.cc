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

// nechain command-line tool.
//
//   nechain run <file> [--out DIR] [--dt X] [--t-end X]
//   nechain oracle [--seed N] [--trials N]
//   nechain sweep <file> --param name=v1,v2,... [--param ...] [--jobs N]
//
// Exit codes: 0 success, 1 monitor failure or oracle mismatch, 2 parse or
// validation error, 3 solver or controller failure during the run.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "nechain/nechain.hpp"
#include "nechain/reference_n3.hpp"
#include "nechain/report.hpp"
#include "nechain/scenario.hpp"
#include "nechain/sweep.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMonitor = 1;
constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

namespace fs = std::filesystem;

struct RunOptions {
  std::string file;
  std::string out;
  std::optional<double> dt;
  std::optional<double> t_end;
};

/// --out, then NECHAIN_OUT_DIR, then the scenario's [output] dir, then ".".
std::string output_dir(const RunOptions& o, const nechain::Scenario& s) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("NECHAIN_OUT_DIR"); env && *env) return env;
  if (!s.output.dir.empty()) return s.output.dir;
  return ".";
}

int cmd_run(const RunOptions& o) {
  using namespace nechain;
  Scenario s;
  SimulationInputs inputs;
  ChainState initial;
  try {
    s = load_scenario(o.file);
    if (o.dt) s.integration.dt = *o.dt;
    if (o.t_end) s.integration.t_end = *o.t_end;
    initial = initial_state(s);
    inputs = prepare_inputs(s.spec, initial, simulation_inputs(s), s.integration);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }

  const std::string name = s.output.name.empty() ? fs::path(o.file).stem().string() : s.output.name;
  const std::string hash = config_hash(s);
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  try {
    result = simulate(s.spec, initial, inputs, s.integration);
  } catch (const std::exception& e) {
    std::cerr << "error: run failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  RunReport report{name, hash, result.summary,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};

  const fs::path dir = output_dir(o, s);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory " << dir << ": " << ec.message() << "\n";
    return kExitInput;
  }
  const std::string text = format_report(report);
  {
    std::ofstream f(dir / (name + ".report.txt"));
    f << text;
  }
  if (s.output.trace) {
    std::ofstream f(dir / (name + ".csv"));
    write_trace_csv(f, result.trace, s.spec.size(), hash);
  }
  std::cout << text;
  return report_passed(report) ? kExitOk : kExitMonitor;
}

int cmd_oracle(std::uint64_t seed, int trials, bool inject_fault) {
  using namespace nechain::reference;
  if (trials < 0) {
    std::cerr << "error: --trials must be non-negative\n";
    return kExitInput;
  }
  if (trials == 0) {
    std::cout << "no trials\n";
    return kExitOk;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const OracleSummary s = run_oracle(seed, trials, inject_fault ? Fault::kJOmega : Fault::kNone);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto show = [](const char* what, const Mismatch& m) {
    std::cout << what << ": " << m.deviation;
    if (!m.block.empty()) std::cout << " (block " << m.block << " row " << m.row << " col " << m.col << ")";
    std::cout << "\n";
  };
  std::cout << "trials: " << s.trials << " seed: " << seed << " time_s: " << secs << "\n";
  show("max block deviation", s.worst_block);
  show("max solve deviation", s.worst_solve);
  if (!s.passed) {
    const Mismatch& m = s.worst_block.deviation > 1e-12 ? s.worst_block : s.worst_solve;
    std::cout << "MISMATCH in block " << m.block << " at (" << m.row << ", " << m.col << ")\n";
    return kExitMonitor;
  }
  std::cout << "PASS\n";
  return kExitOk;
}

int cmd_sweep(const std::string& file, const std::vector<std::string>& raw_params, int jobs) {
  using namespace nechain;
  Scenario base;
  std::vector<SweepParam> params;
  try {
    base = load_scenario(file);
    for (const auto& p : raw_params) params.push_back(parse_sweep_param(p));
    // Reject a broken base configuration up front.
    prepare_inputs(base.spec, initial_state(base), simulation_inputs(base), base.integration);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto rows = run_sweep(base, params, jobs);
  std::cout << format_sweep_table(params, rows);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nechain: serial rigid-body chain simulator"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write the trace and report");
  run_cmd->add_option("file", run.file, "Scenario file")->required();
  run_cmd->add_option("--out", run.out, "Output directory (overrides NECHAIN_OUT_DIR)");
  run_cmd->add_option("--dt", run.dt, "Override the time step [s]")->check(CLI::PositiveNumber);
  run_cmd->add_option("--t-end", run.t_end, "Override the run length [s]")->check(CLI::NonNegativeNumber);

  std::uint64_t seed = 1;
  int trials = 1000;
  bool inject_fault = false;
  auto* oracle_cmd = app.add_subcommand("oracle", "Compare the assembler against the N=3 reference");
  oracle_cmd->add_option("--seed", seed, "Random seed");
  oracle_cmd->add_option("--trials", trials, "Number of random states");
  // Test fixture: perturbs one J_omega entry to prove mismatches are caught.
  oracle_cmd->add_flag("--inject-fault", inject_fault)->group("");

  std::string sweep_file;
  std::vector<std::string> params;
  int jobs = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter grid over a scenario");
  sweep_cmd->add_option("file", sweep_file, "Scenario file")->required();
  sweep_cmd->add_option("--param", params, "name=v1,v2,... (dt, t_end, kd_scale, lambda_scale, lambda_e_scale)");
  sweep_cmd->add_option("--jobs", jobs, "Worker threads (default: hardware concurrency)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (*run_cmd) return cmd_run(run);
  if (*oracle_cmd) return cmd_oracle(seed, trials, inject_fault);
  if (*sweep_cmd) return cmd_sweep(sweep_file, params, jobs);
  return kExitInput;
}
