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

// Parameter sweeps over a base scenario.
//
// The grid is the Cartesian product of the named value lists; each point is
// an independent run on a worker pool, and results come back in grid order.
// Sweepable parameters: dt, t_end, kd_scale, lambda_scale, lambda_e_scale.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "nechain/report.hpp"
#include "nechain/scenario.hpp"
#include "nechain/simulation.hpp"

namespace nechain {

struct SweepParam {
  std::string name;
  std::vector<double> values;
};

inline const std::vector<std::string>& sweep_parameter_names() {
  static const std::vector<std::string> names = {"dt", "t_end", "kd_scale", "lambda_scale", "lambda_e_scale"};
  return names;
}

/// Parses "name=v1,v2,..."; throws kInvalidArgument.
inline SweepParam parse_sweep_param(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::kInvalidArgument, "expected name=v1,v2,... got '" + text + "'");
  SweepParam p;
  p.name = text.substr(0, eq);
  const auto& names = sweep_parameter_names();
  if (std::find(names.begin(), names.end(), p.name) == names.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown sweep parameter '" + p.name + "'");
  }
  const std::string list = text.substr(eq + 1);
  if (list.empty()) return p;
  try {
    p.values = detail::LineReader("--param", 0).list(p.name, list);
  } catch (const ParseError& e) {
    throw Error(ErrorCode::kInvalidArgument, e.what());
  }
  for (double v : p.values) {
    if (!(v > 0.0) && p.name != "t_end") throw Error(ErrorCode::kInvalidArgument, p.name + " values must be positive");
    if (!(v >= 0.0)) throw Error(ErrorCode::kInvalidArgument, p.name + " values must be non-negative");
  }
  return p;
}

/// Grid points in row-major order (the last parameter varies fastest).
/// Any empty list gives an empty grid, as does an empty parameter list.
inline std::vector<std::vector<double>> sweep_grid(const std::vector<SweepParam>& params) {
  if (params.empty()) return {};
  std::vector<std::vector<double>> grid = {{}};
  for (const auto& p : params) {
    std::vector<std::vector<double>> next;
    for (const auto& g : grid) {
      for (double v : p.values) {
        auto row = g;
        row.push_back(v);
        next.push_back(std::move(row));
      }
    }
    grid = std::move(next);
  }
  return grid;
}

namespace detail {

inline void scale_gain(GainInput& g, double scale, double default_value) {
  if (g.values.empty()) g.values = {default_value};
  for (double& v : g.values) v *= scale;
}

}  // namespace detail

inline Scenario apply_sweep_point(Scenario s, const std::vector<SweepParam>& params, const std::vector<double>& point) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::string& name = params[k].name;
    const double v = point[k];
    if (name == "dt") s.integration.dt = v;
    else if (name == "t_end") s.integration.t_end = v;
    else if (name == "kd_scale") detail::scale_gain(s.control.kd, v, 10.0);
    else if (name == "lambda_scale") detail::scale_gain(s.control.lambda, v, 2.0);
    else if (name == "lambda_e_scale") detail::scale_gain(s.control.lambda_e, v, 2.0);
  }
  return s;
}

struct SweepRow {
  std::vector<double> point;
  std::string hash;
  std::string status;  // PASS, FAIL or ERROR
  std::string error;
  RunSummary summary;
  VectorXd final_state;            // packed, for convergence estimates
  double s_convergence_time = kNaN;
  double convergence_order = kNaN;
  double wall_seconds = 0.0;
};

/// First trace time after which |s|_inf stays at or below `threshold`.
inline double s_convergence_time(const std::vector<TraceRecord>& trace, double threshold) {
  double t = kNaN;
  for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
    if (std::isnan(it->s_norm) || it->s_norm > threshold) break;
    t = it->time;
  }
  return t;
}

inline SweepRow run_sweep_point(const Scenario& base, const std::vector<SweepParam>& params,
                                const std::vector<double>& point, double s_threshold = 1e-3) {
  SweepRow row;
  row.point = point;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Scenario s = apply_sweep_point(base, params, point);
    row.hash = config_hash(s);
    IntegrationConfig cfg = s.integration;
    cfg.decimation = 1;
    const RunResult r = simulate(s.spec, initial_state(s), simulation_inputs(s), cfg);
    row.summary = r.summary;
    row.final_state = detail::pack(r.final_state);
    row.s_convergence_time = s_convergence_time(r.trace, s_threshold);
    row.status = r.summary.all_pass() ? "PASS" : "FAIL";
  } catch (const std::exception& e) {
    row.status = "ERROR";
    row.error = e.what();
  }
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

/// Richardson order estimates along the dt axis: for each row, the next two
/// coarser-to-finer rows that differ only in dt give
/// log(|x1 - x2| / |x2 - x3|) / log(dt1 / dt2).
inline void fill_convergence_orders(std::vector<SweepRow>& rows, const std::vector<SweepParam>& params) {
  int dt_index = -1;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].name == "dt") dt_index = static_cast<int>(k);
  }
  if (dt_index < 0) return;
  auto same_except_dt = [&](const SweepRow& a, const SweepRow& b) {
    for (std::size_t k = 0; k < a.point.size(); ++k) {
      if (static_cast<int>(k) != dt_index && a.point[k] != b.point[k]) return false;
    }
    return true;
  };
  for (auto& r : rows) {
    if (r.status == "ERROR") continue;
    const double dt1 = r.point[dt_index];
    // Next two strictly smaller dt values in the same family.
    std::vector<const SweepRow*> finer;
    for (const auto& o : rows) {
      if (&o != &r && o.status != "ERROR" && same_except_dt(r, o) && o.point[dt_index] < dt1) finer.push_back(&o);
    }
    std::sort(finer.begin(), finer.end(), [&](const SweepRow* a, const SweepRow* b) { return a->point[dt_index] > b->point[dt_index]; });
    if (finer.size() < 2) continue;
    const SweepRow& r2 = *finer[0];
    const SweepRow& r3 = *finer[1];
    const double e12 = (r.final_state - r2.final_state).lpNorm<Eigen::Infinity>();
    const double e23 = (r2.final_state - r3.final_state).lpNorm<Eigen::Infinity>();
    if (e12 > 0.0 && e23 > 0.0) r.convergence_order = std::log(e12 / e23) / std::log(dt1 / r2.point[dt_index]);
  }
}

/// Runs every grid point on `jobs` workers; rows come back in grid order.
inline std::vector<SweepRow> run_sweep(const Scenario& base, const std::vector<SweepParam>& params, int jobs) {
  const auto grid = sweep_grid(params);
  std::vector<SweepRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) rows[i] = run_sweep_point(base, params, grid[i]);
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(grid.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  fill_convergence_orders(rows, params);
  return rows;
}

/// Whitespace-aligned table with one row per grid point.
inline std::string format_sweep_table(const std::vector<SweepParam>& params, const std::vector<SweepRow>& rows) {
  using detail::num;
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head = {"row"};
  for (const auto& p : params) head.push_back(p.name);
  for (const char* h : {"status", "steps", "max_lin_mom_dev", "max_ang_mom_dev", "max_gap", "final_s", "final_pos_err",
                        "final_att_err", "s_conv_time", "order", "config_hash", "failed_monitors"}) {
    head.push_back(h);
  }
  cells.push_back(head);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow& r = rows[i];
    std::vector<std::string> c = {std::to_string(i)};
    for (double v : r.point) c.push_back(num(v));
    c.push_back(r.status);
    const RunSummary& s = r.summary;
    c.push_back(std::to_string(s.steps));
    for (double v : {s.max_linear_momentum_deviation, s.max_angular_momentum_deviation, s.max_position_gap,
                     s.final_s_norm, s.final_position_error, s.final_attitude_error, r.s_convergence_time,
                     r.convergence_order}) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4g", v);
      c.push_back(std::isnan(v) ? "-" : buf);
    }
    c.push_back(r.hash.empty() ? "-" : r.hash);
    std::string failed;
    for (const Monitor& m : s.monitors) {
      if (m.applicable && !m.pass) failed += (failed.empty() ? "" : ",") + m.name;
    }
    c.push_back(failed.empty() ? "-" : failed);
    cells.push_back(std::move(c));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], row[k].size());
  }
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      out += row[k];
      if (k + 1 < row.size()) out += std::string(width[k] - row[k].size() + 2, ' ');
    }
    out += "\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].error.empty()) out += "row " + std::to_string(i) + " error: " + rows[i].error + "\n";
  }
  return out;
}

}  // namespace nechain
