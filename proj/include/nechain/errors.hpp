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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nechain {

enum class ErrorCode {
  kSpecInvalid,
  kNonSpdMass,
  kRankDeficientConstraints,
  kSolverFailed,
  kFeasibility,
  kTaskSingular,
  kBodyInsideObstacle,
  kInvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSpecInvalid: return "SpecInvalid";
    case ErrorCode::kNonSpdMass: return "NonSPDMass";
    case ErrorCode::kRankDeficientConstraints: return "RankDeficientConstraints";
    case ErrorCode::kSolverFailed: return "SolverFailed";
    case ErrorCode::kFeasibility: return "FeasibilityError";
    case ErrorCode::kTaskSingular: return "TaskSingular";
    case ErrorCode::kBodyInsideObstacle: return "BodyInsideObstacle";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Library exception; `code()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Solver-side failures map to CLI exit code 3.
  bool is_solver_failure() const noexcept {
    return code_ == ErrorCode::kNonSpdMass || code_ == ErrorCode::kRankDeficientConstraints ||
           code_ == ErrorCode::kSolverFailed;
  }

 private:
  ErrorCode code_;
};

}  // namespace nechain
