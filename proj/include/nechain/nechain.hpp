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

#include "nechain/chain.hpp"
#include "nechain/control.hpp"
#include "nechain/dynamics.hpp"
#include "nechain/errors.hpp"
#include "nechain/geom.hpp"
#include "nechain/simulation.hpp"
#include "nechain/trajectory.hpp"
