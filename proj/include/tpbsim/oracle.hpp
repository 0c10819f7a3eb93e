// Copyright 2026 The tpbsim Authors
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

#include <map>
#include <string>

#include "tpbsim/graph.hpp"
#include "tpbsim/tensor.hpp"

namespace tpbsim {

// Reference semantics of a graph, written independently of the machine
// model. Values are carried in double precision (exact for every integer
// edge) and rounded to each node's dtype after the node: floats to nearest
// even, integers to nearest even then saturated. Integer matmul and conv
// accumulate exactly and saturate to i32 before the activation.
using TensorMap = std::map<std::string, Tensor>;
TensorMap oracle_run(const Graph& g, const TensorMap& inputs);

// Rounds `v` as the oracle does when storing to `t`.
double oracle_round(DType t, double v);

// Deterministic random values for every graph input. Inputs used as
// gather indices stay inside their table.
TensorMap random_inputs(const Graph& g, uint64_t seed);

// Comparison tolerance for an output: 0 for integers, 1e-3 if any f16
// value feeds it, else 1e-5.
double output_tolerance(const Graph& g, const std::string& output);

}  // namespace tpbsim
