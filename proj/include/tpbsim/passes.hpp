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

#include <optional>
#include <string>
#include <vector>

#include "tpbsim/graph.hpp"

namespace tpbsim {

enum class Pass : uint8_t { Algebraic, Layout, Fusion, Dce };
std::string_view pass_name(Pass p);
// Comma-separated pass names, "all" for the default list or "none".
std::vector<Pass> parse_pass_list(const std::string& text);
std::vector<Pass> default_passes();

// Each pass preserves the values of every output and keeps output names.
//   algebraic: x+0, x-0, x*1 -> x; x*0 -> fill(0)
//   layout:    transpose(transpose(x)) -> x; transposed constants folded;
//              reshape chains collapsed, identity reshapes removed
//   fusion:    matmul/conv followed by relu -> fused activation;
//              elementwise chains -> one fused node (at most two tensor
//              operands, no integer/float mixing)
//   dce:       drops nodes that no output depends on (inputs are kept)
Graph run_pass(const Graph& g, Pass p);

// Rewrites an elementwise node as a one-step (or, for fused nodes, the
// same) fused chain whose running value starts at operand `running`.
// Scalar constants become immediates. Returns nullopt if the node cannot
// be expressed that way (e.g. it reads the running operand twice).
std::optional<Node> as_fused(const Graph& g, const Node& n, int running = 0);
Graph optimize(const Graph& g, const std::vector<Pass>& passes);

}  // namespace tpbsim
