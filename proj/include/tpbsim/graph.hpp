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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpbsim/dtype.hpp"
#include "tpbsim/isa.hpp"

namespace tpbsim {

enum class OpKind : uint8_t {
  Input, Constant,
  Matmul, Conv2d,
  Add, Sub, Mul, Max, Min, Relu, Cast,
  Softmax, Layernorm, Pool, Transpose, Reshape, Gather,
  // Introduced by the optimizer.
  Fill, Copy, Fused,
};
std::string_view op_kind_name(OpKind k);
std::optional<OpKind> parse_op_kind(std::string_view s);
bool is_binary_elementwise(OpKind k);
bool is_unary_elementwise(OpKind k);
inline bool is_elementwise(OpKind k) { return is_binary_elementwise(k) || is_unary_elementwise(k); }

enum class PoolKind : uint8_t { Max, Avg };

// One step of a fused elementwise chain. The running value starts as input
// 0 and each step combines it with input `operand` (or the scalar `imm`
// when operand < 0), then rounds to `dtype`. `swapped` puts the operand on
// the left, which matters for sub.
struct FusedStep {
  OpKind op = OpKind::Add;
  int operand = -1;
  bool swapped = false;
  double imm = 0;
  DType dtype = DType::f32;
  bool operator==(const FusedStep&) const = default;
};

struct Node {
  std::string name;
  OpKind kind = OpKind::Input;
  std::vector<std::string> inputs;
  DType dtype = DType::f32;
  std::vector<int64_t> shape;

  // matmul / conv2d
  Activation act = Activation::Identity;
  double clamp_lo = 0, clamp_hi = 0;
  int64_t stride = 1, pad = 0;
  // pool
  PoolKind pool = PoolKind::Max;
  int64_t window = 2;
  // layernorm
  double eps = 1e-5;
  // fill
  double value = 0;
  // fused
  std::vector<FusedStep> steps;
  // constant
  std::vector<uint8_t> data;

  bool operator==(const Node&) const = default;
};

int64_t numel(const std::vector<int64_t>& shape);
std::string format_shape(const std::vector<int64_t>& shape);

// Nodes are kept in topological order: every input names an earlier node.
struct Graph {
  std::vector<Node> nodes;
  std::vector<std::string> outputs;
  int64_t chunks = 0;  // requested chunk count, 0 = choose automatically

  const Node& node(const std::string& name) const;
  Node* find(const std::string& name);
  const Node* find(const std::string& name) const;
  bool is_output(const std::string& name) const;
  // Names of the nodes reading `name`, in node order (repeats kept).
  std::vector<std::string> consumers(const std::string& name) const;
  bool operator==(const Graph&) const = default;
};

// Text form, one statement per line ('#' starts a comment):
//   input x f16[256,64]
//   const w f16[64,64] init=uniform lo=-0.5 hi=0.5 seed=1
//   h = matmul(x, w) out=f32 act=relu
//   output h
//   chunks 16
// Constants take init=uniform (lo, hi, seed), init=fill (value) or
// init=hex (data). Throws ParseError, ShapeMismatch, UnsupportedOp or
// UnsupportedDtype.
Graph parse_graph(const std::string& text);
Graph load_graph(const std::string& path);
// Canonical text; constants are written as hex so the round trip is exact.
std::string format_graph(const Graph& g);

// Recomputes every node's shape and dtype from its inputs and attributes
// and checks operand compatibility.
void infer_shapes(Graph& g);

// True if every element of the constant equals `v`.
bool constant_is_uniform(const Node& c, double v);
// Constant value as doubles, in row-major order.
std::vector<double> constant_values(const Node& c);

}  // namespace tpbsim
