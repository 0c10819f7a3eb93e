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

#include "tpbsim/graph.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "tpbsim/error.hpp"
#include "text.hpp"

namespace tpbsim {

using text::parse_fail;

namespace {

struct KindName {
  OpKind kind;
  const char* name;
};
constexpr KindName kKindNames[] = {
    {OpKind::Input, "input"},         {OpKind::Constant, "const"},     {OpKind::Matmul, "matmul"},
    {OpKind::Conv2d, "conv2d"},       {OpKind::Add, "add"},            {OpKind::Sub, "sub"},
    {OpKind::Mul, "mul"},             {OpKind::Max, "max"},            {OpKind::Min, "min"},
    {OpKind::Relu, "relu"},           {OpKind::Cast, "cast"},          {OpKind::Softmax, "softmax"},
    {OpKind::Layernorm, "layernorm"}, {OpKind::Pool, "pool"},          {OpKind::Transpose, "transpose"},
    {OpKind::Reshape, "reshape"},     {OpKind::Gather, "gather"},      {OpKind::Fill, "fill"},
    {OpKind::Copy, "copy"},           {OpKind::Fused, "fused"},
};

[[noreturn]] void shape_fail(const Node& n, const std::string& what) {
  fail(ErrorKind::ShapeMismatch, n.name + " (" + std::string(op_kind_name(n.kind)) + "): " + what);
}

[[noreturn]] void dtype_fail(const Node& n, const std::string& what) {
  fail(ErrorKind::UnsupportedDtype, n.name + " (" + std::string(op_kind_name(n.kind)) + "): " + what);
}

bool is_suffix(const std::vector<int64_t>& small, const std::vector<int64_t>& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Relu6: return "relu6";
    case Activation::Clamp: return "clamp";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "relu6") return Activation::Relu6;
  if (s == "clamp") return Activation::Clamp;
  parse_fail("bad activation '" + s + "'");
}

std::string format_steps(const std::vector<FusedStep>& steps) {
  std::string out;
  for (size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (i) out += ';';
    out += op_kind_name(s.op);
    if (is_binary_elementwise(s.op)) {
      out += s.operand >= 0 ? "@" + std::to_string(s.operand) : "#" + text::fmt_double(s.imm);
      if (s.swapped) out += '~';
    }
    out += ':';
    out += dtype_name(s.dtype);
  }
  return out;
}

std::vector<FusedStep> parse_steps(const std::string& text) {
  std::vector<FusedStep> steps;
  for (const auto& part : text::split(text, ';')) {
    const auto colon = part.rfind(':');
    if (colon == std::string::npos) parse_fail("bad fused step '" + part + "'");
    FusedStep s;
    s.dtype = text::to_dtype(part.substr(colon + 1));
    std::string head = part.substr(0, colon);
    if (!head.empty() && head.back() == '~') {
      s.swapped = true;
      head.pop_back();
    }
    const auto mark = head.find_first_of("@#");
    const auto kind = parse_op_kind(head.substr(0, mark));
    if (!kind || !is_elementwise(*kind)) parse_fail("bad fused step '" + part + "'");
    s.op = *kind;
    if (mark != std::string::npos) {
      const std::string arg = head.substr(mark + 1);
      if (head[mark] == '@') {
        s.operand = static_cast<int>(text::to_int(arg));
      } else {
        s.imm = text::to_double(arg);
      }
    }
    steps.push_back(s);
  }
  return steps;
}

// "f16[2,3]" -> dtype + shape
std::pair<DType, std::vector<int64_t>> parse_typed_shape(const std::string& s) {
  const auto open = s.find('[');
  if (open == std::string::npos) parse_fail("expected dtype[shape], got '" + s + "'");
  return {text::to_dtype(s.substr(0, open)), text::to_int_list(s.substr(open))};
}

std::vector<uint8_t> make_constant(DType t, int64_t count, const std::map<std::string, std::string>& attrs) {
  auto get = [&](const std::string& k) -> std::string {
    auto it = attrs.find(k);
    if (it == attrs.end()) parse_fail("constant init needs '" + k + "'");
    return it->second;
  };
  const std::string init = get("init");
  const size_t eb = byte_width(t);
  std::vector<uint8_t> data(static_cast<size_t>(count) * eb);
  auto put = [&](int64_t i, double v) {
    store_element(t, v, std::span<uint8_t>(data).subspan(static_cast<size_t>(i) * eb, eb));
  };
  if (init == "hex") {
    data = text::from_hex(get("data"));
    if (data.size() != static_cast<size_t>(count) * eb) parse_fail("hex constant has the wrong size");
  } else if (init == "fill") {
    const double v = text::to_double(get("value"));
    for (int64_t i = 0; i < count; ++i) put(i, v);
  } else if (init == "uniform") {
    const double lo = text::to_double(get("lo")), hi = text::to_double(get("hi"));
    if (hi < lo) parse_fail("uniform init with hi < lo");
    std::mt19937_64 rng(text::to_u64(get("seed")));
    for (int64_t i = 0; i < count; ++i) {
      if (is_float(t)) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        put(i, lo + (hi - lo) * u);
      } else {
        const auto span = static_cast<uint64_t>(std::llround(hi) - std::llround(lo)) + 1;
        put(i, static_cast<double>(std::llround(lo) + static_cast<int64_t>(rng() % span)));
      }
    }
  } else {
    parse_fail("unknown constant init '" + init + "'");
  }
  return data;
}

struct OpSyntax {
  int arity;  // -1 = one or more
  std::set<std::string> attrs;
};

OpSyntax syntax_of(OpKind k) {
  switch (k) {
    case OpKind::Matmul: return {2, {"out", "act", "lo", "hi"}};
    case OpKind::Conv2d: return {2, {"out", "act", "lo", "hi", "stride", "pad"}};
    case OpKind::Add: case OpKind::Sub: case OpKind::Mul: case OpKind::Max: case OpKind::Min: return {2, {}};
    case OpKind::Relu: return {1, {}};
    case OpKind::Cast: return {1, {"to"}};
    case OpKind::Softmax: return {1, {"out"}};
    case OpKind::Layernorm: return {1, {"out", "eps"}};
    case OpKind::Pool: return {1, {"kind", "window"}};
    case OpKind::Transpose: return {1, {}};
    case OpKind::Reshape: return {1, {"shape"}};
    case OpKind::Gather: return {2, {}};
    case OpKind::Fill: return {0, {"dtype", "shape", "value"}};
    case OpKind::Copy: return {1, {}};
    case OpKind::Fused: return {-1, {"steps"}};
    default: return {0, {}};
  }
}

std::map<std::string, std::string> parse_attrs(const std::vector<std::string>& tokens, size_t from) {
  std::map<std::string, std::string> attrs;
  for (size_t i = from; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string::npos || eq == 0) parse_fail("expected key=value, got '" + tokens[i] + "'");
    if (!attrs.emplace(tokens[i].substr(0, eq), tokens[i].substr(eq + 1)).second)
      parse_fail("attribute '" + tokens[i].substr(0, eq) + "' given twice");
  }
  return attrs;
}

// Output dtype for ops whose result type is an attribute with a default.
void apply_dtype_defaults(Node& n, const Graph& g, const std::map<std::string, std::string>& attrs) {
  auto in_dtype = [&](size_t i) { return g.node(n.inputs.at(i)).dtype; };
  auto attr = [&](const char* k) -> std::optional<DType> {
    auto it = attrs.find(k);
    if (it == attrs.end()) return std::nullopt;
    return text::to_dtype(it->second);
  };
  switch (n.kind) {
    case OpKind::Matmul:
    case OpKind::Conv2d:
      n.dtype = attr("out").value_or(is_float(in_dtype(0)) ? DType::f32 : DType::i32);
      break;
    case OpKind::Softmax:
    case OpKind::Layernorm:
      n.dtype = attr("out").value_or(is_float(in_dtype(0)) ? in_dtype(0) : DType::f32);
      break;
    case OpKind::Cast: {
      auto to = attr("to");
      if (!to) parse_fail(n.name + ": cast needs to=");
      n.dtype = *to;
      break;
    }
    case OpKind::Fill: {
      auto t = attr("dtype");
      if (!t) parse_fail(n.name + ": fill needs dtype=");
      n.dtype = *t;
      break;
    }
    default: break;
  }
}

Node parse_node_statement(const std::string& line, const Graph& g) {
  const auto eq = line.find('=');
  const auto open = line.find('(', eq);
  const auto close = line.find(')', open == std::string::npos ? 0 : open);
  if (eq == std::string::npos || open == std::string::npos || close == std::string::npos)
    parse_fail("cannot parse '" + line + "'");
  Node n;
  n.name = std::string(text::trim(line.substr(0, eq)));
  const std::string op = std::string(text::trim(line.substr(eq + 1, open - eq - 1)));
  const auto kind = parse_op_kind(op);
  if (!kind || *kind == OpKind::Input || *kind == OpKind::Constant) fail(ErrorKind::UnsupportedOp, "unknown op '" + op + "'");
  n.kind = *kind;
  const std::string args = line.substr(open + 1, close - open - 1);
  if (!text::trim(args).empty())
    for (const auto& a : text::split(args, ',')) n.inputs.emplace_back(text::trim(a));
  const auto syntax = syntax_of(n.kind);
  if ((syntax.arity >= 0 && n.inputs.size() != static_cast<size_t>(syntax.arity)) ||
      (syntax.arity < 0 && n.inputs.empty()))
    parse_fail(n.name + ": wrong number of operands for " + op);
  for (const auto& in : n.inputs)
    if (!g.find(in)) parse_fail(n.name + ": operand '" + in + "' is not defined earlier");
  const auto attrs = parse_attrs(text::words(line.substr(close + 1)), 0);
  for (const auto& [k, v] : attrs)
    if (!syntax.attrs.count(k)) parse_fail(n.name + ": unknown attribute '" + k + "' for " + op);

  auto get = [&](const char* k) -> std::optional<std::string> {
    auto it = attrs.find(k);
    return it == attrs.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  if (auto v = get("act")) n.act = parse_activation(*v);
  if (auto v = get("lo")) n.clamp_lo = text::to_double(*v);
  if (auto v = get("hi")) n.clamp_hi = text::to_double(*v);
  if (auto v = get("stride")) n.stride = text::to_int(*v);
  if (auto v = get("pad")) n.pad = text::to_int(*v);
  if (auto v = get("eps")) n.eps = text::to_double(*v);
  if (auto v = get("window")) n.window = text::to_int(*v);
  if (auto v = get("kind")) {
    if (*v == "max") {
      n.pool = PoolKind::Max;
    } else if (*v == "avg") {
      n.pool = PoolKind::Avg;
    } else {
      parse_fail(n.name + ": pool kind must be max or avg");
    }
  }
  if (auto v = get("shape")) n.shape = text::to_int_list(*v);
  if (auto v = get("value")) n.value = text::to_double(*v);
  if (auto v = get("steps")) n.steps = parse_steps(*v);
  if (n.kind == OpKind::Fused && n.steps.empty()) parse_fail(n.name + ": fused node needs steps=");
  apply_dtype_defaults(n, g, attrs);
  return n;
}

}  // namespace

std::string_view op_kind_name(OpKind k) {
  for (const auto& e : kKindNames)
    if (e.kind == k) return e.name;
  return "?";
}

std::optional<OpKind> parse_op_kind(std::string_view s) {
  for (const auto& e : kKindNames)
    if (s == e.name) return e.kind;
  return std::nullopt;
}

bool is_binary_elementwise(OpKind k) {
  return k == OpKind::Add || k == OpKind::Sub || k == OpKind::Mul || k == OpKind::Max || k == OpKind::Min;
}

bool is_unary_elementwise(OpKind k) { return k == OpKind::Relu || k == OpKind::Cast; }

int64_t numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string format_shape(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

const Node& Graph::node(const std::string& name) const {
  if (const Node* n = find(name)) return *n;
  fail(ErrorKind::ParseError, "no node named '" + name + "'");
}

Node* Graph::find(const std::string& name) {
  for (auto& n : nodes)
    if (n.name == name) return &n;
  return nullptr;
}

const Node* Graph::find(const std::string& name) const {
  for (const auto& n : nodes)
    if (n.name == name) return &n;
  return nullptr;
}

bool Graph::is_output(const std::string& name) const {
  return std::find(outputs.begin(), outputs.end(), name) != outputs.end();
}

std::vector<std::string> Graph::consumers(const std::string& name) const {
  std::vector<std::string> out;
  for (const auto& n : nodes)
    for (const auto& in : n.inputs)
      if (in == name) out.push_back(n.name);
  return out;
}

void infer_shapes(Graph& g) {
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    Node& n = g.nodes[i];
    if (n.name.empty()) parse_fail("node without a name");
    if (index.count(n.name)) parse_fail("node '" + n.name + "' defined twice");
    std::vector<const Node*> in;
    for (const auto& name : n.inputs) {
      auto it = index.find(name);
      if (it == index.end()) parse_fail(n.name + ": operand '" + name + "' is not defined earlier");
      in.push_back(&g.nodes[it->second]);
    }
    auto rank_is = [&](const Node& x, size_t r) {
      if (x.shape.size() != r) shape_fail(n, x.name + " must have rank " + std::to_string(r));
    };
    for (const Node* x : in)
      for (int64_t d : x->shape)
        if (d <= 0) shape_fail(n, x->name + " has a non-positive extent");

    switch (n.kind) {
      case OpKind::Input:
      case OpKind::Constant:
        if (n.shape.empty()) shape_fail(n, "rank must be at least 1");
        for (int64_t d : n.shape)
          if (d <= 0) shape_fail(n, "extents must be positive");
        if (n.kind == OpKind::Constant && n.data.size() != static_cast<size_t>(numel(n.shape)) * byte_width(n.dtype))
          shape_fail(n, "constant data size does not match its shape");
        break;
      case OpKind::Matmul: {
        const Node &x = *in[0], &w = *in[1];
        if (w.kind != OpKind::Constant) fail(ErrorKind::UnsupportedOp, n.name + ": matmul weights must be a constant");
        rank_is(w, 2);
        if (x.shape.size() < 2) shape_fail(n, "activation rank must be at least 2");
        if (x.shape.back() != w.shape[0]) shape_fail(n, "contraction extents differ");
        if (x.dtype != w.dtype) dtype_fail(n, "operand dtypes differ");
        if (x.dtype != DType::i8 && x.dtype != DType::u8 && x.dtype != DType::f16)
          dtype_fail(n, "inputs must be i8, u8 or f16");
        n.shape = x.shape;
        n.shape.back() = w.shape[1];
        break;
      }
      case OpKind::Conv2d: {
        const Node &x = *in[0], &w = *in[1];
        if (w.kind != OpKind::Constant) fail(ErrorKind::UnsupportedOp, n.name + ": conv2d weights must be a constant");
        rank_is(x, 4);
        rank_is(w, 4);
        if (w.shape[2] != x.shape[3]) shape_fail(n, "input channels differ");
        if (x.dtype != w.dtype) dtype_fail(n, "operand dtypes differ");
        if (x.dtype != DType::i8 && x.dtype != DType::u8 && x.dtype != DType::f16)
          dtype_fail(n, "inputs must be i8, u8 or f16");
        if (n.stride < 1 || n.pad < 0 || n.pad >= w.shape[0] || n.pad >= w.shape[1])
          shape_fail(n, "stride must be positive and pad below the kernel size");
        const int64_t oh = (x.shape[1] + 2 * n.pad - w.shape[0]) / n.stride + 1;
        const int64_t ow = (x.shape[2] + 2 * n.pad - w.shape[1]) / n.stride + 1;
        if (x.shape[1] + 2 * n.pad < w.shape[0] || x.shape[2] + 2 * n.pad < w.shape[1])
          shape_fail(n, "kernel larger than the padded input");
        n.shape = {x.shape[0], oh, ow, w.shape[3]};
        break;
      }
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
      case OpKind::Max:
      case OpKind::Min: {
        const Node &a = *in[0], &b = *in[1];
        if (a.dtype != b.dtype) dtype_fail(n, "operand dtypes differ");
        if (a.shape == b.shape) {
          n.shape = a.shape;
        } else if (b.kind == OpKind::Constant && (numel(b.shape) == 1 || is_suffix(b.shape, a.shape))) {
          n.shape = a.shape;
        } else if (a.kind == OpKind::Constant && (numel(a.shape) == 1 || is_suffix(a.shape, b.shape))) {
          n.shape = b.shape;
        } else {
          shape_fail(n, "operand shapes " + format_shape(a.shape) + " and " + format_shape(b.shape) +
                            " do not match (only constants broadcast)");
        }
        n.dtype = a.dtype;
        break;
      }
      case OpKind::Relu:
      case OpKind::Copy:
        n.shape = in[0]->shape;
        n.dtype = in[0]->dtype;
        break;
      case OpKind::Cast:
        n.shape = in[0]->shape;
        break;
      case OpKind::Softmax:
      case OpKind::Layernorm:
        n.shape = in[0]->shape;
        if (!is_float(n.dtype)) dtype_fail(n, "output must be f16 or f32");
        if (in[0]->dtype == DType::i32) dtype_fail(n, "i32 inputs are not supported");
        break;
      case OpKind::Pool: {
        const Node& x = *in[0];
        rank_is(x, 4);
        if (n.window < 1 || x.shape[1] < n.window || x.shape[2] < n.window)
          shape_fail(n, "window must be positive and fit the input");
        if (n.pool == PoolKind::Avg && x.dtype == DType::i32) dtype_fail(n, "average pooling of i32 is not supported");
        n.shape = {x.shape[0], x.shape[1] / n.window, x.shape[2] / n.window, x.shape[3]};
        n.dtype = x.dtype;
        break;
      }
      case OpKind::Transpose:
        rank_is(*in[0], 2);
        n.shape = {in[0]->shape[1], in[0]->shape[0]};
        n.dtype = in[0]->dtype;
        break;
      case OpKind::Reshape:
        if (n.shape.empty() || numel(n.shape) != numel(in[0]->shape))
          shape_fail(n, "cannot reshape " + format_shape(in[0]->shape) + " to " + format_shape(n.shape));
        for (int64_t d : n.shape)
          if (d <= 0) shape_fail(n, "extents must be positive");
        n.dtype = in[0]->dtype;
        break;
      case OpKind::Gather: {
        const Node &table = *in[0], &idx = *in[1];
        if (table.kind != OpKind::Constant && table.kind != OpKind::Input)
          fail(ErrorKind::UnsupportedOp, n.name + ": gather table must be a graph input or constant");
        rank_is(idx, 1);
        if (idx.dtype != DType::i32) dtype_fail(n, "indices must be i32");
        n.shape = idx.shape;
        n.shape.insert(n.shape.end(), table.shape.begin() + 1, table.shape.end());
        n.dtype = table.dtype;
        break;
      }
      case OpKind::Fill:
        if (n.shape.empty()) shape_fail(n, "fill needs a shape");
        for (int64_t d : n.shape)
          if (d <= 0) shape_fail(n, "extents must be positive");
        break;
      case OpKind::Fused: {
        n.shape = in[0]->shape;
        DType cur = in[0]->dtype;
        for (const auto& s : n.steps) {
          if (!is_elementwise(s.op)) shape_fail(n, "fused steps must be elementwise");
          if (is_binary_elementwise(s.op) && s.operand >= 0) {
            if (static_cast<size_t>(s.operand) >= in.size()) shape_fail(n, "fused operand index out of range");
            const Node& o = *in[s.operand];
            if (o.dtype != cur) dtype_fail(n, "fused operand dtype differs");
            if (o.shape != n.shape && !(o.kind == OpKind::Constant && is_suffix(o.shape, n.shape)))
              shape_fail(n, "fused operand shape does not match");
          }
          if (s.op != OpKind::Cast && s.dtype != cur) dtype_fail(n, "only cast changes the dtype");
          cur = s.dtype;
        }
        n.dtype = cur;
        break;
      }
    }
    index[n.name] = i;
  }
  if (g.nodes.empty()) parse_fail("graph has no nodes");
  if (g.outputs.empty()) parse_fail("graph has no outputs");
  std::set<std::string> seen;
  for (const auto& o : g.outputs) {
    if (!index.count(o)) parse_fail("output '" + o + "' is not defined");
    if (!seen.insert(o).second) parse_fail("output '" + o + "' listed twice");
  }
  if (g.chunks < 0) parse_fail("chunk count must be positive");
}

Graph parse_graph(const std::string& text_in) {
  Graph g;
  std::istringstream in(text_in);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line(text::trim(hash == std::string::npos ? raw : raw.substr(0, hash)));
    if (line.empty()) continue;
    try {
      const auto tok = text::words(line);
      if (tok[0] == "input" || tok[0] == "const") {
        if (tok.size() < 3) parse_fail("expected '" + tok[0] + " name dtype[shape]'");
        if (g.find(tok[1])) parse_fail("node '" + tok[1] + "' defined twice");
        Node n;
        n.name = tok[1];
        n.kind = tok[0] == "input" ? OpKind::Input : OpKind::Constant;
        std::tie(n.dtype, n.shape) = parse_typed_shape(tok[2]);
        const auto attrs = parse_attrs(tok, 3);
        if (n.kind == OpKind::Input) {
          if (!attrs.empty()) parse_fail("inputs take no attributes");
        } else {
          n.data = make_constant(n.dtype, numel(n.shape), attrs);
        }
        g.nodes.push_back(std::move(n));
      } else if (tok[0] == "output") {
        if (tok.size() != 2) parse_fail("expected 'output name'");
        g.outputs.push_back(tok[1]);
      } else if (tok[0] == "chunks") {
        if (tok.size() != 2) parse_fail("expected 'chunks N'");
        g.chunks = text::to_int(tok[1]);
        if (g.chunks < 1) parse_fail("chunk count must be positive");
      } else {
        Node n = parse_node_statement(line, g);
        if (g.find(n.name)) parse_fail("node '" + n.name + "' defined twice");
        g.nodes.push_back(std::move(n));
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ParseError) throw;
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  infer_shapes(g);
  return g;
}

Graph load_graph(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::IoError, "cannot open graph file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_graph(ss.str());
}

std::string format_graph(const Graph& g) {
  std::ostringstream o;
  if (g.chunks) o << "chunks " << g.chunks << "\n";
  for (const auto& n : g.nodes) {
    const std::string typed = std::string(dtype_name(n.dtype)) + format_shape(n.shape);
    if (n.kind == OpKind::Input) {
      o << "input " << n.name << " " << typed << "\n";
      continue;
    }
    if (n.kind == OpKind::Constant) {
      o << "const " << n.name << " " << typed << " init=hex data=" << text::to_hex(n.data) << "\n";
      continue;
    }
    o << n.name << " = " << op_kind_name(n.kind) << "(";
    for (size_t i = 0; i < n.inputs.size(); ++i) o << (i ? ", " : "") << n.inputs[i];
    o << ")";
    switch (n.kind) {
      case OpKind::Matmul:
      case OpKind::Conv2d:
        o << " out=" << dtype_name(n.dtype);
        if (n.act != Activation::Identity) o << " act=" << activation_name(n.act);
        if (n.act == Activation::Clamp) o << " lo=" << text::fmt_double(n.clamp_lo) << " hi=" << text::fmt_double(n.clamp_hi);
        if (n.kind == OpKind::Conv2d) o << " stride=" << n.stride << " pad=" << n.pad;
        break;
      case OpKind::Cast: o << " to=" << dtype_name(n.dtype); break;
      case OpKind::Softmax: o << " out=" << dtype_name(n.dtype); break;
      case OpKind::Layernorm: o << " out=" << dtype_name(n.dtype) << " eps=" << text::fmt_double(n.eps); break;
      case OpKind::Pool: o << " kind=" << (n.pool == PoolKind::Max ? "max" : "avg") << " window=" << n.window; break;
      case OpKind::Reshape: o << " shape=" << format_shape(n.shape); break;
      case OpKind::Fill:
        o << " dtype=" << dtype_name(n.dtype) << " shape=" << format_shape(n.shape) << " value=" << text::fmt_double(n.value);
        break;
      case OpKind::Fused: o << " steps=" << format_steps(n.steps); break;
      default: break;
    }
    o << "\n";
  }
  for (const auto& out : g.outputs) o << "output " << out << "\n";
  return o.str();
}

std::vector<double> constant_values(const Node& c) {
  const size_t eb = byte_width(c.dtype);
  std::vector<double> v(c.data.size() / eb);
  for (size_t i = 0; i < v.size(); ++i) v[i] = load_element(c.dtype, std::span<const uint8_t>(c.data).subspan(i * eb, eb));
  return v;
}

bool constant_is_uniform(const Node& c, double v) {
  if (c.kind != OpKind::Constant) return false;
  for (double x : constant_values(c))
    if (x != v) return false;
  return true;
}

}  // namespace tpbsim
