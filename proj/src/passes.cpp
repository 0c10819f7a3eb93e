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

#include "tpbsim/passes.hpp"

#include <algorithm>
#include <set>

#include "tpbsim/error.hpp"
#include "text.hpp"

namespace tpbsim {

namespace {

void erase_node(Graph& g, const std::string& name) {
  g.nodes.erase(std::remove_if(g.nodes.begin(), g.nodes.end(), [&](const Node& n) { return n.name == name; }),
                g.nodes.end());
}

void rename_refs(Graph& g, const std::string& from, const std::string& to) {
  for (auto& n : g.nodes)
    for (auto& in : n.inputs)
      if (in == from) in = to;
  for (auto& o : g.outputs)
    if (o == from) o = to;
}

// Makes every reader of `from` read `to` instead and drops `from`. An
// output keeps its name: either `to` takes it over or `from` becomes a copy.
void redirect(Graph& g, std::string from, std::string to) {
  if (!g.is_output(from)) {
    rename_refs(g, from, to);
    erase_node(g, from);
    return;
  }
  const Node& t = g.node(to);
  if (t.kind != OpKind::Input && t.kind != OpKind::Constant && !g.is_output(to)) {
    erase_node(g, from);
    g.find(to)->name = from;
    rename_refs(g, to, from);
    return;
  }
  Node* f = g.find(from);
  Node copy;
  copy.name = from;
  copy.kind = OpKind::Copy;
  copy.inputs = {to};
  copy.dtype = f->dtype;
  copy.shape = f->shape;
  *f = copy;
}

bool uses_once(const Graph& g, const std::string& producer, const std::string& consumer) {
  const auto c = g.consumers(producer);
  return c.size() == 1 && c[0] == consumer;
}

bool same_domain(DType a, DType b) { return is_float(a) == is_float(b); }

bool algebraic_step(Graph& g) {
  for (auto& n : g.nodes) {
    if (n.kind != OpKind::Add && n.kind != OpKind::Sub && n.kind != OpKind::Mul) continue;
    for (int side = 0; side < 2; ++side) {
      if (n.kind == OpKind::Sub && side == 0) continue;  // only x - 0
      const Node& c = g.node(n.inputs[side]);
      const Node& x = g.node(n.inputs[1 - side]);
      if (c.kind != OpKind::Constant || x.shape != n.shape) continue;
      const double identity = n.kind == OpKind::Mul ? 1.0 : 0.0;
      if (constant_is_uniform(c, identity)) {
        redirect(g, n.name, x.name);
        return true;
      }
      if (n.kind == OpKind::Mul && constant_is_uniform(c, 0.0)) {
        Node fill;
        fill.name = n.name;
        fill.kind = OpKind::Fill;
        fill.dtype = n.dtype;
        fill.shape = n.shape;
        fill.value = 0;
        n = fill;
        return true;
      }
    }
  }
  return false;
}

bool layout_step(Graph& g) {
  for (auto& n : g.nodes) {
    if (n.kind == OpKind::Transpose) {
      const Node& in = g.node(n.inputs[0]);
      if (in.kind == OpKind::Transpose) {
        redirect(g, n.name, in.inputs[0]);
        return true;
      }
      if (in.kind == OpKind::Constant) {
        const size_t eb = byte_width(in.dtype);
        const int64_t rows = in.shape[0], cols = in.shape[1];
        std::vector<uint8_t> data(in.data.size());
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < cols; ++j)
            std::copy_n(in.data.begin() + static_cast<ptrdiff_t>((i * cols + j) * eb), eb,
                        data.begin() + static_cast<ptrdiff_t>((j * rows + i) * eb));
        n.kind = OpKind::Constant;
        n.inputs.clear();
        n.data = std::move(data);
        return true;
      }
    }
    if (n.kind == OpKind::Reshape) {
      const Node& in = g.node(n.inputs[0]);
      if (in.kind == OpKind::Reshape) {
        n.inputs[0] = in.inputs[0];
        return true;
      }
      if (in.shape == n.shape) {
        redirect(g, n.name, in.name);
        return true;
      }
    }
  }
  return false;
}

std::optional<Node> merge_chain(const Graph& g, const Node& producer, const Node& consumer) {
  auto p = as_fused(g, producer, 0);
  if (!p && is_binary_elementwise(producer.kind)) p = as_fused(g, producer, 1);
  if (!p) return std::nullopt;
  for (int r = 0; r < static_cast<int>(consumer.inputs.size()); ++r) {
    if (consumer.inputs[r] != producer.name) continue;
    auto c = as_fused(g, consumer, r);
    if (!c) continue;
    Node m = *p;
    m.name = consumer.name;
    m.dtype = c->dtype;
    bool ok = true;
    for (auto s : c->steps) {
      if (s.operand >= 0) {
        const std::string& src = c->inputs[s.operand];
        if (src == producer.name) {
          ok = false;
          break;
        }
        auto it = std::find(m.inputs.begin(), m.inputs.end(), src);
        s.operand = static_cast<int>(it - m.inputs.begin());
        if (it == m.inputs.end()) m.inputs.push_back(src);
      }
      m.steps.push_back(s);
    }
    if (!ok || m.inputs.size() > 2) continue;
    const DType first = g.node(m.inputs[0]).dtype;
    for (const auto& s : m.steps) ok = ok && same_domain(s.dtype, first);
    for (const auto& in : m.inputs) ok = ok && same_domain(g.node(in).dtype, first);
    if (ok) return m;
  }
  return std::nullopt;
}

bool fusion_step(Graph& g) {
  for (auto& n : g.nodes) {
    if (n.kind == OpKind::Relu) {
      const Node& m = g.node(n.inputs[0]);
      if ((m.kind == OpKind::Matmul || m.kind == OpKind::Conv2d) && m.act == Activation::Identity &&
          !g.is_output(m.name) && uses_once(g, m.name, n.name)) {
        g.find(m.name)->act = Activation::Relu;
        redirect(g, n.name, m.name);
        return true;
      }
    }
    if (!is_elementwise(n.kind) && n.kind != OpKind::Fused) continue;
    for (const auto& in : n.inputs) {
      const Node& p = g.node(in);
      if ((!is_elementwise(p.kind) && p.kind != OpKind::Fused) || g.is_output(p.name) || !uses_once(g, p.name, n.name))
        continue;
      if (auto merged = merge_chain(g, p, n)) {
        const std::string gone = p.name;
        n = *merged;
        erase_node(g, gone);
        return true;
      }
    }
  }
  return false;
}

void dce(Graph& g) {
  std::set<std::string> live(g.outputs.begin(), g.outputs.end());
  for (auto it = g.nodes.rbegin(); it != g.nodes.rend(); ++it)
    if (live.count(it->name))
      for (const auto& in : it->inputs) live.insert(in);
  g.nodes.erase(std::remove_if(g.nodes.begin(), g.nodes.end(),
                               [&](const Node& n) { return n.kind != OpKind::Input && !live.count(n.name); }),
                g.nodes.end());
}

}  // namespace

std::string_view pass_name(Pass p) {
  switch (p) {
    case Pass::Algebraic: return "algebraic";
    case Pass::Layout: return "layout";
    case Pass::Fusion: return "fusion";
    case Pass::Dce: return "dce";
  }
  return "?";
}

std::vector<Pass> default_passes() { return {Pass::Algebraic, Pass::Layout, Pass::Fusion, Pass::Dce}; }

std::vector<Pass> parse_pass_list(const std::string& s) {
  if (s == "all") return default_passes();
  if (s == "none" || s.empty()) return {};
  std::vector<Pass> out;
  for (const auto& raw : text::split(s, ',')) {
    const std::string name(text::trim(raw));
    bool found = false;
    for (Pass p : default_passes())
      if (pass_name(p) == name) {
        out.push_back(p);
        found = true;
      }
    if (!found) text::parse_fail("unknown pass '" + name + "'");
  }
  return out;
}

std::optional<Node> as_fused(const Graph& g, const Node& n, int running) {
  if (n.kind == OpKind::Fused) return running == 0 ? std::optional<Node>(n) : std::nullopt;
  if (!is_elementwise(n.kind)) return std::nullopt;
  Node f;
  f.name = n.name;
  f.kind = OpKind::Fused;
  f.dtype = n.dtype;
  f.shape = n.shape;
  FusedStep s;
  s.op = n.kind;
  s.dtype = n.dtype;
  if (is_unary_elementwise(n.kind)) {
    if (running != 0) return std::nullopt;
    f.inputs = {n.inputs[0]};
  } else {
    const std::string& run = n.inputs[running];
    const std::string& other = n.inputs[1 - running];
    if (run == other) return std::nullopt;
    const Node& r = g.node(run);
    const Node& o = g.node(other);
    if (r.shape != n.shape) return std::nullopt;
    s.swapped = running == 1;
    f.inputs = {run};
    if (o.kind == OpKind::Constant && numel(o.shape) == 1) {
      s.imm = constant_values(o)[0];
    } else {
      s.operand = 1;
      f.inputs.push_back(other);
    }
  }
  f.steps = {s};
  return f;
}

Graph run_pass(const Graph& in, Pass p) {
  Graph g = in;
  switch (p) {
    case Pass::Algebraic: while (algebraic_step(g)) {} break;
    case Pass::Layout: while (layout_step(g)) {} break;
    case Pass::Fusion: while (fusion_step(g)) {} break;
    case Pass::Dce: dce(g); break;
  }
  infer_shapes(g);
  return g;
}

Graph optimize(const Graph& g, const std::vector<Pass>& passes) {
  Graph out = g;
  for (Pass p : passes) out = run_pass(out, p);
  return out;
}

}  // namespace tpbsim
