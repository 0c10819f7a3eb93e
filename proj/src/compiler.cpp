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

#include "tpbsim/compiler.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <set>

#include "tpbsim/error.hpp"
#include "tpbsim/funits.hpp"

namespace tpbsim {

namespace {

constexpr uint64_t kLine = 32;
constexpr uint64_t kDdrAlign = 256;
constexpr uint32_t kGatherRoutine = 1;
constexpr uint64_t kGatherRoutineCost = 40;

uint64_t align_up(uint64_t v, uint64_t a) { return (v + a - 1) / a * a; }
uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

uint64_t node_bytes(const Node& n) { return static_cast<uint64_t>(numel(n.shape)) * byte_width(n.dtype); }

// Reshape aliasing and the list of ops that become instructions.
struct GraphView {
  const Graph& g;
  std::map<std::string, std::string> root;
  std::vector<std::string> ops;

  explicit GraphView(const Graph& graph) : g(graph) {
    for (const auto& o : g.outputs) {
      const Node& n = g.node(o);
      if (n.kind == OpKind::Input || n.kind == OpKind::Constant)
        fail(ErrorKind::UnsupportedOp, "output '" + o + "' is a graph input or constant; add a copy");
    }
    for (const auto& n : g.nodes) {
      root[n.name] = n.name;
      if (n.kind == OpKind::Input || n.kind == OpKind::Constant) continue;
      if (n.kind == OpKind::Reshape) {
        const std::string& r = root.at(n.inputs[0]);
        const OpKind rk = g.node(r).kind;
        // An output must own its bytes, so a reshaped input or constant is copied.
        const bool copy = g.is_output(n.name) && (rk == OpKind::Input || rk == OpKind::Constant);
        if (!copy) {
          root[n.name] = r;
          continue;
        }
      }
      ops.push_back(n.name);
    }
  }
  const std::string& root_of(const std::string& n) const { return root.at(n); }
  OpKind lowered_kind(const Node& n) const { return n.kind == OpKind::Reshape ? OpKind::Copy : n.kind; }
};

// Elementwise nodes as one CVU chain.
Node fused_form(const Graph& g, const Node& n) {
  if (auto f = as_fused(g, n, 0)) return *f;
  if (auto f = as_fused(g, n, 1)) return *f;
  // Both operands are the same tensor.
  Node f;
  f.name = n.name;
  f.kind = OpKind::Fused;
  f.dtype = n.dtype;
  f.shape = n.shape;
  f.inputs = {n.inputs[0]};
  FusedStep s;
  s.op = n.kind;
  s.operand = 0;
  s.dtype = n.dtype;
  f.steps = {s};
  return f;
}

bool is_cvu_elementwise(OpKind k) { return is_elementwise(k) || k == OpKind::Fused; }

enum class Role : uint8_t { Chunked, Whole, Replicated, Table };

struct Read {
  std::string name;
  Role role;
};

// Tensors an op reads from memory, with how each is addressed.
std::vector<Read> op_reads(const Graph& g, const GraphView& v, const Node& n) {
  switch (v.lowered_kind(n)) {
    case OpKind::Matmul:
    case OpKind::Conv2d: return {{n.inputs[0], Role::Chunked}, {n.inputs[1], Role::Whole}};
    case OpKind::Gather: return {{n.inputs[0], Role::Table}, {n.inputs[1], Role::Chunked}};
    case OpKind::Fill: return {};
    default: break;
  }
  if (is_cvu_elementwise(n.kind)) {
    const Node f = fused_form(g, n);
    std::vector<Read> r{{f.inputs[0], Role::Chunked}};
    if (f.inputs.size() > 1)
      r.push_back({f.inputs[1], g.node(f.inputs[1]).shape == n.shape ? Role::Chunked : Role::Replicated});
    return r;
  }
  return {{n.inputs[0], Role::Chunked}};
}

Unit unit_of(OpKind k) {
  switch (k) {
    case OpKind::Matmul:
    case OpKind::Conv2d: return Unit::TCU;
    case OpKind::Transpose:
    case OpKind::Fill:
    case OpKind::Copy: return Unit::DTDU;
    case OpKind::Gather: return Unit::CSU;
    default: return Unit::CVU;
  }
}

TcuOp tcu_op(const Graph& g, const Node& n, int64_t chunks) {
  const Node& x = g.node(n.inputs[0]);
  const Node& w = g.node(n.inputs[1]);
  TcuOp op;
  op.in_dtype = x.dtype;
  op.acc_dtype = is_float(x.dtype) ? DType::f32 : DType::i32;
  op.out_dtype = n.dtype;
  op.act = n.act;
  op.clamp_lo = n.clamp_lo;
  op.clamp_hi = n.clamp_hi;
  if (n.kind == OpKind::Matmul) {
    op.kind = TcuOp::Kind::Matmul;
    op.k = w.shape[0];
    op.n = w.shape[1];
    op.m = numel(x.shape) / op.k / chunks;
  } else {
    op.kind = TcuOp::Kind::Conv2d;
    op.batch = x.shape[0] / chunks;
    op.height = x.shape[1];
    op.width = x.shape[2];
    op.cin = x.shape[3];
    op.kh = w.shape[0];
    op.kw = w.shape[1];
    op.cout = w.shape[3];
    op.stride = n.stride;
    op.pad = n.pad;
  }
  return op;
}

// Estimated cycles for the whole tensor; only used to balance stages.
uint64_t op_cost(const Graph& g, const GraphView& v, const Node& n, const MachineConfig& cfg) {
  const uint64_t elems = static_cast<uint64_t>(numel(n.shape));
  switch (v.lowered_kind(n)) {
    case OpKind::Matmul:
    case OpKind::Conv2d: return tcu_timing(tcu_op(g, n, 1), cfg).total();
    case OpKind::Softmax:
    case OpKind::Layernorm: return 2 * (cfg.cvu_fill + ceil_div(elems, cfg.cvu_lanes));
    case OpKind::Pool: return cfg.cvu_fill + ceil_div(static_cast<uint64_t>(numel(g.node(n.inputs[0]).shape)), cfg.cvu_lanes);
    case OpKind::Transpose:
    case OpKind::Fill:
    case OpKind::Copy: return ceil_div(node_bytes(n), kLine);
    case OpKind::Gather:
      return cfg.csu_interrupt_overhead + kGatherRoutineCost + ceil_div(elems, cfg.cvu_lanes);
    default: return cfg.cvu_fill + ceil_div(elems, cfg.cvu_lanes);
  }
}

WalkerConfig dense(uint64_t addr, int64_t count, uint32_t width) {
  return strided_walk(static_cast<int64_t>(addr), {count}, {static_cast<int64_t>(width)});
}

CvuOpcode cvu_opcode(OpKind k) {
  switch (k) {
    case OpKind::Add: return CvuOpcode::Add;
    case OpKind::Sub: return CvuOpcode::Sub;
    case OpKind::Mul: return CvuOpcode::Mul;
    case OpKind::Max:
    case OpKind::Relu: return CvuOpcode::Max;
    case OpKind::Min: return CvuOpcode::Min;
    default: return CvuOpcode::Convert;
  }
}

// One CVU stage per fused step, plus a convert after each step whose
// result must be rounded or saturated to a narrower type.
CvuPipeline fused_pipeline(const Graph& g, const Node& f, int64_t elems) {
  using K = CvuOperand::Kind;
  CvuPipeline p;
  p.row_length = f.shape.size() >= 2 ? f.shape.back() : elems;
  p.rows = elems / p.row_length;
  p.a_dtype = g.node(f.inputs[0]).dtype;
  if (f.inputs.size() > 1) p.b_dtype = g.node(f.inputs[1]).dtype;
  p.out_dtype = f.dtype;
  const CvuOperand vec0{K::Vec, 0};
  CvuOperand cur{K::StreamA, 0};
  for (const auto& s : f.steps) {
    CvuStage st;
    st.op = cvu_opcode(s.op);
    st.dst = vec0;
    if (s.op == OpKind::Cast) {
      st.a = cur;
      st.convert_to = s.dtype;
    } else if (s.op == OpKind::Relu) {
      st.a = cur;
      st.b = {K::Imm, 0};
      st.imm = 0;
    } else {
      CvuOperand other{K::Imm, 0};
      if (s.operand == 0) other = {K::StreamA, 0};
      else if (s.operand == 1) other = {K::StreamB, 0};
      else st.imm = s.imm;
      st.a = s.swapped ? other : cur;
      st.b = s.swapped ? cur : other;
    }
    p.stages.push_back(st);
    if (s.op != OpKind::Cast && s.dtype != DType::f32) {
      CvuStage conv;
      conv.op = CvuOpcode::Convert;
      conv.dst = vec0;
      conv.a = vec0;
      conv.convert_to = s.dtype;
      p.stages.push_back(conv);
    }
    cur = vec0;
  }
  p.emit = {vec0};
  return p;
}

std::vector<uint8_t> element_bytes(DType t, double v) {
  std::vector<uint8_t> b(byte_width(t));
  store_element(t, v, b);
  return b;
}

uint32_t cluster_of(const MachineConfig& cfg, uint32_t g) { return g / cfg.tpbs_per_cluster; }
uint32_t local_of(const MachineConfig& cfg, uint32_t g) { return g % cfg.tpbs_per_cluster; }

// ---- lowering ---------------------------------------------------------------

struct Buf {
  enum class Kind : uint8_t { Stream, Resident, Scratch };
  std::string name;
  std::string tensor;
  uint32_t tpb = 0;
  Kind kind = Kind::Stream;
  uint64_t bytes = 0;  // per chunk, or whole for residents
  uint32_t slots = 1;
  std::string binding;  // residents: constant loaded into the buffer
  uint64_t base = 0;
  uint64_t slot_bytes = 0;
};

struct Agent {
  bool dma = false;
  uint32_t index = 0;  // global TPB or DMA engine
  Unit unit = Unit::TCU;
  auto operator<=>(const Agent&) const = default;
};

struct Step {
  std::string name;
  Agent agent;
  std::vector<int> reads;   // stream and scratch buffers
  std::vector<int> writes;
  bool reads_resident = false;
  std::function<TpbInstruction(int64_t)> instr;
  std::function<DmaDescriptor(int64_t)> dma;
};

// Where an operand's data for chunk i sits.
struct Operand {
  int buf = -1;
  uint64_t slice = 0;  // resident chunked constants: bytes per chunk
};

class Lowering {
 public:
  Lowering(const Graph& g, const Placement& pl, const MachineConfig& cfg, const CompileOptions& opt, int64_t chunks)
      : g_(g), view_(g), pl_(pl), cfg_(cfg), opt_(opt), C_(chunks) {}

  // Creates bindings, buffers and steps, then lays out every HBSM.
  void build() {
    collect_needs();
    bind_inputs();
    for (const auto& name : view_.ops) lower_op(g_.node(name));
    for (const auto& [root, tpbs] : input_needs_) add_input_dma(root);
    for (const auto& o : g_.outputs) add_output_dma(o);
    bind_outputs();
    layout();
  }

  std::map<uint32_t, uint64_t> footprint() const { return footprint_; }
  std::map<std::string, uint64_t> chunk_bytes() const {
    std::map<std::string, uint64_t> m;
    for (const auto& b : bufs_)
      if (b.kind == Buf::Kind::Stream) m[b.tensor] = b.bytes;
    return m;
  }

  ScheduledProgram finish() {
    assign_sync();
    return emit_program();
  }

 private:
  uint32_t tpb_of(const std::string& op) const { return pl_.tpb.at(op); }
  uint64_t chunk_of(const std::string& tensor) const { return node_bytes(g_.node(tensor)) / static_cast<uint64_t>(C_); }
  uint32_t slots() const { return static_cast<uint32_t>(std::min<int64_t>(C_, 2)); }

  int add_buf(Buf b) {
    bufs_.push_back(std::move(b));
    return static_cast<int>(bufs_.size() - 1);
  }

  // Which TPBs read each computed or input tensor.
  void collect_needs() {
    for (const auto& name : view_.ops) {
      const Node& n = g_.node(name);
      for (const auto& r : op_reads(g_, view_, n)) {
        if (r.role != Role::Chunked) continue;
        const std::string& root = view_.root_of(r.name);
        const OpKind k = g_.node(root).kind;
        if (k == OpKind::Constant) continue;
        if (k == OpKind::Input) input_needs_[root].insert(tpb_of(name));
        else if (tpb_of(root) != tpb_of(name)) remote_needs_[root].insert(tpb_of(name));
      }
    }
  }

  uint64_t bind(TensorBinding t) {
    t.ddr_addr = ddr_cursor_;
    ddr_cursor_ = align_up(ddr_cursor_ + t.bytes(), kDdrAlign);
    bindings_.push_back(std::move(t));
    return bindings_.back().ddr_addr;
  }

  const TensorBinding& binding(const std::string& name, TensorBinding::Role role) const {
    for (const auto& b : bindings_)
      if (b.name == name && b.role == role) return b;
    fail(ErrorKind::Internal, "no binding for " + name);
  }

  void bind_inputs() {
    for (const auto& n : g_.nodes)
      if (n.kind == OpKind::Input) bind({TensorBinding::Role::Input, n.name, n.dtype, n.shape, 0, {}});
  }

  void bind_outputs() {
    for (const auto& o : g_.outputs) {
      const Node& n = g_.node(o);
      bind({TensorBinding::Role::Output, o, n.dtype, n.shape, 0, {}});
    }
  }

  void bind_constant(const std::string& name, DType t, std::vector<int64_t> shape, std::vector<uint8_t> data) {
    for (const auto& b : bindings_)
      if (b.name == name && b.role == TensorBinding::Role::Constant) return;
    bind({TensorBinding::Role::Constant, name, t, std::move(shape), 0, std::move(data)});
  }

  int resident(const std::string& binding_name, uint32_t tpb) {
    auto key = std::make_pair(binding_name, tpb);
    if (auto it = residents_.find(key); it != residents_.end()) return it->second;
    const auto& b = binding(binding_name, TensorBinding::Role::Constant);
    Buf buf;
    buf.name = binding_name + "@" + std::to_string(tpb);
    buf.tensor = binding_name;
    buf.tpb = tpb;
    buf.kind = Buf::Kind::Resident;
    buf.bytes = b.bytes();
    buf.binding = binding_name;
    const int id = add_buf(buf);
    residents_[key] = id;
    return id;
  }

  Operand operand(const Read& r, const Node& op, uint32_t tpb) {
    const std::string& root = view_.root_of(r.name);
    const Node& rn = g_.node(root);
    if (rn.kind == OpKind::Constant) {
      if (r.role == Role::Replicated) {
        // Tile the broadcast operand to one chunk of the consumer.
        const std::string rep = root + ".x" + std::to_string(numel(op.shape) / C_);
        const int64_t elems = numel(op.shape) / C_;
        const size_t eb = byte_width(rn.dtype);
        std::vector<uint8_t> data(static_cast<size_t>(elems) * eb);
        for (size_t i = 0; i < data.size(); ++i) data[i] = rn.data[i % rn.data.size()];
        bind_constant(rep, rn.dtype, {elems}, std::move(data));
        return {resident(rep, tpb), 0};
      }
      bind_constant(root, rn.dtype, rn.shape, rn.data);
      return {resident(root, tpb), r.role == Role::Chunked ? node_bytes(rn) / static_cast<uint64_t>(C_) : 0};
    }
    if (rn.kind == OpKind::Input || tpb_of(root) != tpb) return {replica(root, tpb), 0};
    return {home_.at(root), 0};
  }

  int replica(const std::string& root, uint32_t tpb) {
    auto key = std::make_pair(root, tpb);
    if (auto it = replicas_.find(key); it != replicas_.end()) return it->second;
    Buf b;
    b.name = root + "@" + std::to_string(tpb);
    b.tensor = root;
    b.tpb = tpb;
    b.bytes = chunk_of(root);
    b.slots = slots();
    const int id = add_buf(b);
    replicas_[key] = id;
    return id;
  }

  uint64_t addr(const Operand& o, int64_t i) const {
    const Buf& b = bufs_[o.buf];
    if (b.kind == Buf::Kind::Resident) return b.base + static_cast<uint64_t>(i) * o.slice;
    return b.base + static_cast<uint64_t>(i % b.slots) * b.slot_bytes;
  }

  int new_stream(const std::string& tensor, uint32_t tpb, uint64_t bytes, Buf::Kind kind, uint32_t slots,
                 const std::string& name) {
    Buf b;
    b.name = name;
    b.tensor = tensor;
    b.tpb = tpb;
    b.kind = kind;
    b.bytes = bytes;
    b.slots = slots;
    return add_buf(b);
  }

  TpbInstruction instr(uint32_t tpb, OpDescriptor op, std::vector<WalkerConfig> in, std::optional<WalkerConfig> out) {
    TpbInstruction t;
    t.mask = TpbMask::single(tpb);
    t.op = std::move(op);
    t.in_walkers = std::move(in);
    t.out_walker = std::move(out);
    return t;
  }

  void add_step(const std::string& name, uint32_t tpb, Unit unit, std::vector<Operand> reads, std::vector<int> writes,
                std::function<TpbInstruction(int64_t)> fn) {
    Step s;
    s.name = name;
    s.agent = {false, tpb, unit};
    for (const auto& o : reads) {
      if (bufs_[o.buf].kind == Buf::Kind::Resident) s.reads_resident = true;
      else s.reads.push_back(o.buf);
    }
    s.writes = std::move(writes);
    s.instr = std::move(fn);
    steps_.push_back(std::move(s));
  }

  void lower_op(const Node& n) {
    const uint32_t t = tpb_of(n.name);
    const auto reads = op_reads(g_, view_, n);
    std::vector<Operand> ops;
    for (const auto& r : reads)
      if (r.role != Role::Table) ops.push_back(operand(r, n, t));
    const int out = new_stream(n.name, t, chunk_of(n.name), Buf::Kind::Stream, slots(), n.name + "@" + std::to_string(t));
    home_[n.name] = out;
    const Operand o{out, 0};
    const uint32_t ob = byte_width(n.dtype);
    const int64_t out_elems = numel(n.shape) / C_;
    const OpKind kind = view_.lowered_kind(n);

    switch (kind) {
      case OpKind::Matmul:
      case OpKind::Conv2d: {
        const TcuOp op = tcu_op(g_, n, C_);
        const uint32_t ib = byte_width(op.in_dtype);
        add_step(n.name, t, Unit::TCU, ops, {out}, [=, this](int64_t i) {
          return instr(t, op, {dense(addr(ops[0], i), op.act_elems(), ib), dense(addr(ops[1], i), op.wt_elems(), ib)},
                       dense(addr(o, i), op.out_elems(), ob));
        });
        break;
      }
      case OpKind::Softmax:
      case OpKind::Layernorm: {
        const Node& x = g_.node(n.inputs[0]);
        const int64_t len = n.shape.back();
        const int64_t rows = out_elems / len;
        const bool sm = kind == OpKind::Softmax;
        const CvuPipeline stats =
            sm ? recipes::softmax_stats(rows, len, x.dtype) : recipes::layernorm_stats(rows, len, x.dtype, n.eps);
        const CvuPipeline norm = sm ? recipes::softmax_normalize(rows, len, x.dtype, n.dtype)
                                    : recipes::layernorm_normalize(rows, len, x.dtype, n.dtype);
        const int sb = new_stream(n.name + ".stats", t, static_cast<uint64_t>(rows) * 8, Buf::Kind::Scratch, 1,
                                  n.name + ".stats@" + std::to_string(t));
        const Operand so{sb, 0};
        const uint32_t xb = byte_width(x.dtype);
        add_step(n.name + ".stats", t, Unit::CVU, ops, {sb}, [=, this](int64_t i) {
          return instr(t, stats, {dense(addr(ops[0], i), stats.in_elems(), xb)}, dense(addr(so, i), rows * 2, 4));
        });
        add_step(n.name, t, Unit::CVU, {ops[0], so}, {out}, [=, this](int64_t i) {
          return instr(t, norm, {dense(addr(ops[0], i), norm.in_elems(), xb), dense(addr(so, i), rows * 2, 4)},
                       dense(addr(o, i), out_elems, ob));
        });
        break;
      }
      case OpKind::Pool: {
        const Node& x = g_.node(n.inputs[0]);
        const int64_t k = n.window, W = x.shape[2], Ch = x.shape[3];
        const int64_t B = n.shape[0] / C_, OH = n.shape[1], OW = n.shape[2];
        const int64_t rows = B * OH * OW * Ch;
        const int64_t w = byte_width(x.dtype);
        const CvuPipeline p = n.pool == PoolKind::Max ? recipes::pool_max(rows, k * k, x.dtype, n.dtype)
                                                      : recipes::pool_avg(rows, k * k, x.dtype, n.dtype);
        const std::vector<int64_t> strides{x.shape[1] * W * Ch * w, k * W * Ch * w, k * Ch * w, w, W * Ch * w, Ch * w};
        add_step(n.name, t, Unit::CVU, ops, {out}, [=, this](int64_t i) {
          return instr(t, p, {strided_walk(static_cast<int64_t>(addr(ops[0], i)), {B, OH, OW, Ch, k, k}, strides)},
                       dense(addr(o, i), rows, ob));
        });
        break;
      }
      case OpKind::Transpose:
      case OpKind::Copy:
      case OpKind::Fill: {
        DtduOp op;
        op.elem_bytes = ob;
        if (kind == OpKind::Transpose) {
          op.kind = DtduOp::Kind::Transpose2d;
          op.rows = n.shape[1];
          op.cols = n.shape[0];
        } else if (kind == OpKind::Fill) {
          op.kind = DtduOp::Kind::Fill;
          op.fill_pattern = element_bytes(n.dtype, n.value);
        }
        add_step(n.name, t, Unit::DTDU, ops, {out}, [=, this](int64_t i) {
          std::vector<WalkerConfig> in;
          if (!ops.empty()) in.push_back(dense(addr(ops[0], i), out_elems, ob));
          return instr(t, op, in, dense(addr(o, i), out_elems, ob));
        });
        break;
      }
      case OpKind::Gather: {
        const Node& table = g_.node(n.inputs[0]);
        const auto role = table.kind == OpKind::Constant ? TensorBinding::Role::Constant : TensorBinding::Role::Input;
        if (role == TensorBinding::Role::Constant) bind_constant(table.name, table.dtype, table.shape, table.data);
        const uint64_t table_addr = binding(table.name, role).ddr_addr;
        const int64_t count = numel(g_.node(n.inputs[1]).shape) / C_;
        const uint32_t row_bytes = static_cast<uint32_t>(node_bytes(table) / static_cast<uint64_t>(table.shape[0]));
        needs_gather_ = true;
        add_step(n.name, t, Unit::CSU, ops, {out}, [=, this](int64_t i) {
          GatherScatterPlan gp;
          gp.index_addr = addr(ops[0], i);
          gp.count = static_cast<uint64_t>(count);
          gp.local_addr = addr(o, i);
          gp.remote = AddressSpace::ddr();
          gp.remote_base = table_addr;
          gp.remote_elems = static_cast<uint64_t>(table.shape[0]);
          gp.elem_bytes = row_bytes;
          return instr(t, CsuOp{kGatherRoutine, encode_gsdu_args(gp)}, {}, std::nullopt);
        });
        break;
      }
      default: {
        const Node f = fused_form(g_, n);
        const CvuPipeline p = fused_pipeline(g_, f, out_elems);
        const uint32_t ab = byte_width(p.a_dtype);
        const uint32_t bb = p.b_dtype ? byte_width(*p.b_dtype) : 0;
        add_step(n.name, t, Unit::CVU, ops, {out}, [=, this](int64_t i) {
          std::vector<WalkerConfig> in{dense(addr(ops[0], i), out_elems, ab)};
          if (ops.size() > 1) in.push_back(dense(addr(ops[1], i), out_elems, bb));
          return instr(t, p, in, dense(addr(o, i), out_elems, ob));
        });
      }
    }
    add_transfer(n.name);
  }

  // One DTDU copy fans a tensor out to every other TPB that reads it.
  void add_transfer(const std::string& root) {
    auto it = remote_needs_.find(root);
    if (it == remote_needs_.end()) return;
    const uint32_t t = tpb_of(root);
    const Operand src{home_.at(root), 0};
    std::vector<int> dsts;
    for (uint32_t q : it->second) dsts.push_back(replica(root, q));
    const Node& n = g_.node(root);
    const uint32_t eb = byte_width(n.dtype);
    const int64_t elems = numel(n.shape) / C_;
    add_step(root + ".xfer", t, Unit::DTDU, {src}, dsts, [=, this](int64_t i) {
      DtduOp op;
      op.elem_bytes = eb;
      for (int d : dsts) {
        const Buf& b = bufs_[d];
        op.dests.push_back({cluster_of(cfg_, b.tpb), local_of(cfg_, b.tpb), b.base});
      }
      const uint64_t offset = static_cast<uint64_t>(i % bufs_[dsts[0]].slots) * bufs_[dsts[0]].slot_bytes;
      return instr(t, op, {dense(addr(src, i), elems, eb)}, dense(offset, elems, eb));
    });
  }

  void add_input_dma(const std::string& root) {
    std::vector<int> dsts;
    for (uint32_t q : input_needs_.at(root)) dsts.push_back(replica(root, q));
    const uint64_t base = binding(root, TensorBinding::Role::Input).ddr_addr;
    const uint64_t bytes = chunk_of(root);
    Step s;
    s.name = root + ".in";
    s.agent = {true, 0, Unit::TCU};
    s.writes = dsts;
    s.dma = [=, this](int64_t i) {
      DmaDescriptor d;
      d.engine = 0;
      d.src_space = AddressSpace::ddr();
      d.src_addr = base + static_cast<uint64_t>(i) * bytes;
      for (int id : dsts) {
        const Buf& b = bufs_[id];
        d.dsts.push_back({AddressSpace::hbsm(cluster_of(cfg_, b.tpb), local_of(cfg_, b.tpb)), addr({id, 0}, i)});
      }
      d.broadcast = d.dsts.size() > 1;
      d.bytes = bytes;
      return d;
    };
    input_steps_.push_back(steps_.size());
    steps_.push_back(std::move(s));
  }

  void add_output_dma(const std::string& out) {
    const std::string& root = view_.root_of(out);
    const int src = home_.at(root);
    const uint64_t bytes = chunk_of(root);
    const uint32_t engine = cfg_.ccb_dma_engines > 1 ? 1 : 0;
    Step s;
    s.name = out + ".out";
    s.agent = {true, engine, Unit::TCU};
    s.reads = {src};
    s.dma = [=, this](int64_t i) {
      const Buf& b = bufs_[src];
      DmaDescriptor d;
      d.engine = engine;
      d.src_space = AddressSpace::hbsm(cluster_of(cfg_, b.tpb), local_of(cfg_, b.tpb));
      d.src_addr = addr({src, 0}, i);
      d.dsts = {{AddressSpace::ddr(), binding(out, TensorBinding::Role::Output).ddr_addr + static_cast<uint64_t>(i) * bytes}};
      d.bytes = bytes;
      return d;
    };
    output_steps_.push_back(steps_.size());
    steps_.push_back(std::move(s));
  }

  // Residents first, then streamed slots, each line aligned.
  void layout() {
    std::map<uint32_t, uint64_t> cursor;
    for (int pass = 0; pass < 2; ++pass)
      for (auto& b : bufs_) {
        if ((b.kind == Buf::Kind::Resident) != (pass == 0)) continue;
        b.slot_bytes = align_up(b.bytes, kLine);
        b.base = cursor[b.tpb];
        cursor[b.tpb] += b.slot_bytes * b.slots;
      }
    footprint_ = cursor;
  }

  // ---- sync ---------------------------------------------------------------

  struct CounterSlot {
    bool ccb = false;
    uint32_t tpb = 0;
    uint32_t index = 0;
  };

  CounterSlot new_counter(bool ccb, uint32_t tpb, const std::string& name) {
    uint32_t& next = ccb ? ccb_next_ : tpb_next_[tpb];
    if (next >= cfg_.sync_counters)
      fail(ErrorKind::OutOfCounters, std::string("more than ") + std::to_string(cfg_.sync_counters) +
                                         " counters needed on " + (ccb ? "the CCB" : "TPB " + std::to_string(tpb)));
    CounterSlot c{ccb, tpb, next++};
    counter_names_.push_back({name, global_ref(c)});
    return c;
  }

  CounterRef global_ref(const CounterSlot& c) const {
    return c.ccb ? CounterRef::ccb(c.index) : CounterRef::at(cluster_of(cfg_, c.tpb), local_of(cfg_, c.tpb), c.index);
  }
  CounterRef ref_from(const Agent& a, const CounterSlot& c) const {
    if (!a.dma && !c.ccb && c.tpb == a.index) return CounterRef::local(c.index);
    return global_ref(c);
  }

  void assign_sync() {
    done_ = new_counter(true, 0, "done");
    // Constant loads land before any reader starts.
    for (const auto& b : bufs_)
      if (b.kind == Buf::Kind::Resident) ++const_count_[b.tpb];
    for (const auto& [tpb, k] : const_count_) consts_[tpb] = new_counter(false, tpb, "consts@" + std::to_string(tpb));

    std::map<int, size_t> producer;
    for (size_t s = 0; s < steps_.size(); ++s)
      for (int b : steps_[s].writes) {
        if (producer.count(b)) fail(ErrorKind::Internal, "buffer " + bufs_[b].name + " has two producers");
        producer[b] = s;
      }
    // Readers on another agent: the buffer needs a ready counter and the
    // producer a free counter per reading agent, bumped by its last reader.
    std::set<int> needs_ready;
    std::map<std::pair<size_t, Agent>, size_t> last_reader;
    for (const size_t s : emission_order()) {
      for (int b : steps_[s].reads) {
        const size_t p = producer.at(b);
        if (steps_[p].agent == steps_[s].agent) continue;
        needs_ready.insert(b);
        last_reader[{p, steps_[s].agent}] = s;
      }
    }
    for (int b = 0; b < static_cast<int>(bufs_.size()); ++b)
      if (needs_ready.count(b)) ready_[b] = new_counter(false, bufs_[b].tpb, bufs_[b].name + ".ready");
    for (const auto& [key, reader] : last_reader) {
      const Step& p = steps_[key.first];
      CounterSlot c = new_counter(p.agent.dma, p.agent.dma ? 0 : p.agent.index,
                                  p.name + ".free." + steps_[reader].name);
      free_[key.first].push_back(c);
      frees_by_reader_[reader].push_back(c);
    }
    producer_ = std::move(producer);
  }

  struct Syncs {
    std::vector<std::pair<CounterSlot, uint64_t>> monitors;
    std::vector<CounterSlot> updates;
  };

  Syncs syncs_for(size_t s, int64_t i) const {
    const Step& st = steps_[s];
    Syncs out;
    if (auto it = free_.find(s); it != free_.end()) {
      const int64_t need = i - static_cast<int64_t>(bufs_[st.writes[0]].slots) + 1;
      if (need > 0)
        for (const auto& c : it->second) out.monitors.push_back({c, static_cast<uint64_t>(need)});
    }
    std::set<int> seen;
    for (int b : st.reads)
      if (auto it = ready_.find(b); it != ready_.end() && seen.insert(b).second &&
                                    steps_[producer_.at(b)].agent != st.agent)
        out.monitors.push_back({it->second, static_cast<uint64_t>(i + 1)});
    if (st.reads_resident && i == 0) {
      const uint32_t t = st.agent.index;
      out.monitors.push_back({consts_.at(t), const_count_.at(t)});
    }
    for (int b : st.writes)
      if (auto it = ready_.find(b); it != ready_.end()) out.updates.push_back(it->second);
    if (auto it = frees_by_reader_.find(s); it != frees_by_reader_.end())
      for (const auto& c : it->second) out.updates.push_back(c);
    return out;
  }

  // Within a chunk: input DMAs, instructions in op order, output DMAs.
  std::vector<size_t> emission_order() const {
    std::vector<size_t> order(input_steps_.begin(), input_steps_.end());
    for (size_t s = 0; s < steps_.size(); ++s)
      if (!steps_[s].agent.dma) order.push_back(s);
    order.insert(order.end(), output_steps_.begin(), output_steps_.end());
    return order;
  }

  ScheduledProgram emit_program() {
    ScheduledProgram p;
    p.chunks = C_;
    p.dispatcher = opt_.dispatcher;
    for (uint32_t s = 0; s < pl_.stages; ++s) p.tpbs.push_back(opt_.first_tpb + s);
    p.tensors = bindings_;
    if (needs_gather_) p.routines.push_back({kGatherRoutine, "launch_gsdu", RoutineBehavior::LaunchGsdu, kGatherRoutineCost});
    for (const auto& b : bufs_) p.buffers.push_back({b.name, b.tensor, b.tpb, b.base, b.slot_bytes, b.slots});
    p.counters = counter_names_;

    // Constants: one descriptor per constant, ring broadcast when shared.
    std::map<std::string, std::vector<int>> holders;
    std::vector<std::string> order;
    for (int id = 0; id < static_cast<int>(bufs_.size()); ++id)
      if (bufs_[id].kind == Buf::Kind::Resident) {
        if (!holders.count(bufs_[id].binding)) order.push_back(bufs_[id].binding);
        holders[bufs_[id].binding].push_back(id);
      }
    for (const auto& name : order) {
      const auto& bind = binding(name, TensorBinding::Role::Constant);
      DmaDescriptor d;
      d.engine = 0;
      d.src_space = AddressSpace::ddr();
      d.src_addr = bind.ddr_addr;
      d.bytes = bind.bytes();
      for (int id : holders[name]) {
        const Buf& b = bufs_[id];
        d.dsts.push_back({AddressSpace::hbsm(cluster_of(cfg_, b.tpb), local_of(cfg_, b.tpb)), b.base});
        d.updates.push_back(global_ref(consts_.at(b.tpb)));
      }
      d.broadcast = d.dsts.size() > 1;
      p.dma.push_back(d);
    }

    std::map<std::pair<uint32_t, Unit>, uint64_t> seq;
    const auto order_steps = emission_order();
    for (int64_t i = 0; i < C_; ++i) {
      for (const size_t s : order_steps) {
        const Step& st = steps_[s];
        const Syncs sy = syncs_for(s, i);
        if (st.agent.dma) {
          DmaDescriptor d = st.dma(i);
          for (const auto& [c, e] : sy.monitors) d.waits.push_back({global_ref(c), e});
          for (const auto& c : sy.updates) d.updates.push_back(global_ref(c));
          if (std::find(output_steps_.begin(), output_steps_.end(), s) != output_steps_.end())
            d.updates.push_back(global_ref(done_));
          p.dma.push_back(d);
          continue;
        }
        TpbInstruction in = st.instr(i);
        for (const auto& [c, e] : sy.monitors) in.syncs.push_back(SyncAction::monitor(ref_from(st.agent, c), e));
        for (const auto& c : sy.updates) in.syncs.push_back(SyncAction::update(ref_from(st.agent, c)));
        in.seq = seq[{st.agent.index, st.agent.unit}]++;
        p.instructions.push_back(finalize(std::move(in)));
      }
    }
    p.done = {{global_ref(done_), static_cast<uint64_t>(C_) * output_steps_.size()}};
    return p;
  }

  const Graph& g_;
  GraphView view_;
  const Placement& pl_;
  const MachineConfig& cfg_;
  const CompileOptions& opt_;
  int64_t C_;

  std::vector<TensorBinding> bindings_;
  uint64_t ddr_cursor_ = 0;
  std::vector<Buf> bufs_;
  std::vector<Step> steps_;
  std::vector<size_t> input_steps_, output_steps_;
  std::map<std::string, std::set<uint32_t>> input_needs_, remote_needs_;
  std::map<std::string, int> home_;
  std::map<std::pair<std::string, uint32_t>, int> replicas_, residents_;
  std::map<uint32_t, uint64_t> footprint_;
  bool needs_gather_ = false;

  uint32_t ccb_next_ = 0;
  std::map<uint32_t, uint32_t> tpb_next_;
  std::vector<NamedCounter> counter_names_;
  CounterSlot done_;
  std::map<uint32_t, uint64_t> const_count_;
  std::map<uint32_t, CounterSlot> consts_;
  std::map<int, CounterSlot> ready_;
  std::map<size_t, std::vector<CounterSlot>> free_;
  std::map<size_t, std::vector<CounterSlot>> frees_by_reader_;
  std::map<int, size_t> producer_;
};

uint64_t hbsm_budget(const MachineConfig& cfg, double margin) {
  return static_cast<uint64_t>(static_cast<double>(cfg.hbsm_bytes) * (1.0 - margin));
}

bool fits(const std::map<uint32_t, uint64_t>& footprint, uint64_t budget) {
  return std::all_of(footprint.begin(), footprint.end(), [&](const auto& kv) { return kv.second <= budget; });
}

}  // namespace

Placement place(const Graph& g, const MachineConfig& cfg, const CompileOptions& opt) {
  if (opt.tpbs == 0 || opt.first_tpb + opt.tpbs > cfg.total_tpbs())
    fail(ErrorKind::TooFewTpbs, "asked for " + std::to_string(opt.tpbs) + " TPBs from index " +
                                    std::to_string(opt.first_tpb) + " on a machine with " +
                                    std::to_string(cfg.total_tpbs()));
  const GraphView v(g);
  Placement p;
  p.ops = v.ops;
  uint64_t total = 0;
  for (const auto& name : p.ops) {
    const Node& n = g.node(name);
    p.cost[name] = op_cost(g, v, n, cfg);
    p.unit[name] = unit_of(v.lowered_kind(n));
    total += p.cost[name];
  }
  const auto n = static_cast<uint32_t>(p.ops.size());
  const uint32_t T = std::min(opt.tpbs, std::max<uint32_t>(n, 1));
  const double target = static_cast<double>(total) / T;
  uint32_t stage = 0;
  double acc = 0;
  for (uint32_t k = 0; k < n; ++k) {
    const auto c = static_cast<double>(p.cost[p.ops[k]]);
    const uint32_t stages_left = T - 1 - stage;
    const uint32_t ops_left = n - k;
    if (k > 0 && stages_left > 0 && (ops_left <= stages_left || (acc > 0 && acc + c > target * 1.0001 && acc + c / 2 > target))) {
      ++stage;
      acc = 0;
    }
    acc += c;
    p.stage[p.ops[k]] = stage;
    p.tpb[p.ops[k]] = opt.first_tpb + stage;
  }
  p.stages = n ? stage + 1 : 1;
  return p;
}

std::vector<int64_t> chunk_candidates(const Graph& g) {
  const GraphView v(g);
  int64_t common = 0;
  bool single = false;
  for (const auto& name : v.ops) {
    const Node& n = g.node(name);
    if (n.kind == OpKind::Transpose) single = true;
    if ((n.kind == OpKind::Softmax || n.kind == OpKind::Layernorm) && n.shape.size() == 1) single = true;
    common = std::gcd(common, n.shape[0]);
    for (const auto& r : op_reads(g, v, n))
      if (r.role == Role::Chunked) {
        common = std::gcd(common, g.node(r.name).shape[0]);
        common = std::gcd(common, g.node(v.root_of(r.name)).shape[0]);
      }
  }
  for (const auto& o : g.outputs) common = std::gcd(common, g.node(o).shape[0]);
  if (single || common == 0) return {1};
  std::vector<int64_t> out;
  for (int64_t d = 1; d <= common; ++d)
    if (common % d == 0) out.push_back(d);
  return out;
}

std::pair<PartitionPlan, Placement> partition_and_place(const Graph& g, const MachineConfig& cfg,
                                                        const CompileOptions& opt) {
  Placement pl = place(g, cfg, opt);
  const auto candidates = chunk_candidates(g);
  const uint64_t budget = hbsm_budget(cfg, opt.scratch_margin);
  auto attempt = [&](int64_t c) -> std::optional<PartitionPlan> {
    Lowering l(g, pl, cfg, opt, c);
    l.build();
    PartitionPlan plan;
    plan.chunks = c;
    plan.chunk_bytes = l.chunk_bytes();
    plan.footprint = l.footprint();
    plan.budget = budget;
    if (!fits(plan.footprint, budget)) return std::nullopt;
    return plan;
  };
  const int64_t requested = opt.chunks ? opt.chunks : g.chunks;
  if (requested) {
    if (std::find(candidates.begin(), candidates.end(), requested) == candidates.end())
      fail(ErrorKind::ShapeMismatch, "chunk count " + std::to_string(requested) +
                                         (candidates.size() == 1 ? " requested but the graph must run as one chunk"
                                                                 : " does not divide every streamed tensor"));
    if (auto plan = attempt(requested)) return {*plan, pl};
    fail(ErrorKind::DoesNotFit, "buffers for " + std::to_string(requested) + " chunks exceed the HBSM budget");
  }
  for (int64_t c : candidates)
    if (auto plan = attempt(c)) return {*plan, pl};
  fail(ErrorKind::DoesNotFit, "no chunk count fits the HBSM budget of " + std::to_string(budget) + " bytes");
}

ScheduledProgram emit(const Graph& g, const PartitionPlan& plan, const Placement& placement, const MachineConfig& cfg,
                      const CompileOptions& opt) {
  Lowering l(g, placement, cfg, opt, plan.chunks);
  l.build();
  ScheduledProgram p = l.finish();
  validate_program(p, cfg);
  return p;
}

ScheduledProgram compile(const Graph& g, const MachineConfig& cfg, const CompileOptions& opt) {
  const Graph o = optimize(g, opt.passes);
  const auto [plan, placement] = partition_and_place(o, cfg, opt);
  return emit(o, plan, placement, cfg, opt);
}

namespace {

struct EstNode {
  uint32_t agent = 0;
  uint64_t cost = 0;
  uint64_t ready = 0;  // earliest start from instruction delivery
  std::vector<std::pair<CounterRef, uint64_t>> waits;
  std::vector<std::pair<CounterRef, uint64_t>> updates;  // target, message latency
};

uint64_t walker_bytes(const WalkerConfig& w, uint64_t width) { return walker_total(w) * width; }

uint64_t instruction_cost(const TpbInstruction& in, const MachineConfig& cfg) {
  const uint64_t line = cfg.hbsm_bank_width;
  uint64_t compute = 0;
  std::vector<uint64_t> port_bytes;
  if (const auto* op = std::get_if<TcuOp>(&in.op)) {
    compute = tcu_timing(*op, cfg).total();
    for (const auto& w : in.in_walkers) port_bytes.push_back(walker_bytes(w, byte_width(op->in_dtype)));
    if (in.out_walker) port_bytes.push_back(walker_bytes(*in.out_walker, byte_width(op->out_dtype)));
  } else if (const auto* p = std::get_if<CvuPipeline>(&in.op)) {
    compute = cvu_cycles(*p, cfg);
    if (!in.in_walkers.empty()) port_bytes.push_back(walker_bytes(in.in_walkers[0], byte_width(p->a_dtype)));
    if (in.in_walkers.size() > 1)
      port_bytes.push_back(walker_bytes(in.in_walkers[1], byte_width(p->b_dtype.value_or(DType::f32))));
    if (in.out_walker) port_bytes.push_back(walker_bytes(*in.out_walker, byte_width(p->out_dtype)));
  } else if (const auto* d = std::get_if<DtduOp>(&in.op)) {
    // One port carries both directions.
    uint64_t b = 0;
    for (const auto& w : in.in_walkers) b += walker_bytes(w, d->elem_bytes);
    if (in.out_walker && d->dests.empty()) b += walker_bytes(*in.out_walker, d->elem_bytes);
    port_bytes.push_back(b);
    compute = 1;
  } else {
    compute = cfg.csu_interrupt_overhead;
  }
  uint64_t traffic = 0;
  for (uint64_t b : port_bytes) traffic = std::max(traffic, ceil_div(b, line));
  return std::max(compute, traffic);
}

uint64_t dma_cost(const DmaDescriptor& d, const MachineConfig& cfg) {
  uint64_t rate = d.broadcast ? cfg.drb_aggregate_bytes_per_cycle : cfg.mesh_pair_bytes_per_cycle;
  const bool ddr = d.src_space.kind == SpaceKind::DDR ||
                   std::any_of(d.dsts.begin(), d.dsts.end(), [](const DmaTarget& t) { return t.space.kind == SpaceKind::DDR; });
  if (ddr) rate = std::min<uint64_t>(rate, cfg.ddr_bytes_per_cycle);
  return ceil_div(d.bytes, std::max<uint64_t>(rate, 1));
}

}  // namespace

uint64_t estimate_latency(const ScheduledProgram& p, const MachineConfig& cfg) {
  std::vector<EstNode> nodes;
  const uint32_t per = cfg.tpbs_per_cluster;
  const uint32_t dma_base = cfg.total_tpbs() * kUnitCount;
  for (const auto& d : p.dma) {
    EstNode n;
    n.agent = dma_base + d.engine;
    n.cost = dma_cost(d, cfg);
    for (const auto& w : d.waits) n.waits.push_back({w.counter, w.expected});
    for (const auto& u : d.updates) n.updates.push_back({u, endpoint_latency(cfg, Endpoint::of_ccb(), endpoint_of(u))});
    nodes.push_back(std::move(n));
  }
  uint64_t chain = 0;
  for (const auto& in : p.instructions) {
    chain += transmit_cycles(in.encoded_bits, cfg.icb_bits_per_cycle);
    for (uint32_t g : in.mask.members()) {
      const uint32_t c = g / per, t = g % per;
      EstNode n;
      n.agent = g * kUnitCount + static_cast<uint32_t>(in.unit);
      n.cost = instruction_cost(in, cfg);
      n.ready = chain + uint64_t{c + 1} * cfg.icb_hop_latency;
      for (const auto& s : in.syncs) {
        const CounterRef ref = s.counter.resolve(c, t);
        if (s.kind == SyncKind::Monitor) n.waits.push_back({ref, s.expected});
        else n.updates.push_back({ref, endpoint_latency(cfg, Endpoint::of_tpb(c, t), endpoint_of(ref))});
      }
      nodes.push_back(std::move(n));
    }
  }
  // Relax start times to a fixed point: a node starts after its agent's
  // previous node and after the expected-th earliest arrival of each
  // counter it waits on.
  std::vector<uint64_t> finish(nodes.size(), 0);
  for (size_t round = 0; round <= nodes.size(); ++round) {
    std::map<CounterRef, std::vector<uint64_t>> arrivals;
    for (size_t i = 0; i < nodes.size(); ++i)
      for (const auto& [ref, lat] : nodes[i].updates) arrivals[ref].push_back(finish[i] + lat);
    for (auto& [ref, v] : arrivals) std::sort(v.begin(), v.end());
    bool changed = false;
    std::map<uint32_t, uint64_t> agent_free;
    for (size_t i = 0; i < nodes.size(); ++i) {
      const EstNode& n = nodes[i];
      uint64_t start = std::max(n.ready, agent_free[n.agent]);
      for (const auto& [ref, expected] : n.waits) {
        if (expected == 0) continue;
        auto it = arrivals.find(ref);
        if (it != arrivals.end() && it->second.size() >= expected) start = std::max(start, it->second[expected - 1]);
      }
      const uint64_t f = start + n.cost;
      if (f != finish[i]) changed = true;
      finish[i] = f;
      agent_free[n.agent] = f;
    }
    if (!changed) break;
  }
  uint64_t makespan = 0;
  for (uint64_t f : finish) makespan = std::max(makespan, f);
  return makespan;
}

}  // namespace tpbsim
