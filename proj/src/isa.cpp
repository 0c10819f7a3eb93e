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

#include "tpbsim/isa.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "tpbsim/error.hpp"
#include "text.hpp"

namespace tpbsim {

namespace {

using text::fmt_double;
using text::parse_fail;
using text::split;
using text::to_double;
using text::to_dtype;
using text::to_int;

// "name{k=v;k=v}" -> name + ordered map
std::pair<std::string, std::map<std::string, std::string>> split_record(const std::string& text) {
  const auto open = text.find('{');
  if (open == std::string::npos || text.back() != '}') parse_fail("bad op record '" + text + "'");
  std::map<std::string, std::string> kv;
  const std::string body = text.substr(open + 1, text.size() - open - 2);
  if (!body.empty()) {
    for (const auto& item : split(body, ';')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) parse_fail("bad op field '" + item + "'");
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  return {text.substr(0, open), std::move(kv)};
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) parse_fail("missing op field '" + key + "'");
  return it->second;
}

std::string hex(const std::vector<uint8_t>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (uint8_t b : bytes) {
    out += digits[b >> 4];
    out += digits[b & 15];
  }
  return out;
}

std::vector<uint8_t> unhex(const std::string& s) {
  if (s.size() % 2) parse_fail("odd hex string");
  std::vector<uint8_t> out;
  for (size_t i = 0; i < s.size(); i += 2) {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(s.data() + i, s.data() + i + 2, v, 16);
    if (ec != std::errc() || p != s.data() + i + 2) parse_fail("bad hex string");
    out.push_back(static_cast<uint8_t>(v));
  }
  return out;
}

std::string_view activation_name(Activation a) {
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

void invalid_instr(const std::string& what) { fail(ErrorKind::BadDescriptor, "instruction: " + what); }

void invalid_pipeline(const std::string& what) { fail(ErrorKind::InvalidPipeline, what); }

bool operand_is_vector(const CvuOperand& o) {
  using K = CvuOperand::Kind;
  return o.kind == K::StreamA || o.kind == K::StreamB || o.kind == K::Vec;
}

}  // namespace

std::string_view unit_name(Unit u) {
  switch (u) {
    case Unit::TCU: return "TCU";
    case Unit::CVU: return "CVU";
    case Unit::DTDU: return "DTDU";
    case Unit::CSU: return "CSU";
  }
  return "?";
}

std::optional<Unit> parse_unit(std::string_view s) {
  if (s == "TCU") return Unit::TCU;
  if (s == "CVU") return Unit::CVU;
  if (s == "DTDU") return Unit::DTDU;
  if (s == "CSU") return Unit::CSU;
  return std::nullopt;
}

namespace {
struct OpcodeInfo {
  CvuOpcode op;
  std::string_view name;
  int arity;
  bool reduction;
};
constexpr OpcodeInfo kOpcodes[] = {
    {CvuOpcode::Add, "add", 2, false},          {CvuOpcode::Sub, "sub", 2, false},
    {CvuOpcode::Mul, "mul", 2, false},          {CvuOpcode::Div, "div", 2, false},
    {CvuOpcode::Max, "max", 2, false},          {CvuOpcode::Min, "min", 2, false},
    {CvuOpcode::Exp2, "exp2", 1, false},        {CvuOpcode::Reciprocal, "recip", 1, false},
    {CvuOpcode::Sqrt, "sqrt", 1, false},        {CvuOpcode::Abs, "abs", 1, false},
    {CvuOpcode::ScaleBias, "scalebias", 1, false}, {CvuOpcode::Convert, "convert", 1, false},
    {CvuOpcode::ReduceMax, "rmax", 1, true},    {CvuOpcode::ReduceSum, "rsum", 1, true},
    {CvuOpcode::BroadcastScalar, "bcast", 1, false}, {CvuOpcode::SelectGe, "selge", 2, false},
};
const OpcodeInfo& info(CvuOpcode op) {
  for (const auto& i : kOpcodes)
    if (i.op == op) return i;
  return kOpcodes[0];
}
}  // namespace

std::string_view cvu_opcode_name(CvuOpcode op) { return info(op).name; }
int cvu_arity(CvuOpcode op) { return info(op).arity; }
bool cvu_is_reduction(CvuOpcode op) { return info(op).reduction; }

std::optional<CvuOpcode> parse_cvu_opcode(std::string_view s) {
  for (const auto& i : kOpcodes)
    if (i.name == s) return i.op;
  return std::nullopt;
}

std::string format_operand(const CvuOperand& o) {
  using K = CvuOperand::Kind;
  switch (o.kind) {
    case K::None: return "-";
    case K::StreamA: return "A";
    case K::StreamB: return "B";
    case K::RowB: return "B" + std::to_string(o.index);
    case K::Vec: return "V" + std::to_string(o.index);
    case K::Scalar: return "S" + std::to_string(o.index);
    case K::Imm: return "#";
  }
  return "?";
}

CvuOperand parse_operand(const std::string& s) {
  using K = CvuOperand::Kind;
  if (s == "-") return {K::None, 0};
  if (s == "A") return {K::StreamA, 0};
  if (s == "B") return {K::StreamB, 0};
  if (s == "#") return {K::Imm, 0};
  if (s.size() >= 2) {
    const auto idx = static_cast<uint32_t>(to_int(s.substr(1)));
    if (s[0] == 'B') return {K::RowB, idx};
    if (s[0] == 'V') return {K::Vec, idx};
    if (s[0] == 'S') return {K::Scalar, idx};
  }
  parse_fail("bad CVU operand '" + s + "'");
}

int64_t CvuPipeline::out_elems() const {
  if (emit.size() == 1 && emit[0].kind == CvuOperand::Kind::Vec) return rows * row_length;
  return rows * static_cast<int64_t>(emit.size());
}

void validate_pipeline(const CvuPipeline& p) {
  using K = CvuOperand::Kind;
  if (p.rows < 1 || p.row_length < 1) invalid_pipeline("rows and row length must be positive");
  if (p.stages.empty()) invalid_pipeline("pipeline has no stages");
  if (p.row_b && !p.b_dtype) invalid_pipeline("row scalars need stream B");
  bool vec_def[kCvuVecSlots] = {};
  bool sca_def[kCvuScalarRegs] = {};
  auto check_src = [&](const CvuOperand& o, size_t s) {
    const std::string where = "stage " + std::to_string(s) + ": ";
    switch (o.kind) {
      case K::None: invalid_pipeline(where + "missing operand");
      case K::StreamA: break;
      case K::StreamB:
        if (!p.b_dtype || p.row_b) invalid_pipeline(where + "stream B is not an elementwise stream");
        break;
      case K::RowB:
        if (!p.b_dtype || o.index >= p.row_b) invalid_pipeline(where + "row scalar out of range");
        break;
      case K::Vec:
        if (o.index >= kCvuVecSlots || !vec_def[o.index])
          invalid_pipeline(where + "vector slot read before written");
        break;
      case K::Scalar:
        if (o.index >= kCvuScalarRegs || !sca_def[o.index])
          invalid_pipeline(where + "scalar register read before written");
        break;
      case K::Imm: break;
    }
  };
  for (size_t s = 0; s < p.stages.size(); ++s) {
    const auto& st = p.stages[s];
    const int arity = cvu_arity(st.op);
    check_src(st.a, s);
    if (arity == 2) check_src(st.b, s);
    else if (st.b.kind != K::None) invalid_pipeline("stage " + std::to_string(s) + ": unary op given two operands");
    bool vec = operand_is_vector(st.a) || (arity == 2 && operand_is_vector(st.b));
    if (cvu_is_reduction(st.op)) {
      if (!operand_is_vector(st.a)) invalid_pipeline("stage " + std::to_string(s) + ": reduction of a scalar");
      vec = false;
    }
    if (st.op == CvuOpcode::BroadcastScalar) {
      if (operand_is_vector(st.a)) invalid_pipeline("stage " + std::to_string(s) + ": broadcast of a vector");
      vec = true;
    }
    if (vec) {
      if (st.dst.kind != K::Vec || st.dst.index >= kCvuVecSlots)
        invalid_pipeline("stage " + std::to_string(s) + ": vector result needs a vector slot");
      vec_def[st.dst.index] = true;
    } else {
      if (st.dst.kind != K::Scalar || st.dst.index >= kCvuScalarRegs)
        invalid_pipeline("stage " + std::to_string(s) + ": scalar result needs a scalar register");
      sca_def[st.dst.index] = true;
    }
  }
  if (p.emit.empty()) invalid_pipeline("pipeline emits nothing");
  if (p.emit.size() == 1 && p.emit[0].kind == K::Vec) {
    if (p.emit[0].index >= kCvuVecSlots || !vec_def[p.emit[0].index]) invalid_pipeline("emitted slot never written");
  } else {
    for (const auto& e : p.emit)
      if (e.kind != K::Scalar || e.index >= kCvuScalarRegs || !sca_def[e.index])
        invalid_pipeline("emit must be one vector slot or written scalar registers");
  }
}

Unit unit_for(const OpDescriptor& op) {
  return static_cast<Unit>(op.index());
}

uint64_t payload_bits(const OpDescriptor& op) {
  return std::visit(
      [](const auto& o) -> uint64_t {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, TcuOp>) {
          return 128;
        } else if constexpr (std::is_same_v<T, CvuPipeline>) {
          return 64 + 64 * o.stages.size();
        } else if constexpr (std::is_same_v<T, DtduOp>) {
          return 64 + 64 * o.dests.size() + (o.kind == DtduOp::Kind::Fill ? 64 : 0);
        } else {
          return 64 + 64 * o.args.size();
        }
      },
      op);
}

void TpbMask::set(uint32_t global) {
  if (global / 64 >= words_.size()) words_.resize(global / 64 + 1, 0);
  words_[global / 64] |= uint64_t{1} << (global % 64);
}

bool TpbMask::test(uint32_t global) const {
  return global / 64 < words_.size() && (words_[global / 64] >> (global % 64)) & 1u;
}

bool TpbMask::empty() const {
  for (auto w : words_)
    if (w) return false;
  return true;
}

std::vector<uint32_t> TpbMask::members() const {
  std::vector<uint32_t> out;
  for (size_t w = 0; w < words_.size(); ++w)
    for (uint32_t b = 0; b < 64; ++b)
      if ((words_[w] >> b) & 1u) out.push_back(static_cast<uint32_t>(w * 64 + b));
  return out;
}

uint64_t encoded_size(const TpbInstruction& instr) {
  uint64_t levels = 0;
  for (const auto& w : instr.in_walkers) levels += w.levels.size();
  if (instr.out_walker) levels += instr.out_walker->levels.size();
  const uint64_t bits = kHeaderBits + kBitsPerWalkerLevel * levels +
                        kBitsPerSync * instr.syncs.size() + payload_bits(instr.op);
  return std::max(bits, kMinInstructionBits);
}

uint64_t transmit_cycles(uint64_t bits, uint32_t bits_per_cycle) {
  return (bits + bits_per_cycle - 1) / bits_per_cycle;
}

TpbInstruction finalize(TpbInstruction instr) {
  instr.unit = unit_for(instr.op);
  instr.encoded_bits = encoded_size(instr);
  return instr;
}

namespace {

void validate_tcu(const TcuOp& op) {
  auto pos = [](int64_t v, const char* what) {
    if (v <= 0) invalid_instr(std::string("TCU ") + what + " must be positive");
  };
  if (op.kind == TcuOp::Kind::Matmul) {
    pos(op.m, "m");
    pos(op.k, "k");
    pos(op.n, "n");
  } else {
    pos(op.batch, "batch");
    pos(op.height, "height");
    pos(op.width, "width");
    pos(op.cin, "cin");
    pos(op.cout, "cout");
    pos(op.kh, "kh");
    pos(op.kw, "kw");
    pos(op.stride, "stride");
    if (op.pad < 0 || op.pad >= op.kh || op.pad >= op.kw) invalid_instr("TCU pad must be below kernel size");
    if (op.height + 2 * op.pad < op.kh || op.width + 2 * op.pad < op.kw)
      invalid_instr("TCU kernel larger than padded input");
  }
  const bool int_in = op.in_dtype == DType::i8 || op.in_dtype == DType::u8;
  if (!int_in && op.in_dtype != DType::f16)
    fail(ErrorKind::UnsupportedDtype, "TCU inputs must be i8, u8 or f16");
  if (int_in && op.acc_dtype != DType::i32)
    fail(ErrorKind::UnsupportedDtype, "integer TCU inputs accumulate in i32");
  if (!int_in && op.acc_dtype != DType::f32)
    fail(ErrorKind::UnsupportedDtype, "f16 TCU inputs accumulate in f32");
}

}  // namespace

void validate_instruction(const TpbInstruction& instr, const MachineConfig& cfg) {
  if (instr.mask.empty()) invalid_instr("empty TPB mask");
  for (uint32_t g : instr.mask.members())
    if (g >= cfg.total_tpbs()) fail(ErrorKind::UnroutableTarget, "mask names TPB " + std::to_string(g));
  if (instr.unit != unit_for(instr.op)) invalid_instr("unit does not match op");
  for (const auto& w : instr.in_walkers) validate_walker(w, cfg.max_walker_levels, cfg.max_walker_iterations);
  if (instr.out_walker) validate_walker(*instr.out_walker, cfg.max_walker_levels, cfg.max_walker_iterations);

  auto expect_walkers = [&](size_t in, bool out) {
    if (instr.in_walkers.size() != in)
      invalid_instr(std::string(unit_name(instr.unit)) + " expects " + std::to_string(in) + " input walkers");
    if (instr.out_walker.has_value() != out)
      invalid_instr(std::string(unit_name(instr.unit)) + (out ? " needs" : " takes no") + " output walker");
  };
  auto expect_total = [&](const WalkerConfig& w, int64_t n, const char* what) {
    if (walker_total(w) != static_cast<uint64_t>(n))
      invalid_instr(std::string(what) + " walker length " + std::to_string(walker_total(w)) +
                    " does not match " + std::to_string(n) + " elements");
  };

  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, TcuOp>) {
          validate_tcu(op);
          expect_walkers(2, true);
          expect_total(instr.in_walkers[0], op.act_elems(), "activation");
          expect_total(instr.in_walkers[1], op.wt_elems(), "weight");
          expect_total(*instr.out_walker, op.out_elems(), "output");
        } else if constexpr (std::is_same_v<T, CvuPipeline>) {
          validate_pipeline(op);
          expect_walkers(op.b_dtype ? 2 : 1, true);
          expect_total(instr.in_walkers[0], op.in_elems(), "stream A");
          if (op.b_dtype) expect_total(instr.in_walkers[1], op.b_elems(), "stream B");
          expect_total(*instr.out_walker, op.out_elems(), "output");
        } else if constexpr (std::is_same_v<T, DtduOp>) {
          if (op.elem_bytes == 0) invalid_instr("DTDU element size is zero");
          if (op.kind == DtduOp::Kind::Fill) {
            expect_walkers(0, true);
            if (op.fill_pattern.size() != op.elem_bytes) invalid_instr("fill pattern size mismatch");
          } else {
            expect_walkers(1, true);
            const uint64_t n = walker_total(instr.in_walkers[0]);
            expect_total(*instr.out_walker, static_cast<int64_t>(n), "output");
            if (op.kind == DtduOp::Kind::Transpose2d && static_cast<uint64_t>(op.rows * op.cols) != n)
              invalid_instr("transpose shape does not match walker");
          }
          for (const auto& d : op.dests)
            if (d.cluster >= cfg.num_clusters || d.tpb >= cfg.tpbs_per_cluster)
              fail(ErrorKind::UnroutableTarget, "DTDU destination outside the machine");
        } else {
          expect_walkers(0, false);
          if (op.args.size() > kCsuMaxArgs) invalid_instr("too many CSU arguments");
        }
      },
      instr.op);

  for (const auto& s : instr.syncs) {
    if (s.kind == SyncKind::Update && s.expected != 0) invalid_instr("update carries an expected value");
    if (s.stage == SyncStage::PerChunk && s.chunk_elems == 0) invalid_instr("per-chunk sync with zero chunk");
    if (s.kind == SyncKind::Monitor && s.counter.scope == CounterRef::Scope::Ccb)
      invalid_instr("monitors must target the local synchronization unit");
    if (s.counter.index >= cfg.sync_counters) fail(ErrorKind::IndexOutOfRange, "sync counter index out of range");
  }
  if (instr.encoded_bits != encoded_size(instr)) invalid_instr("encoded size does not match the size formula");
}

std::string format_op(const OpDescriptor& op) {
  std::ostringstream o;
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, TcuOp>) {
          o << "tcu{";
          if (x.kind == TcuOp::Kind::Matmul) {
            o << "kind=matmul;m=" << x.m << ";k=" << x.k << ";n=" << x.n;
          } else {
            o << "kind=conv2d;batch=" << x.batch << ";h=" << x.height << ";w=" << x.width
              << ";cin=" << x.cin << ";cout=" << x.cout << ";kh=" << x.kh << ";kw=" << x.kw
              << ";stride=" << x.stride << ";pad=" << x.pad;
          }
          o << ";in=" << dtype_name(x.in_dtype) << ";acc=" << dtype_name(x.acc_dtype)
            << ";out=" << dtype_name(x.out_dtype) << ";act=" << activation_name(x.act);
          if (x.act == Activation::Clamp) o << ";lo=" << fmt_double(x.clamp_lo) << ";hi=" << fmt_double(x.clamp_hi);
          o << "}";
        } else if constexpr (std::is_same_v<T, CvuPipeline>) {
          o << "cvu{rows=" << x.rows << ";len=" << x.row_length << ";a=" << dtype_name(x.a_dtype)
            << ";b=" << (x.b_dtype ? std::string(dtype_name(*x.b_dtype)) : std::string("none"))
            << ";rowb=" << x.row_b << ";out=" << dtype_name(x.out_dtype) << ";emit=";
          for (size_t i = 0; i < x.emit.size(); ++i) o << (i ? "+" : "") << format_operand(x.emit[i]);
          o << ";st=";
          for (size_t i = 0; i < x.stages.size(); ++i) {
            const auto& s = x.stages[i];
            o << (i ? "/" : "") << format_operand(s.dst) << ':' << cvu_opcode_name(s.op) << ':'
              << format_operand(s.a) << ':' << format_operand(s.b) << ':' << fmt_double(s.imm) << ':'
              << fmt_double(s.imm2) << ':' << dtype_name(s.convert_to);
          }
          o << "}";
        } else if constexpr (std::is_same_v<T, DtduOp>) {
          const char* kind = x.kind == DtduOp::Kind::Copy ? "copy"
                             : x.kind == DtduOp::Kind::Fill ? "fill" : "transpose2d";
          o << "dtdu{kind=" << kind << ";eb=" << x.elem_bytes << ";rows=" << x.rows << ";cols=" << x.cols
            << ";fill=" << (x.fill_pattern.empty() ? std::string("-") : hex(x.fill_pattern)) << ";dst=";
          if (x.dests.empty()) o << "-";
          for (size_t i = 0; i < x.dests.size(); ++i)
            o << (i ? "+" : "") << x.dests[i].cluster << '.' << x.dests[i].tpb << '.' << x.dests[i].base;
          o << "}";
        } else {
          o << "csu{routine=" << x.routine << ";args=";
          if (x.args.empty()) o << "-";
          for (size_t i = 0; i < x.args.size(); ++i) o << (i ? "+" : "") << x.args[i];
          o << "}";
        }
      },
      op);
  return o.str();
}

OpDescriptor parse_op(const std::string& text) {
  auto [name, kv] = split_record(text);
  if (name == "tcu") {
    TcuOp op;
    const auto& kind = need(kv, "kind");
    if (kind == "matmul") {
      op.kind = TcuOp::Kind::Matmul;
      op.m = to_int(need(kv, "m"));
      op.k = to_int(need(kv, "k"));
      op.n = to_int(need(kv, "n"));
    } else if (kind == "conv2d") {
      op.kind = TcuOp::Kind::Conv2d;
      op.batch = to_int(need(kv, "batch"));
      op.height = to_int(need(kv, "h"));
      op.width = to_int(need(kv, "w"));
      op.cin = to_int(need(kv, "cin"));
      op.cout = to_int(need(kv, "cout"));
      op.kh = to_int(need(kv, "kh"));
      op.kw = to_int(need(kv, "kw"));
      op.stride = to_int(need(kv, "stride"));
      op.pad = to_int(need(kv, "pad"));
    } else {
      parse_fail("bad TCU kind '" + kind + "'");
    }
    op.in_dtype = to_dtype(need(kv, "in"));
    op.acc_dtype = to_dtype(need(kv, "acc"));
    op.out_dtype = to_dtype(need(kv, "out"));
    op.act = parse_activation(need(kv, "act"));
    if (op.act == Activation::Clamp) {
      op.clamp_lo = to_double(need(kv, "lo"));
      op.clamp_hi = to_double(need(kv, "hi"));
    }
    return op;
  }
  if (name == "cvu") {
    CvuPipeline p;
    p.rows = to_int(need(kv, "rows"));
    p.row_length = to_int(need(kv, "len"));
    p.a_dtype = to_dtype(need(kv, "a"));
    if (need(kv, "b") != "none") p.b_dtype = to_dtype(need(kv, "b"));
    p.row_b = static_cast<uint32_t>(to_int(need(kv, "rowb")));
    p.out_dtype = to_dtype(need(kv, "out"));
    for (const auto& e : split(need(kv, "emit"), '+')) p.emit.push_back(parse_operand(e));
    for (const auto& st : split(need(kv, "st"), '/')) {
      auto f = split(st, ':');
      if (f.size() != 7) parse_fail("bad CVU stage '" + st + "'");
      CvuStage s;
      s.dst = parse_operand(f[0]);
      auto opc = parse_cvu_opcode(f[1]);
      if (!opc) parse_fail("bad CVU opcode '" + f[1] + "'");
      s.op = *opc;
      s.a = parse_operand(f[2]);
      s.b = parse_operand(f[3]);
      s.imm = to_double(f[4]);
      s.imm2 = to_double(f[5]);
      s.convert_to = to_dtype(f[6]);
      p.stages.push_back(s);
    }
    return p;
  }
  if (name == "dtdu") {
    DtduOp op;
    const auto& kind = need(kv, "kind");
    if (kind == "copy") op.kind = DtduOp::Kind::Copy;
    else if (kind == "fill") op.kind = DtduOp::Kind::Fill;
    else if (kind == "transpose2d") op.kind = DtduOp::Kind::Transpose2d;
    else parse_fail("bad DTDU kind '" + kind + "'");
    op.elem_bytes = static_cast<uint32_t>(to_int(need(kv, "eb")));
    op.rows = to_int(need(kv, "rows"));
    op.cols = to_int(need(kv, "cols"));
    if (need(kv, "fill") != "-") op.fill_pattern = unhex(need(kv, "fill"));
    if (need(kv, "dst") != "-") {
      for (const auto& d : split(need(kv, "dst"), '+')) {
        auto f = split(d, '.');
        if (f.size() != 3) parse_fail("bad DTDU destination '" + d + "'");
        op.dests.push_back({static_cast<uint32_t>(to_int(f[0])), static_cast<uint32_t>(to_int(f[1])),
                            static_cast<uint64_t>(to_int(f[2]))});
      }
    }
    return op;
  }
  if (name == "csu") {
    CsuOp op;
    op.routine = static_cast<uint32_t>(to_int(need(kv, "routine")));
    if (need(kv, "args") != "-")
      for (const auto& a : split(need(kv, "args"), '+')) op.args.push_back(to_int(a));
    return op;
  }
  parse_fail("unknown op kind '" + name + "'");
}

std::string format_sync(const SyncAction& s) {
  std::string out = s.kind == SyncKind::Monitor ? "mon:" : "upd:";
  out += format_counter(s.counter);
  if (s.kind == SyncKind::Monitor) out += ">=" + std::to_string(s.expected);
  switch (s.stage) {
    case SyncStage::BeforeStart: out += "@before"; break;
    case SyncStage::AfterComplete: out += "@after"; break;
    case SyncStage::PerChunk: out += "@chunk" + std::to_string(s.chunk_elems); break;
  }
  return out;
}

SyncAction parse_sync(const std::string& text) {
  SyncAction s;
  if (text.rfind("mon:", 0) == 0) s.kind = SyncKind::Monitor;
  else if (text.rfind("upd:", 0) == 0) s.kind = SyncKind::Update;
  else parse_fail("bad sync '" + text + "'");
  const auto at = text.find('@');
  if (at == std::string::npos) parse_fail("bad sync '" + text + "'");
  std::string counter = text.substr(4, at - 4);
  if (s.kind == SyncKind::Monitor) {
    const auto ge = counter.find(">=");
    if (ge == std::string::npos) parse_fail("monitor without expected value");
    s.expected = static_cast<uint64_t>(to_int(counter.substr(ge + 2)));
    counter = counter.substr(0, ge);
  }
  s.counter = parse_counter(counter);
  const std::string stage = text.substr(at + 1);
  if (stage == "before") s.stage = SyncStage::BeforeStart;
  else if (stage == "after") s.stage = SyncStage::AfterComplete;
  else if (stage.rfind("chunk", 0) == 0) {
    s.stage = SyncStage::PerChunk;
    s.chunk_elems = static_cast<uint64_t>(to_int(stage.substr(5)));
  } else parse_fail("bad sync stage '" + stage + "'");
  return s;
}

std::string format_instruction(const TpbInstruction& instr) {
  std::ostringstream o;
  o << "instr seq=" << instr.seq << " unit=" << unit_name(instr.unit) << " mask=";
  const auto members = instr.mask.members();
  for (size_t i = 0; i < members.size(); ++i) o << (i ? "," : "") << members[i];
  o << " op=" << format_op(instr.op) << " in=";
  if (instr.in_walkers.empty()) o << "-";
  for (size_t i = 0; i < instr.in_walkers.size(); ++i) o << (i ? ";" : "") << format_walker(instr.in_walkers[i]);
  o << " out=" << (instr.out_walker ? format_walker(*instr.out_walker) : std::string("-")) << " sync=";
  if (instr.syncs.empty()) o << "-";
  for (size_t i = 0; i < instr.syncs.size(); ++i) o << (i ? "," : "") << format_sync(instr.syncs[i]);
  o << " bits=" << instr.encoded_bits;
  return o.str();
}

TpbInstruction parse_instruction(const std::string& line) {
  std::istringstream in(line);
  std::string word;
  in >> word;
  if (word != "instr") parse_fail("instruction record must start with 'instr'");
  std::map<std::string, std::string> kv;
  while (in >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) parse_fail("bad instruction field '" + word + "'");
    kv[word.substr(0, eq)] = word.substr(eq + 1);
  }
  TpbInstruction instr;
  instr.seq = static_cast<uint64_t>(to_int(need(kv, "seq")));
  auto unit = parse_unit(need(kv, "unit"));
  if (!unit) parse_fail("bad unit");
  instr.unit = *unit;
  for (const auto& m : split(need(kv, "mask"), ',')) instr.mask.set(static_cast<uint32_t>(to_int(m)));
  instr.op = parse_op(need(kv, "op"));
  if (need(kv, "in") != "-")
    for (const auto& w : split(need(kv, "in"), ';')) instr.in_walkers.push_back(parse_walker(w));
  if (need(kv, "out") != "-") instr.out_walker = parse_walker(need(kv, "out"));
  if (need(kv, "sync") != "-")
    for (const auto& s : split(need(kv, "sync"), ',')) instr.syncs.push_back(parse_sync(s));
  instr.encoded_bits = static_cast<uint64_t>(to_int(need(kv, "bits")));
  return instr;
}

InstructionQueue::InstructionQueue(uint32_t tpbs, uint32_t capacity) : fifos_(tpbs), capacity_(capacity) {}

EnqueueResult InstructionQueue::enqueue(uint32_t tpb, const TpbInstruction& instr) {
  if (tpb >= fifos_.size()) fail(ErrorKind::IndexOutOfRange, "TPB outside the cluster");
  if (size_ >= capacity_) return EnqueueResult::Backpressure;
  fifos_[tpb][static_cast<size_t>(instr.unit)].push_back(instr);
  ++size_;
  return EnqueueResult::Ok;
}

std::optional<TpbInstruction> InstructionQueue::ready_pop(uint32_t tpb, Unit unit) {
  auto& q = fifos_.at(tpb)[static_cast<size_t>(unit)];
  if (q.empty()) return std::nullopt;
  TpbInstruction out = std::move(q.front());
  q.pop_front();
  --size_;
  return out;
}

const TpbInstruction* InstructionQueue::peek(uint32_t tpb, Unit unit) const {
  const auto& q = fifos_.at(tpb)[static_cast<size_t>(unit)];
  return q.empty() ? nullptr : &q.front();
}

size_t InstructionQueue::fifo_size(uint32_t tpb, Unit unit) const {
  return fifos_.at(tpb)[static_cast<size_t>(unit)].size();
}

}  // namespace tpbsim
