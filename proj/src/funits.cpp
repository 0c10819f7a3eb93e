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

#include "tpbsim/funits.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "tpbsim/error.hpp"

namespace tpbsim {

namespace {

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

double apply_activation(const TcuOp& op, double v) {
  switch (op.act) {
    case Activation::Identity: return v;
    case Activation::Relu: return std::max(v, 0.0);
    case Activation::Relu6: return std::clamp(v, 0.0, 6.0);
    case Activation::Clamp: return std::clamp(v, op.clamp_lo, op.clamp_hi);
  }
  return v;
}

}  // namespace

TcuTiming tcu_timing(const TcuOp& op, const MachineConfig& cfg) {
  TcuTiming t;
  t.mac_cycles = ceil_div(op.contraction(), uint64_t{cfg.tcu_rows} * cfg.tcu_dot_width) * op.rows() *
                 ceil_div(op.cols(), cfg.tcu_cols);
  t.fill = cfg.tcu_fill;
  t.drain = cfg.tcu_drain;
  return t;
}

std::vector<uint8_t> tcu_execute(const TcuOp& op, std::span<const uint8_t> act, std::span<const uint8_t> wt) {
  const int64_t M = op.rows(), K = op.contraction(), N = op.cols();
  const uint32_t ib = byte_width(op.in_dtype);
  if (act.size() != static_cast<size_t>(op.act_elems()) * ib || wt.size() != static_cast<size_t>(op.wt_elems()) * ib)
    fail(ErrorKind::MalformedRequest, "TCU operand size does not match its shape");

  // Row r of the implicit activation matrix, column kk; -1 for padding.
  auto act_index = [&](int64_t r, int64_t kk) -> int64_t {
    if (op.kind == TcuOp::Kind::Matmul) return r * K + kk;
    const int64_t ow = r % op.out_w();
    const int64_t oh = (r / op.out_w()) % op.out_h();
    const int64_t b = r / (op.out_w() * op.out_h());
    const int64_t ci = kk % op.cin;
    const int64_t j = (kk / op.cin) % op.kw;
    const int64_t i = kk / (op.cin * op.kw);
    const int64_t ih = oh * op.stride + i - op.pad;
    const int64_t iw = ow * op.stride + j - op.pad;
    if (ih < 0 || iw < 0 || ih >= op.height || iw >= op.width) return -1;
    return ((b * op.height + ih) * op.width + iw) * op.cin + ci;
  };

  const uint32_t ob = byte_width(op.out_dtype);
  std::vector<uint8_t> out(static_cast<size_t>(M * N) * ob);
  const bool int_in = !is_float(op.in_dtype);
  std::vector<int64_t> ai, wi;
  std::vector<float> af, wf;
  const auto n_act = static_cast<size_t>(op.act_elems()), n_wt = static_cast<size_t>(op.wt_elems());
  if (int_in) {
    ai.resize(n_act);
    wi.resize(n_wt);
    for (size_t e = 0; e < n_act; ++e) ai[e] = load_integer(op.in_dtype, act.subspan(e * ib, ib));
    for (size_t e = 0; e < n_wt; ++e) wi[e] = load_integer(op.in_dtype, wt.subspan(e * ib, ib));
  } else {
    af.resize(n_act);
    wf.resize(n_wt);
    for (size_t e = 0; e < n_act; ++e) af[e] = static_cast<float>(load_element(op.in_dtype, act.subspan(e * ib, ib)));
    for (size_t e = 0; e < n_wt; ++e) wf[e] = static_cast<float>(load_element(op.in_dtype, wt.subspan(e * ib, ib)));
  }

  std::vector<int64_t> row_idx(static_cast<size_t>(K));
  for (int64_t r = 0; r < M; ++r) {
    for (int64_t kk = 0; kk < K; ++kk) row_idx[kk] = act_index(r, kk);
    for (int64_t c = 0; c < N; ++c) {
      double v;
      if (int_in) {
        int64_t acc = 0;
        for (int64_t kk = 0; kk < K; ++kk)
          if (row_idx[kk] >= 0) acc += ai[row_idx[kk]] * wi[kk * N + c];
        v = static_cast<double>(std::clamp<int64_t>(acc, dtype_min(DType::i32), dtype_max(DType::i32)));
      } else {
        float acc = 0.0f;
        for (int64_t k0 = 0; k0 < K; k0 += 4) {
          float partial = 0.0f;
          for (int64_t kk = k0; kk < std::min(K, k0 + 4); ++kk)
            if (row_idx[kk] >= 0) partial += af[row_idx[kk]] * wf[kk * N + c];
          acc += partial;
        }
        v = acc;
      }
      v = apply_activation(op, v);
      if (!int_in) v = static_cast<float>(v);
      store_element(op.out_dtype, v, std::span<uint8_t>(out).subspan(static_cast<size_t>(r * N + c) * ob, ob));
    }
  }
  return out;
}

bool cvu_integer_domain(const CvuPipeline& p) {
  if (is_float(p.a_dtype) || is_float(p.out_dtype)) return false;
  if (p.b_dtype && is_float(*p.b_dtype)) return false;
  auto integral = [](double v) { return std::nearbyint(v) == v && std::fabs(v) < 9.0e15; };
  for (const auto& st : p.stages) {
    switch (st.op) {
      case CvuOpcode::Div:
      case CvuOpcode::Exp2:
      case CvuOpcode::Reciprocal:
      case CvuOpcode::Sqrt:
      case CvuOpcode::ScaleBias:
        return false;
      case CvuOpcode::Convert:
        if (is_float(st.convert_to)) return false;
        break;
      default: break;
    }
    const bool uses_imm = st.a.kind == CvuOperand::Kind::Imm || st.b.kind == CvuOperand::Kind::Imm;
    if (uses_imm && !integral(st.imm)) return false;
    if (st.op == CvuOpcode::SelectGe && !integral(st.imm2)) return false;
  }
  return true;
}

uint64_t cvu_cycles(const CvuPipeline& p, const MachineConfig& cfg) {
  return cfg.cvu_fill + ceil_div(static_cast<uint64_t>(p.in_elems()), cfg.cvu_lanes);
}

namespace {

int64_t wrap_add(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) + static_cast<uint64_t>(b));
}
int64_t wrap_sub(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) - static_cast<uint64_t>(b));
}
int64_t wrap_mul(int64_t a, int64_t b) {
  return static_cast<int64_t>(static_cast<uint64_t>(a) * static_cast<uint64_t>(b));
}

template <typename T>
T load_as(DType t, std::span<const uint8_t> bytes) {
  if constexpr (std::is_same_v<T, int64_t>) return load_integer(t, bytes);
  else return static_cast<float>(load_element(t, bytes));
}

template <typename T>
T unary(const CvuStage& st, T x) {
  if constexpr (std::is_same_v<T, int64_t>) {
    switch (st.op) {
      case CvuOpcode::Abs: return x < 0 ? wrap_sub(0, x) : x;
      case CvuOpcode::Convert: return std::clamp(x, dtype_min(st.convert_to), dtype_max(st.convert_to));
      default: return x;  // BroadcastScalar
    }
  } else {
    switch (st.op) {
      case CvuOpcode::Exp2: return std::exp2(x);
      case CvuOpcode::Reciprocal: return 1.0f / x;
      case CvuOpcode::Sqrt: return std::sqrt(x);
      case CvuOpcode::Abs: return std::fabs(x);
      case CvuOpcode::ScaleBias:
        return x * static_cast<float>(st.imm) + static_cast<float>(st.imm2);
      case CvuOpcode::Convert: {
        uint8_t buf[4];
        store_element(st.convert_to, x, std::span<uint8_t>(buf, byte_width(st.convert_to)));
        return static_cast<float>(load_element(st.convert_to, std::span<const uint8_t>(buf, byte_width(st.convert_to))));
      }
      default: return x;
    }
  }
}

template <typename T>
T binary(const CvuStage& st, T x, T y) {
  switch (st.op) {
    case CvuOpcode::Add:
      if constexpr (std::is_same_v<T, int64_t>) return wrap_add(x, y); else return x + y;
    case CvuOpcode::Sub:
      if constexpr (std::is_same_v<T, int64_t>) return wrap_sub(x, y); else return x - y;
    case CvuOpcode::Mul:
      if constexpr (std::is_same_v<T, int64_t>) return wrap_mul(x, y); else return x * y;
    case CvuOpcode::Div: return x / y;  // float domain only
    case CvuOpcode::Max: return std::max(x, y);
    case CvuOpcode::Min: return std::min(x, y);
    case CvuOpcode::SelectGe: return x >= y ? x : static_cast<T>(st.imm2);
    default: return x;
  }
}

template <typename T>
std::vector<uint8_t> run_pipeline(const CvuPipeline& p, std::span<const uint8_t> a, std::span<const uint8_t> b,
                                  bool fault_on_nonfinite) {
  using K = CvuOperand::Kind;
  const int64_t len = p.row_length;
  const uint32_t aw = byte_width(p.a_dtype);
  const uint32_t bw = p.b_dtype ? byte_width(*p.b_dtype) : 0;
  const uint32_t ow = byte_width(p.out_dtype);
  std::vector<uint8_t> out(static_cast<size_t>(p.out_elems()) * ow);
  size_t out_pos = 0;

  std::vector<std::vector<T>> vec(kCvuVecSlots, std::vector<T>(static_cast<size_t>(len)));
  std::vector<T> sca(kCvuScalarRegs, T{});
  std::vector<T> row_a(static_cast<size_t>(len)), row_b(static_cast<size_t>(p.row_b ? p.row_b : len));

  auto emit_value = [&](T v) {
    if constexpr (!std::is_same_v<T, int64_t>) {
      if (fault_on_nonfinite && !is_float(p.out_dtype) && !std::isfinite(v))
        fail(ErrorKind::NonfiniteFault, "non-finite value converted to an integer output");
    }
    auto dst = std::span<uint8_t>(out).subspan(out_pos, ow);
    if constexpr (std::is_same_v<T, int64_t>) store_integer(p.out_dtype, v, dst);
    else store_element(p.out_dtype, v, dst);
    out_pos += ow;
  };

  for (int64_t r = 0; r < p.rows; ++r) {
    for (int64_t i = 0; i < len; ++i)
      row_a[i] = load_as<T>(p.a_dtype, a.subspan(static_cast<size_t>(r * len + i) * aw, aw));
    if (p.b_dtype) {
      const int64_t nb = p.row_b ? p.row_b : len;
      for (int64_t i = 0; i < nb; ++i)
        row_b[i] = load_as<T>(*p.b_dtype, b.subspan(static_cast<size_t>(r * nb + i) * bw, bw));
    }
    for (const auto& st : p.stages) {
      auto fetch = [&](const CvuOperand& o, int64_t i) -> T {
        switch (o.kind) {
          case K::StreamA: return row_a[i];
          case K::StreamB: return row_b[i];
          case K::RowB: return row_b[o.index];
          case K::Vec: return vec[o.index][i];
          case K::Scalar: return sca[o.index];
          case K::Imm: return static_cast<T>(st.imm);
          case K::None: break;
        }
        return T{};
      };
      const bool binary_op = cvu_arity(st.op) == 2;
      if (cvu_is_reduction(st.op)) {
        T acc = fetch(st.a, 0);
        for (int64_t i = 1; i < len; ++i) {
          const T x = fetch(st.a, i);
          if (st.op == CvuOpcode::ReduceMax) acc = std::max(acc, x);
          else if constexpr (std::is_same_v<T, int64_t>) acc = wrap_add(acc, x);
          else acc += x;
        }
        sca[st.dst.index] = acc;
      } else if (st.dst.kind == K::Vec) {
        auto& d = vec[st.dst.index];
        for (int64_t i = 0; i < len; ++i) {
          const T x = fetch(st.a, i);
          d[i] = binary_op ? binary(st, x, fetch(st.b, i)) : unary(st, x);
        }
      } else {
        const T x = fetch(st.a, 0);
        sca[st.dst.index] = binary_op ? binary(st, x, fetch(st.b, 0)) : unary(st, x);
      }
    }
    if (p.emit.size() == 1 && p.emit[0].kind == K::Vec) {
      for (int64_t i = 0; i < len; ++i) emit_value(vec[p.emit[0].index][i]);
    } else {
      for (const auto& e : p.emit) emit_value(sca[e.index]);
    }
  }
  return out;
}

}  // namespace

std::vector<uint8_t> cvu_execute(const CvuPipeline& p, std::span<const uint8_t> a, std::span<const uint8_t> b,
                                 bool fault_on_nonfinite) {
  validate_pipeline(p);
  if (a.size() != static_cast<size_t>(p.in_elems()) * byte_width(p.a_dtype))
    fail(ErrorKind::MalformedRequest, "CVU stream A size does not match the pipeline");
  if (p.b_dtype && b.size() != static_cast<size_t>(p.b_elems()) * byte_width(*p.b_dtype))
    fail(ErrorKind::MalformedRequest, "CVU stream B size does not match the pipeline");
  if (cvu_integer_domain(p)) return run_pipeline<int64_t>(p, a, b, fault_on_nonfinite);
  return run_pipeline<float>(p, a, b, fault_on_nonfinite);
}

namespace recipes {

namespace {
constexpr double kLog2e = 1.4426950408889634;
CvuOperand vec(uint32_t i) { return {CvuOperand::Kind::Vec, i}; }
CvuOperand sca(uint32_t i) { return {CvuOperand::Kind::Scalar, i}; }
CvuOperand row_b(uint32_t i) { return {CvuOperand::Kind::RowB, i}; }
const CvuOperand kA{CvuOperand::Kind::StreamA, 0};
const CvuOperand kImm{CvuOperand::Kind::Imm, 0};
CvuStage stage(CvuOpcode op, CvuOperand dst, CvuOperand a, CvuOperand b = {}, double imm = 0) {
  CvuStage s;
  s.op = op;
  s.dst = dst;
  s.a = a;
  s.b = b;
  s.imm = imm;
  return s;
}
CvuPipeline shell(int64_t rows, int64_t len, DType in, DType out) {
  CvuPipeline p;
  p.rows = rows;
  p.row_length = len;
  p.a_dtype = in;
  p.out_dtype = out;
  return p;
}
}  // namespace

CvuPipeline softmax_stats(int64_t rows, int64_t len, DType in) {
  auto p = shell(rows, len, in, DType::f32);
  p.stages = {stage(CvuOpcode::ReduceMax, sca(0), kA),
              stage(CvuOpcode::Sub, vec(0), kA, sca(0)),
              stage(CvuOpcode::Mul, vec(0), vec(0), kImm, kLog2e),
              stage(CvuOpcode::Exp2, vec(0), vec(0)),
              stage(CvuOpcode::ReduceSum, sca(1), vec(0))};
  p.emit = {sca(0), sca(1)};
  return p;
}

CvuPipeline softmax_normalize(int64_t rows, int64_t len, DType in, DType out) {
  auto p = shell(rows, len, in, out);
  p.b_dtype = DType::f32;
  p.row_b = 2;
  p.stages = {stage(CvuOpcode::Sub, vec(0), kA, row_b(0)),
              stage(CvuOpcode::Mul, vec(0), vec(0), kImm, kLog2e),
              stage(CvuOpcode::Exp2, vec(0), vec(0)),
              stage(CvuOpcode::Div, vec(0), vec(0), row_b(1))};
  p.emit = {vec(0)};
  return p;
}

CvuPipeline layernorm_stats(int64_t rows, int64_t len, DType in, double eps) {
  auto p = shell(rows, len, in, DType::f32);
  const double inv = 1.0 / static_cast<double>(len);
  p.stages = {stage(CvuOpcode::ReduceSum, sca(0), kA),
              stage(CvuOpcode::Mul, sca(0), sca(0), kImm, inv),
              stage(CvuOpcode::Sub, vec(0), kA, sca(0)),
              stage(CvuOpcode::Mul, vec(0), vec(0), vec(0)),
              stage(CvuOpcode::ReduceSum, sca(1), vec(0)),
              stage(CvuOpcode::Mul, sca(1), sca(1), kImm, inv),
              stage(CvuOpcode::Add, sca(1), sca(1), kImm, eps),
              stage(CvuOpcode::Sqrt, sca(1), sca(1)),
              stage(CvuOpcode::Reciprocal, sca(1), sca(1))};
  p.emit = {sca(0), sca(1)};
  return p;
}

CvuPipeline layernorm_normalize(int64_t rows, int64_t len, DType in, DType out) {
  auto p = shell(rows, len, in, out);
  p.b_dtype = DType::f32;
  p.row_b = 2;
  p.stages = {stage(CvuOpcode::Sub, vec(0), kA, row_b(0)), stage(CvuOpcode::Mul, vec(0), vec(0), row_b(1))};
  p.emit = {vec(0)};
  return p;
}

CvuPipeline pool_max(int64_t rows, int64_t window, DType in, DType out) {
  auto p = shell(rows, window, in, out);
  p.stages = {stage(CvuOpcode::ReduceMax, sca(0), kA)};
  p.emit = {sca(0)};
  return p;
}

CvuPipeline pool_avg(int64_t rows, int64_t window, DType in, DType out) {
  auto p = shell(rows, window, in, out);
  p.stages = {stage(CvuOpcode::ReduceSum, sca(0), kA),
              stage(CvuOpcode::Div, sca(0), sca(0), kImm, static_cast<double>(window))};
  p.emit = {sca(0)};
  return p;
}

}  // namespace recipes

std::vector<uint8_t> dtdu_transform(const DtduOp& op, std::span<const uint8_t> in, uint64_t count) {
  const size_t eb = op.elem_bytes;
  switch (op.kind) {
    case DtduOp::Kind::Copy: return {in.begin(), in.end()};
    case DtduOp::Kind::Transpose2d: {
      if (in.size() != static_cast<size_t>(op.rows * op.cols) * eb)
        fail(ErrorKind::MalformedRequest, "transpose input size does not match its shape");
      std::vector<uint8_t> out(in.size());
      for (int64_t i = 0; i < op.rows; ++i)
        for (int64_t j = 0; j < op.cols; ++j)
          std::copy_n(in.begin() + static_cast<ptrdiff_t>((i * op.cols + j) * eb), eb,
                      out.begin() + static_cast<ptrdiff_t>((j * op.rows + i) * eb));
      return out;
    }
    case DtduOp::Kind::Fill: {
      std::vector<uint8_t> out;
      out.reserve(count * op.fill_pattern.size());
      for (uint64_t i = 0; i < count; ++i) out.insert(out.end(), op.fill_pattern.begin(), op.fill_pattern.end());
      return out;
    }
  }
  return {};
}

std::string_view routine_behavior_name(RoutineBehavior b) {
  switch (b) {
    case RoutineBehavior::LaunchGsdu: return "launch_gsdu";
    case RoutineBehavior::ScalarPostprocess: return "scalar_postprocess";
    case RoutineBehavior::NoOp: return "no_op";
  }
  return "?";
}

std::optional<RoutineBehavior> parse_routine_behavior(std::string_view s) {
  if (s == "launch_gsdu") return RoutineBehavior::LaunchGsdu;
  if (s == "scalar_postprocess") return RoutineBehavior::ScalarPostprocess;
  if (s == "no_op") return RoutineBehavior::NoOp;
  return std::nullopt;
}

void RoutineRegistry::add(const Routine& r) {
  if (!routines_.emplace(r.id, r).second)
    fail(ErrorKind::BadDescriptor, "routine " + std::to_string(r.id) + " registered twice");
}

const Routine& RoutineRegistry::get(uint32_t id) const {
  auto it = routines_.find(id);
  if (it == routines_.end()) fail(ErrorKind::UnknownRoutine, "routine " + std::to_string(id) + " is not registered");
  return it->second;
}

std::vector<int64_t> encode_gsdu_args(const GatherScatterPlan& p) {
  return {p.scatter ? 1 : 0,
          static_cast<int64_t>(p.index_addr),
          static_cast<int64_t>(p.count),
          static_cast<int64_t>(p.local_addr),
          static_cast<int64_t>(p.remote.kind),
          p.remote.cluster,
          p.remote.tpb,
          static_cast<int64_t>(p.remote_base),
          static_cast<int64_t>(p.remote_elems),
          p.elem_bytes};
}

GatherScatterPlan decode_gsdu_args(const std::vector<int64_t>& a) {
  if (a.size() != 10) fail(ErrorKind::BadDescriptor, "launch_gsdu takes 10 arguments");
  for (auto v : a)
    if (v < 0) fail(ErrorKind::BadDescriptor, "negative launch_gsdu argument");
  if (a[0] > 1 || a[4] > 2 || a[9] == 0) fail(ErrorKind::BadDescriptor, "bad launch_gsdu argument block");
  GatherScatterPlan p;
  p.scatter = a[0] == 1;
  p.index_addr = static_cast<uint64_t>(a[1]);
  p.count = static_cast<uint64_t>(a[2]);
  p.local_addr = static_cast<uint64_t>(a[3]);
  p.remote = {static_cast<SpaceKind>(a[4]), static_cast<uint32_t>(a[5]), static_cast<uint32_t>(a[6])};
  p.remote_base = static_cast<uint64_t>(a[7]);
  p.remote_elems = static_cast<uint64_t>(a[8]);
  p.elem_bytes = static_cast<uint32_t>(a[9]);
  return p;
}

void gsdu_execute(const GatherScatterPlan& plan, const AddressSpace& local, MemoryPort& mem,
                  std::vector<AccessRecord>* log) {
  const auto table = mem.read(local, plan.index_addr, plan.count * 4);
  if (log) log->push_back({local, plan.index_addr, plan.count * 4, false});
  const uint64_t eb = plan.elem_bytes;
  const uint64_t cap = mem.capacity(plan.remote);
  for (uint64_t i = 0; i < plan.count; ++i) {
    const int64_t idx = load_integer(DType::i32, std::span<const uint8_t>(table).subspan(i * 4, 4));
    const uint64_t raddr = plan.remote_base + static_cast<uint64_t>(idx) * eb;
    if (idx < 0 || static_cast<uint64_t>(idx) >= plan.remote_elems || raddr + eb > cap)
      fail(ErrorKind::IndexOutOfRange, "gather/scatter index " + std::to_string(idx) + " at position " +
                                           std::to_string(i) + " is out of range");
    const uint64_t laddr = plan.local_addr + i * eb;
    if (plan.scatter) {
      const auto v = mem.read(local, laddr, eb);
      mem.write(plan.remote, raddr, v);
      if (log) {
        log->push_back({local, laddr, eb, false});
        log->push_back({plan.remote, raddr, eb, true});
      }
    } else {
      const auto v = mem.read(plan.remote, raddr, eb);
      mem.write(local, laddr, v);
      if (log) {
        log->push_back({plan.remote, raddr, eb, false});
        log->push_back({local, laddr, eb, true});
      }
    }
  }
}

uint64_t gsdu_wire_bytes(const GatherScatterPlan& plan) {
  return plan.count * ceil_div(plan.elem_bytes, kGsduTransactionBytes) * kGsduTransactionBytes;
}

void scalar_postprocess(const std::vector<int64_t>& args, const AddressSpace& local, MemoryPort& mem,
                        std::vector<AccessRecord>* log) {
  if (args.size() != 5 || args[0] < 0 || args[1] < 0 || args[2] < 0 || args[2] > 4)
    fail(ErrorKind::BadDescriptor, "bad scalar_postprocess argument block");
  const auto t = static_cast<DType>(args[2]);
  const uint64_t w = byte_width(t);
  const auto addr = static_cast<uint64_t>(args[0]);
  const auto count = static_cast<uint64_t>(args[1]);
  auto data = mem.read(local, addr, count * w);
  for (uint64_t i = 0; i < count; ++i) {
    auto e = std::span<uint8_t>(data).subspan(i * w, w);
    if (is_float(t)) {
      store_element(t, load_element(t, e) * static_cast<double>(args[3]) + static_cast<double>(args[4]), e);
    } else {
      const double v = static_cast<double>(load_integer(t, e)) * static_cast<double>(args[3]) +
                       static_cast<double>(args[4]);
      store_element(t, v, e);
    }
  }
  mem.write(local, addr, data);
  if (log) {
    log->push_back({local, addr, count * w, false});
    log->push_back({local, addr, count * w, true});
  }
}

ClusterCpu::ClusterCpu(const RoutineRegistry* routines, uint32_t interrupt_overhead)
    : routines_(routines), overhead_(interrupt_overhead) {}

void ClusterCpu::submit(ServiceRequest r) {
  routines_->get(r.routine);
  waiting_.push_back(std::move(r));
}

std::vector<ServiceDone> ClusterCpu::step(uint64_t now, const WorkFn& work) {
  std::vector<ServiceDone> done;
  for (;;) {
    if (busy_) {
      if (busy_->finish > now) break;
      done.push_back(std::move(*busy_));
      busy_.reset();
    }
    auto best = waiting_.end();
    for (auto it = waiting_.begin(); it != waiting_.end(); ++it) {
      if (it->arrival > now) continue;
      if (best == waiting_.end() || std::tie(it->arrival, it->tpb, it->ticket) < std::tie(best->arrival, best->tpb, best->ticket))
        best = it;
    }
    if (best == waiting_.end()) break;
    ServiceDone s;
    s.request = std::move(*best);
    waiting_.erase(best);
    const Routine& r = routines_->get(s.request.routine);
    s.start = now;
    s.finish = now + overhead_ + r.cost + (work ? work(s.request, r) : 0);
    busy_ = std::move(s);
  }
  return done;
}

std::optional<uint64_t> ClusterCpu::next_event() const {
  if (busy_) return busy_->finish;
  std::optional<uint64_t> t;
  for (const auto& w : waiting_)
    if (!t || w.arrival < *t) t = w.arrival;
  return t;
}

}  // namespace tpbsim
