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

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tpbsim/dtype.hpp"
#include "tpbsim/machine.hpp"
#include "tpbsim/sync.hpp"
#include "tpbsim/walker.hpp"

namespace tpbsim {

enum class Unit : uint8_t { TCU = 0, CVU = 1, DTDU = 2, CSU = 3 };
inline constexpr uint32_t kUnitCount = 4;
std::string_view unit_name(Unit u);
std::optional<Unit> parse_unit(std::string_view s);

enum class SyncKind : uint8_t { Update, Monitor };
enum class SyncStage : uint8_t { BeforeStart, PerChunk, AfterComplete };

struct SyncAction {
  SyncKind kind = SyncKind::Update;
  CounterRef counter;
  uint64_t expected = 0;     // monitors only
  SyncStage stage = SyncStage::AfterComplete;
  uint64_t chunk_elems = 0;  // PerChunk only

  static SyncAction monitor(CounterRef c, uint64_t expected,
                            SyncStage stage = SyncStage::BeforeStart, uint64_t chunk = 0) {
    return {SyncKind::Monitor, c, expected, stage, chunk};
  }
  static SyncAction update(CounterRef c, SyncStage stage = SyncStage::AfterComplete,
                           uint64_t chunk = 0) {
    return {SyncKind::Update, c, 0, stage, chunk};
  }
  bool operator==(const SyncAction&) const = default;
};

// ---- per-unit op descriptors -------------------------------------------

enum class Activation : uint8_t { Identity, Relu, Relu6, Clamp };

struct TcuOp {
  enum class Kind : uint8_t { Matmul, Conv2d };
  Kind kind = Kind::Matmul;
  // matmul
  int64_t m = 0, k = 0, n = 0;
  // conv2d, NHWC input and [kh, kw, cin, cout] weights
  int64_t batch = 0, height = 0, width = 0, cin = 0, cout = 0;
  int64_t kh = 0, kw = 0, stride = 1, pad = 0;
  DType in_dtype = DType::i8;
  DType acc_dtype = DType::i32;
  DType out_dtype = DType::i32;
  Activation act = Activation::Identity;
  double clamp_lo = 0, clamp_hi = 0;

  int64_t out_h() const { return (height + 2 * pad - kh) / stride + 1; }
  int64_t out_w() const { return (width + 2 * pad - kw) / stride + 1; }
  // Contraction geometry of the (implicit) matrix product.
  int64_t rows() const { return kind == Kind::Matmul ? m : batch * out_h() * out_w(); }
  int64_t contraction() const { return kind == Kind::Matmul ? k : kh * kw * cin; }
  int64_t cols() const { return kind == Kind::Matmul ? n : cout; }
  int64_t act_elems() const { return kind == Kind::Matmul ? m * k : batch * height * width * cin; }
  int64_t wt_elems() const { return kind == Kind::Matmul ? k * n : kh * kw * cin * cout; }
  int64_t out_elems() const { return rows() * cols(); }
  bool operator==(const TcuOp&) const = default;
};

enum class CvuOpcode : uint8_t {
  Add, Sub, Mul, Div, Max, Min, Exp2, Reciprocal, Sqrt, Abs, ScaleBias, Convert,
  ReduceMax, ReduceSum, BroadcastScalar, SelectGe,
};
std::string_view cvu_opcode_name(CvuOpcode op);
std::optional<CvuOpcode> parse_cvu_opcode(std::string_view s);
int cvu_arity(CvuOpcode op);
bool cvu_is_reduction(CvuOpcode op);

struct CvuOperand {
  enum class Kind : uint8_t { None, StreamA, StreamB, RowB, Vec, Scalar, Imm };
  Kind kind = Kind::None;
  uint32_t index = 0;  // Vec/Scalar slot, or RowB element
  bool operator==(const CvuOperand&) const = default;
};
std::string format_operand(const CvuOperand& o);
CvuOperand parse_operand(const std::string& s);

// One operator of a CVU chain. `imm` feeds Imm operands and ScaleBias's
// scale; `imm2` is ScaleBias's bias and SelectGe's fallback value.
struct CvuStage {
  CvuOpcode op = CvuOpcode::Add;
  CvuOperand dst;
  CvuOperand a;
  CvuOperand b;
  double imm = 0;
  double imm2 = 0;
  DType convert_to = DType::f32;  // Convert only
  bool operator==(const CvuStage&) const = default;
};

inline constexpr uint32_t kCvuVecSlots = 4;
inline constexpr uint32_t kCvuScalarRegs = 4;

// A CVU configuration. The stream is processed row by row: every stage
// sees either a whole row (vector) or a per-row scalar. Stream B is either
// elementwise (same length as A) or `row_b` scalars per row.
struct CvuPipeline {
  int64_t rows = 1;
  int64_t row_length = 1;
  DType a_dtype = DType::f32;
  std::optional<DType> b_dtype;
  uint32_t row_b = 0;  // 0 = elementwise stream B
  DType out_dtype = DType::f32;
  std::vector<CvuOperand> emit;  // one Vec slot, or one or more Scalar regs
  std::vector<CvuStage> stages;

  int64_t in_elems() const { return rows * row_length; }
  int64_t b_elems() const { return row_b ? rows * row_b : rows * row_length; }
  int64_t out_elems() const;
  bool operator==(const CvuPipeline&) const = default;
};

struct DtduDest {
  uint32_t cluster = 0;
  uint32_t tpb = 0;
  uint64_t base = 0;
  bool operator==(const DtduDest&) const = default;
};

struct DtduOp {
  enum class Kind : uint8_t { Copy, Transpose2d, Fill };
  Kind kind = Kind::Copy;
  uint32_t elem_bytes = 1;
  int64_t rows = 0, cols = 0;          // Transpose2d
  std::vector<uint8_t> fill_pattern;   // Fill, elem_bytes long
  // Empty = local HBSM with absolute out addresses; otherwise out addresses
  // are offsets added to each destination base.
  std::vector<DtduDest> dests;
  bool operator==(const DtduOp&) const = default;
};

struct CsuOp {
  uint32_t routine = 0;
  std::vector<int64_t> args;
  bool operator==(const CsuOp&) const = default;
};
inline constexpr size_t kCsuMaxArgs = 12;

using OpDescriptor = std::variant<TcuOp, CvuPipeline, DtduOp, CsuOp>;

Unit unit_for(const OpDescriptor& op);
uint64_t payload_bits(const OpDescriptor& op);
// Structural checks of a CVU chain (operand kinds, slot use, emit).
void validate_pipeline(const CvuPipeline& p);

// Dynamic bitset over global TPB index (cluster * tpbs_per_cluster + tpb).
class TpbMask {
 public:
  TpbMask() = default;
  static TpbMask single(uint32_t global) { TpbMask m; m.set(global); return m; }
  void set(uint32_t global);
  bool test(uint32_t global) const;
  bool empty() const;
  std::vector<uint32_t> members() const;
  bool operator==(const TpbMask& o) const { return members() == o.members(); }

 private:
  std::vector<uint64_t> words_;
};

struct TpbInstruction {
  uint64_t seq = 0;
  Unit unit = Unit::TCU;
  TpbMask mask;
  OpDescriptor op;
  std::vector<WalkerConfig> in_walkers;
  std::optional<WalkerConfig> out_walker;
  std::vector<SyncAction> syncs;
  uint64_t encoded_bits = 0;

  bool operator==(const TpbInstruction&) const = default;
};

inline constexpr uint64_t kHeaderBits = 128;
inline constexpr uint64_t kBitsPerWalkerLevel = 96;
inline constexpr uint64_t kBitsPerSync = 64;
inline constexpr uint64_t kMinInstructionBits = 256;

// header + 96 per walker loop level + 64 per sync action + op payload,
// never below 256 bits.
uint64_t encoded_size(const TpbInstruction& instr);
uint64_t transmit_cycles(uint64_t bits, uint32_t bits_per_cycle);

// Structural checks: mask, walker counts per unit, sync action shape,
// op parameters. Sets nothing; throws on the first problem.
void validate_instruction(const TpbInstruction& instr, const MachineConfig& cfg);
// Fills in unit and encoded_bits from the op and walkers.
TpbInstruction finalize(TpbInstruction instr);

std::string format_instruction(const TpbInstruction& instr);
TpbInstruction parse_instruction(const std::string& line);

std::string format_op(const OpDescriptor& op);
OpDescriptor parse_op(const std::string& text);
std::string format_sync(const SyncAction& s);
SyncAction parse_sync(const std::string& text);

enum class EnqueueResult : uint8_t { Ok, Backpressure };

// Cluster instruction buffer: one FIFO per (tpb, unit); capacity counts
// every buffered instruction in the cluster.
class InstructionQueue {
 public:
  InstructionQueue(uint32_t tpbs, uint32_t capacity);

  EnqueueResult enqueue(uint32_t tpb, const TpbInstruction& instr);
  bool has_room(uint32_t count) const { return size_ + count <= capacity_; }
  std::optional<TpbInstruction> ready_pop(uint32_t tpb, Unit unit);
  const TpbInstruction* peek(uint32_t tpb, Unit unit) const;

  size_t size() const { return size_; }
  size_t fifo_size(uint32_t tpb, Unit unit) const;
  uint32_t capacity() const { return capacity_; }

 private:
  std::vector<std::array<std::deque<TpbInstruction>, kUnitCount>> fifos_;
  uint32_t capacity_;
  size_t size_ = 0;
};

}  // namespace tpbsim
