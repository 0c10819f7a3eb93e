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

#include <gtest/gtest.h>

#include <map>
#include <random>

#include "tpbsim/isa.hpp"
#include "test_util.hpp"

namespace tpbsim {
namespace {

using testing::kind_of;

WalkerConfig linear(int64_t base, int64_t n, int64_t step = 1) { return {{{base, step, base + step * (n - 1)}}}; }

WalkerConfig three_level() { return {{{0, 512, 512}, {0, 64, 128}, {0, 1, 3}}}; }

TpbInstruction matmul_instr() {
  TcuOp op;
  op.m = 4;
  op.k = 6;
  op.n = 1;
  TpbInstruction in;
  in.seq = 3;
  in.mask = TpbMask::single(1);
  in.op = op;
  in.in_walkers = {three_level(), three_level()};
  in.out_walker = three_level();
  in.syncs = {SyncAction::monitor(CounterRef::local(3), 2), SyncAction::update(CounterRef::at(0, 1, 4))};
  return finalize(in);
}

CvuPipeline add_pipeline(int64_t rows, int64_t len) {
  CvuPipeline p;
  p.rows = rows;
  p.row_length = len;
  p.a_dtype = DType::f16;
  p.b_dtype = DType::f16;
  p.out_dtype = DType::f16;
  p.stages = {{CvuOpcode::Add, {CvuOperand::Kind::Vec, 0}, {CvuOperand::Kind::StreamA, 0}, {CvuOperand::Kind::StreamB, 0}}};
  p.emit = {{CvuOperand::Kind::Vec, 0}};
  return p;
}

TEST(Size, MatchesFormula) {
  const auto in = matmul_instr();
  EXPECT_EQ(in.encoded_bits, 1248u);
  EXPECT_EQ(transmit_cycles(in.encoded_bits, 64), 20u);
  TpbInstruction small;
  small.mask = TpbMask::single(0);
  small.op = CsuOp{};
  small = finalize(small);
  EXPECT_EQ(small.unit, Unit::CSU);
  EXPECT_EQ(small.encoded_bits, 256u);
  EXPECT_EQ(encoded_size(small), encoded_size(small));
}

TEST(Size, PayloadPerUnit) {
  EXPECT_EQ(payload_bits(TcuOp{}), 128u);
  EXPECT_EQ(payload_bits(add_pipeline(1, 1)), 128u);
  DtduOp fill;
  fill.kind = DtduOp::Kind::Fill;
  fill.dests = {{0, 1, 0}, {0, 2, 0}};
  EXPECT_EQ(payload_bits(fill), 64u + 128u + 64u);
  EXPECT_EQ(payload_bits(CsuOp{1, {1, 2, 3}}), 256u);
}

TEST(Validate, AcceptsWellFormedInstructions) {
  MachineConfig cfg;
  TcuOp op;
  op.m = 4;
  op.k = 8;
  op.n = 2;
  TpbInstruction in;
  in.mask = TpbMask::single(5);
  in.op = op;
  in.in_walkers = {linear(0, 32), linear(100, 16)};
  in.out_walker = linear(200, 8, 4);
  validate_instruction(finalize(in), cfg);

  TpbInstruction c;
  c.mask = TpbMask::single(0);
  c.op = add_pipeline(2, 8);
  c.in_walkers = {linear(0, 16, 2), linear(64, 16, 2)};
  c.out_walker = linear(128, 16, 2);
  validate_instruction(finalize(c), cfg);
}

TEST(Validate, RejectsStructuralErrors) {
  MachineConfig cfg;
  TcuOp op;
  op.m = 4;
  op.k = 8;
  op.n = 2;
  TpbInstruction in;
  in.mask = TpbMask::single(5);
  in.op = op;
  in.in_walkers = {linear(0, 32), linear(100, 16)};
  in.out_walker = linear(200, 8, 4);
  in = finalize(in);

  auto bad = in;
  bad.mask = TpbMask{};
  EXPECT_EQ(kind_of([&] { validate_instruction(bad, cfg); }), ErrorKind::BadDescriptor);
  bad = in;
  bad.mask = TpbMask::single(56);
  EXPECT_EQ(kind_of([&] { validate_instruction(bad, cfg); }), ErrorKind::UnroutableTarget);
  bad = in;
  bad.in_walkers.pop_back();
  EXPECT_EQ(kind_of([&] { validate_instruction(finalize(bad), cfg); }), ErrorKind::BadDescriptor);
  bad = in;
  bad.in_walkers[1] = linear(100, 15);
  EXPECT_EQ(kind_of([&] { validate_instruction(finalize(bad), cfg); }), ErrorKind::BadDescriptor);
  bad = in;
  bad.encoded_bits += 1;
  EXPECT_EQ(kind_of([&] { validate_instruction(bad, cfg); }), ErrorKind::BadDescriptor);
  bad = in;
  bad.unit = Unit::CVU;
  EXPECT_EQ(kind_of([&] { validate_instruction(bad, cfg); }), ErrorKind::BadDescriptor);
  bad = in;
  std::get<TcuOp>(bad.op).in_dtype = DType::f32;
  EXPECT_EQ(kind_of([&] { validate_instruction(bad, cfg); }), ErrorKind::UnsupportedDtype);
  bad = in;
  bad.in_walkers[0] = {{{0, 3, 7}}};
  EXPECT_EQ(kind_of([&] { validate_instruction(finalize(bad), cfg); }), ErrorKind::InvalidLevel);
  bad = in;
  bad.syncs = {SyncAction::update(CounterRef::local(1), SyncStage::PerChunk, 0)};
  EXPECT_EQ(kind_of([&] { validate_instruction(finalize(bad), cfg); }), ErrorKind::BadDescriptor);
  bad = in;
  bad.syncs = {SyncAction::monitor(CounterRef::local(64), 1)};
  EXPECT_EQ(kind_of([&] { validate_instruction(finalize(bad), cfg); }), ErrorKind::IndexOutOfRange);
}

TEST(Pipeline, StructuralChecks) {
  using K = CvuOperand::Kind;
  validate_pipeline(add_pipeline(1, 4));
  auto p = add_pipeline(1, 4);
  p.stages[0].b = {};
  EXPECT_EQ(kind_of([&] { validate_pipeline(p); }), ErrorKind::InvalidPipeline);
  p = add_pipeline(1, 4);
  p.stages[0].a = {K::Vec, 1};  // never written
  EXPECT_EQ(kind_of([&] { validate_pipeline(p); }), ErrorKind::InvalidPipeline);
  p = add_pipeline(1, 4);
  p.stages.push_back({CvuOpcode::ReduceSum, {K::Vec, 1}, {K::Vec, 0}, {}});  // reduction into a vector slot
  EXPECT_EQ(kind_of([&] { validate_pipeline(p); }), ErrorKind::InvalidPipeline);
  p = add_pipeline(1, 4);
  p.stages.push_back({CvuOpcode::ReduceSum, {K::Scalar, 1}, {K::Vec, 0}, {}});
  p.emit = {{K::Scalar, 1}};
  validate_pipeline(p);
  EXPECT_EQ(p.out_elems(), 1);
  p.b_dtype.reset();
  EXPECT_EQ(kind_of([&] { validate_pipeline(p); }), ErrorKind::InvalidPipeline);
}

TpbInstruction random_instruction(std::mt19937_64& rng) {
  auto walker = [&] {
    WalkerConfig w;
    const size_t n = 1 + rng() % 4;
    for (size_t i = 0; i < n; ++i) {
      const int64_t init = static_cast<int64_t>(rng() % 1000), step = 1 + static_cast<int64_t>(rng() % 9);
      w.levels.push_back({init, step, init + step * static_cast<int64_t>(rng() % 4)});
    }
    return w;
  };
  TpbInstruction in;
  in.seq = rng() % 100000;
  for (int i = 0; i < 3; ++i) in.mask.set(static_cast<uint32_t>(rng() % 56));
  switch (rng() % 4) {
    case 0: {
      TcuOp op;
      if (rng() & 1) {
        op.kind = TcuOp::Kind::Conv2d;
        op.batch = 1;
        op.height = 9;
        op.width = 7;
        op.cin = 3;
        op.cout = 5;
        op.kh = op.kw = 3;
        op.stride = 2;
        op.pad = 1;
      } else {
        op.m = 3;
        op.k = 5;
        op.n = 7;
      }
      op.in_dtype = DType::f16;
      op.acc_dtype = DType::f32;
      op.act = Activation::Clamp;
      op.clamp_lo = -0.1;
      op.clamp_hi = 1.0 / 3.0;
      in.op = op;
      in.in_walkers = {walker(), walker()};
      in.out_walker = walker();
      break;
    }
    case 1: {
      auto p = add_pipeline(3, 5);
      p.row_b = 0;
      p.stages.push_back({CvuOpcode::ScaleBias, {CvuOperand::Kind::Vec, 1}, {CvuOperand::Kind::Vec, 0}, {}, 0.125, -3.5});
      p.stages.push_back({CvuOpcode::Convert, {CvuOperand::Kind::Vec, 2}, {CvuOperand::Kind::Vec, 1}, {}, 0, 0, DType::i8});
      p.stages.push_back({CvuOpcode::ReduceMax, {CvuOperand::Kind::Scalar, 3}, {CvuOperand::Kind::Vec, 2}, {}});
      p.emit = {{CvuOperand::Kind::Scalar, 3}};
      in.op = p;
      in.in_walkers = {walker(), walker()};
      in.out_walker = walker();
      break;
    }
    case 2: {
      DtduOp op;
      op.kind = DtduOp::Kind::Fill;
      op.elem_bytes = 2;
      op.fill_pattern = {0x3c, 0x00};
      op.dests = {{1, 2, 4096}, {3, 0, 8}};
      in.op = op;
      in.out_walker = walker();
      break;
    }
    default:
      in.op = CsuOp{static_cast<uint32_t>(rng() % 4), {-5, 17, 0}};
      break;
  }
  in.syncs.push_back(SyncAction::monitor(CounterRef::local(rng() % 64), rng() % 9));
  in.syncs.push_back(SyncAction::update(CounterRef::at(1, 2, 3), SyncStage::PerChunk, 64));
  in.syncs.push_back(SyncAction::update(CounterRef::ccb(2)));
  return finalize(in);
}

TEST(Text, RoundTripsRandomInstructions) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 300; ++i) {
    const auto in = random_instruction(rng);
    const auto text = format_instruction(in);
    EXPECT_EQ(text.find('\n'), std::string::npos);
    EXPECT_EQ(parse_instruction(text), in) << text;
  }
}

TEST(Text, GoldenMatmulRecord) {
  EXPECT_EQ(format_instruction(matmul_instr()),
            "instr seq=3 unit=TCU mask=1 "
            "op=tcu{kind=matmul;m=4;k=6;n=1;in=i8;acc=i32;out=i32;act=identity} "
            "in=w(0:512:512,0:64:128,0:1:3);w(0:512:512,0:64:128,0:1:3) out=w(0:512:512,0:64:128,0:1:3) "
            "sync=mon:L3>=2@before,upd:0.1.4@after bits=1248");
  EXPECT_EQ(kind_of([] { parse_instruction("instr seq=1"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { parse_op("tcu{kind=gemm}"); }), ErrorKind::ParseError);
}

TEST(Queue, CapacityAndBackpressure) {
  InstructionQueue q(4, 64);
  TpbInstruction in;
  in.unit = Unit::TCU;
  for (int i = 0; i < 64; ++i) EXPECT_EQ(q.enqueue(static_cast<uint32_t>(i % 4), in), EnqueueResult::Ok);
  EXPECT_EQ(q.enqueue(0, in), EnqueueResult::Backpressure);
  EXPECT_EQ(q.size(), 64u);
  EXPECT_TRUE(q.ready_pop(0, Unit::TCU));
  EXPECT_EQ(q.enqueue(0, in), EnqueueResult::Ok);
}

TEST(Queue, UnitsAreIndependent) {
  InstructionQueue q(4, 64);
  TpbInstruction a, b;
  a.seq = 1;
  a.unit = Unit::TCU;
  b.seq = 2;
  b.unit = Unit::CVU;
  q.enqueue(0, a);
  q.enqueue(0, b);
  EXPECT_EQ(q.ready_pop(0, Unit::CVU)->seq, 2u);
  EXPECT_EQ(q.ready_pop(0, Unit::TCU)->seq, 1u);
  EXPECT_FALSE(q.ready_pop(0, Unit::TCU));
}

TEST(Queue, FifoOrderUnderRandomInterleavings) {
  std::mt19937_64 rng(4);
  InstructionQueue q(4, 64);
  std::map<std::pair<uint32_t, int>, std::vector<uint64_t>> pushed, popped;
  uint64_t seq = 0;
  for (int step = 0; step < 20000; ++step) {
    const uint32_t tpb = rng() % 4;
    const auto unit = static_cast<Unit>(rng() % 4);
    if (rng() % 2) {
      TpbInstruction in;
      in.seq = seq;
      in.unit = unit;
      if (q.enqueue(tpb, in) == EnqueueResult::Ok) pushed[{tpb, static_cast<int>(unit)}].push_back(seq++);
    } else if (auto in = q.ready_pop(tpb, unit)) {
      popped[{tpb, static_cast<int>(unit)}].push_back(in->seq);
    }
  }
  for (auto& [key, seqs] : popped) {
    const auto& all = pushed[key];
    ASSERT_LE(seqs.size(), all.size());
    EXPECT_TRUE(std::equal(seqs.begin(), seqs.end(), all.begin()));
  }
}

}  // namespace
}  // namespace tpbsim
