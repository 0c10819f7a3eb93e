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

#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include "tpbsim/funits.hpp"
#include "test_util.hpp"

namespace tpbsim {
namespace {

using testing::kind_of;

template <typename T>
std::vector<uint8_t> bytes_of(DType t, const std::vector<T>& values) {
  std::vector<uint8_t> out(values.size() * byte_width(t));
  for (size_t i = 0; i < values.size(); ++i)
    store_element(t, static_cast<double>(values[i]), std::span<uint8_t>(out).subspan(i * byte_width(t), byte_width(t)));
  return out;
}

std::vector<double> values_of(DType t, const std::vector<uint8_t>& bytes) {
  std::vector<double> out(bytes.size() / byte_width(t));
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = load_element(t, std::span<const uint8_t>(bytes).subspan(i * byte_width(t), byte_width(t)));
  return out;
}

std::vector<int64_t> random_ints(std::mt19937_64& rng, size_t n, int64_t lo, int64_t hi) {
  std::vector<int64_t> v(n);
  for (auto& x : v) x = lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
  return v;
}

// ---- TCU ------------------------------------------------------------------

TEST(Tcu, Int8Tile32x32x64Takes32MacCycles) {
  MachineConfig cfg;
  TcuOp op;
  op.m = 32;
  op.k = 32;
  op.n = 64;
  const auto t = tcu_timing(op, cfg);
  EXPECT_EQ(t.mac_cycles, 32u);
  EXPECT_LE(t.total(), 48u);
}

TEST(Tcu, MacCyclesBoundTotalWork) {
  MachineConfig cfg;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    TcuOp op;
    op.m = 1 + static_cast<int64_t>(rng() % 80);
    op.k = 1 + static_cast<int64_t>(rng() % 200);
    op.n = 1 + static_cast<int64_t>(rng() % 200);
    const double work = static_cast<double>(op.m * op.k * op.n) / (8 * 64 * 4);
    const auto mac = tcu_timing(op, cfg).mac_cycles;
    EXPECT_GE(static_cast<double>(mac), work);
    if (op.k % 32 == 0 && op.n % 64 == 0) {
      EXPECT_EQ(static_cast<double>(mac), work);
    }
  }
}

TEST(Tcu, IdentityWeightsReproduceInput) {
  std::mt19937_64 rng(2);
  TcuOp op;
  op.m = op.k = op.n = 32;
  const auto a = random_ints(rng, 32 * 32, -128, 127);
  std::vector<int64_t> eye(32 * 32, 0);
  for (int i = 0; i < 32; ++i) eye[i * 33] = 1;
  const auto out = tcu_execute(op, bytes_of(DType::i8, a), bytes_of(DType::i8, eye));
  const auto got = values_of(DType::i32, out);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(got[i], a[i]);
}

TEST(Tcu, IntegerMatmulMatchesTripleLoop) {
  std::mt19937_64 rng(3);
  for (DType in : {DType::i8, DType::u8}) {
    TcuOp op;
    op.m = 48;
    op.k = 96;
    op.n = 17;
    op.in_dtype = in;
    const auto a = random_ints(rng, 48 * 96, dtype_min(in), dtype_max(in));
    const auto w = random_ints(rng, 96 * 17, dtype_min(in), dtype_max(in));
    const auto got = values_of(DType::i32, tcu_execute(op, bytes_of(in, a), bytes_of(in, w)));
    for (int64_t i = 0; i < 48; ++i)
      for (int64_t j = 0; j < 17; ++j) {
        int64_t acc = 0;
        for (int64_t k = 0; k < 96; ++k) acc += a[i * 96 + k] * w[k * 17 + j];
        ASSERT_EQ(got[i * 17 + j], acc);
      }
  }
}

TEST(Tcu, ActivationThenSaturatingNarrowing) {
  TcuOp op;
  op.m = 1;
  op.k = 2;
  op.n = 3;
  op.out_dtype = DType::i8;
  op.act = Activation::Relu;
  // columns: 2*100 + 2*100, -(...), 3*1 + 3*1
  const std::vector<int64_t> a{2, 2};
  const std::vector<int64_t> w{100, -100, 1, 100, -100, 2};
  const auto got = values_of(DType::i8, tcu_execute(op, bytes_of(DType::i8, a), bytes_of(DType::i8, w)));
  EXPECT_EQ(got, (std::vector<double>{127, 0, 6}));
  op.act = Activation::Clamp;
  op.clamp_lo = -50;
  op.clamp_hi = 5;
  const auto c = values_of(DType::i8, tcu_execute(op, bytes_of(DType::i8, a), bytes_of(DType::i8, w)));
  EXPECT_EQ(c, (std::vector<double>{5, -50, 5}));
}

TEST(Tcu, ConvMatchesDirectLoops) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    TcuOp op;
    op.kind = TcuOp::Kind::Conv2d;
    op.batch = 1 + static_cast<int64_t>(rng() % 2);
    op.height = 3 + static_cast<int64_t>(rng() % 6);
    op.width = 3 + static_cast<int64_t>(rng() % 6);
    op.cin = 1 + static_cast<int64_t>(rng() % 4);
    op.cout = 1 + static_cast<int64_t>(rng() % 5);
    op.kh = op.kw = 1 + static_cast<int64_t>(rng() % 3);
    op.stride = 1 + static_cast<int64_t>(rng() % 2);
    op.pad = static_cast<int64_t>(rng() % op.kh);
    const auto x = random_ints(rng, static_cast<size_t>(op.act_elems()), -128, 127);
    const auto w = random_ints(rng, static_cast<size_t>(op.wt_elems()), -128, 127);
    const auto got = values_of(DType::i32, tcu_execute(op, bytes_of(DType::i8, x), bytes_of(DType::i8, w)));
    ASSERT_EQ(static_cast<int64_t>(got.size()), op.out_elems());
    size_t pos = 0;
    for (int64_t b = 0; b < op.batch; ++b)
      for (int64_t oh = 0; oh < op.out_h(); ++oh)
        for (int64_t ow = 0; ow < op.out_w(); ++ow)
          for (int64_t co = 0; co < op.cout; ++co) {
            int64_t acc = 0;
            for (int64_t i = 0; i < op.kh; ++i)
              for (int64_t j = 0; j < op.kw; ++j)
                for (int64_t ci = 0; ci < op.cin; ++ci) {
                  const int64_t ih = oh * op.stride + i - op.pad, iw = ow * op.stride + j - op.pad;
                  if (ih < 0 || iw < 0 || ih >= op.height || iw >= op.width) continue;
                  acc += x[((b * op.height + ih) * op.width + iw) * op.cin + ci] *
                         w[((i * op.kw + j) * op.cin + ci) * op.cout + co];
                }
            ASSERT_EQ(got[pos++], acc);
          }
  }
}

TEST(Tcu, HalfMatmulWithinTolerance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  TcuOp op;
  op.m = 16;
  op.k = 64;
  op.n = 24;
  op.in_dtype = DType::f16;
  op.acc_dtype = DType::f32;
  op.out_dtype = DType::f32;
  std::vector<double> a(16 * 64), w(64 * 24);
  for (auto& v : a) v = nd(rng);
  for (auto& v : w) v = nd(rng);
  const auto ab = bytes_of(DType::f16, a), wb = bytes_of(DType::f16, w);
  const auto aq = values_of(DType::f16, ab), wq = values_of(DType::f16, wb);
  const auto got = values_of(DType::f32, tcu_execute(op, ab, wb));
  double scale = 0, err = 0;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 24; ++j) {
      double ref = 0;
      for (int k = 0; k < 64; ++k) ref += aq[i * 64 + k] * wq[k * 24 + j];
      scale = std::max(scale, std::fabs(ref));
      err = std::max(err, std::fabs(ref - got[i * 24 + j]));
    }
  EXPECT_LE(err / scale, 1e-5);
}

TEST(Tcu, RejectsBadDtypes) {
  MachineConfig cfg;
  TcuOp op;
  op.m = op.k = op.n = 1;
  op.in_dtype = DType::i32;
  TpbInstruction in;
  in.mask = TpbMask::single(0);
  in.op = op;
  in.in_walkers = {{{{0, 1, 0}}}, {{{0, 1, 0}}}};
  in.out_walker = WalkerConfig{{{0, 1, 0}}};
  EXPECT_EQ(kind_of([&] { validate_instruction(finalize(in), cfg); }), ErrorKind::UnsupportedDtype);
}

// ---- CVU ------------------------------------------------------------------

std::vector<double> softmax_two_pass(const std::vector<double>& x, int64_t rows, int64_t len, DType in, DType out) {
  const auto xb = bytes_of(in, x);
  const auto stats = cvu_execute(recipes::softmax_stats(rows, len, in), xb, {});
  return values_of(out, cvu_execute(recipes::softmax_normalize(rows, len, in, out), xb, stats));
}

TEST(Cvu, SoftmaxOfUniformRow) {
  EXPECT_EQ(softmax_two_pass({0, 0, 0, 0}, 1, 4, DType::f32, DType::f32), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
}

TEST(Cvu, HalfSoftmaxMatchesReference) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0, 3);
  std::vector<double> x(1024);
  for (auto& v : x) v = nd(rng);
  const auto xq = values_of(DType::f16, bytes_of(DType::f16, x));
  const auto got = softmax_two_pass(x, 1, 1024, DType::f16, DType::f16);
  double m = -INFINITY, s = 0;
  for (double v : xq) m = std::max(m, v);
  for (double v : xq) s += std::exp(v - m);
  for (size_t i = 0; i < x.size(); ++i) {
    const double ref = std::exp(xq[i] - m) / s;
    EXPECT_LE(std::fabs(got[i] - ref), 1e-3 * ref + 1e-7) << i;
  }
}

TEST(Cvu, LayernormMatchesReference) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(1, 2);
  const int64_t rows = 8, len = 48;
  std::vector<double> x(rows * len);
  for (auto& v : x) v = nd(rng);
  const auto xb = bytes_of(DType::f32, x);
  const auto stats = cvu_execute(recipes::layernorm_stats(rows, len, DType::f32, 1e-5), xb, {});
  const auto got = values_of(DType::f32, cvu_execute(recipes::layernorm_normalize(rows, len, DType::f32, DType::f32), xb, stats));
  for (int64_t r = 0; r < rows; ++r) {
    double mean = 0, var = 0;
    for (int64_t i = 0; i < len; ++i) mean += x[r * len + i];
    mean /= len;
    for (int64_t i = 0; i < len; ++i) var += (x[r * len + i] - mean) * (x[r * len + i] - mean);
    var /= len;
    for (int64_t i = 0; i < len; ++i)
      EXPECT_NEAR(got[r * len + i], (x[r * len + i] - mean) / std::sqrt(var + 1e-5), 1e-5);
  }
}

TEST(Cvu, AddOfTwoStreamsIsExact) {
  std::mt19937_64 rng(8);
  const auto a = random_ints(rng, 256, -1000000, 1000000), b = random_ints(rng, 256, -1000000, 1000000);
  CvuPipeline p;
  p.rows = 4;
  p.row_length = 64;
  p.a_dtype = p.out_dtype = DType::i32;
  p.b_dtype = DType::i32;
  p.stages = {{CvuOpcode::Add, {CvuOperand::Kind::Vec, 0}, {CvuOperand::Kind::StreamA, 0}, {CvuOperand::Kind::StreamB, 0}}};
  p.emit = {{CvuOperand::Kind::Vec, 0}};
  EXPECT_TRUE(cvu_integer_domain(p));
  const auto got = values_of(DType::i32, cvu_execute(p, bytes_of(DType::i32, a), bytes_of(DType::i32, b)));
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(got[i], a[i] + b[i]);
}

TEST(Cvu, PoolingRecipes) {
  const std::vector<int64_t> x{1, 5, -3, 2, 7, 7, 0, -8};
  const auto mx = values_of(DType::i8, cvu_execute(recipes::pool_max(2, 4, DType::i8, DType::i8), bytes_of(DType::i8, x), {}));
  EXPECT_EQ(mx, (std::vector<double>{5, 7}));
  const auto avg =
      values_of(DType::i8, cvu_execute(recipes::pool_avg(2, 4, DType::i8, DType::i8), bytes_of(DType::i8, x), {}));
  // 5/4 = 1.25 -> 1; 6/4 = 1.5 -> 2 (ties to even)
  EXPECT_EQ(avg, (std::vector<double>{1, 2}));
  const std::vector<int64_t> odd{1, 1, 1, 0, 0, 0};
  // 3/6 = 0.5 -> 0 even though 1/6 is inexact
  EXPECT_EQ(values_of(DType::i8, cvu_execute(recipes::pool_avg(1, 6, DType::i8, DType::i8), bytes_of(DType::i8, odd), {})),
            (std::vector<double>{0}));
}

TEST(Cvu, ChainEqualsStageByStageComposition) {
  using K = CvuOperand::Kind;
  std::mt19937_64 rng(9);
  const CvuOpcode unary_ops[] = {CvuOpcode::Abs, CvuOpcode::ScaleBias, CvuOpcode::Exp2, CvuOpcode::Convert};
  const CvuOpcode binary_ops[] = {CvuOpcode::Add, CvuOpcode::Sub, CvuOpcode::Mul, CvuOpcode::Max, CvuOpcode::Min,
                                  CvuOpcode::SelectGe};
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t rows = 3, len = 16;
    std::vector<double> a(rows * len), b(rows * len);
    for (auto& v : a) v = nd(rng);
    for (auto& v : b) v = nd(rng);
    const auto ab = bytes_of(DType::f32, a), bb = bytes_of(DType::f32, b);
    // Chain: V0 = op(A, B) then k unary/binary stages on V0 with B or Imm.
    std::vector<CvuStage> stages;
    stages.push_back({binary_ops[rng() % 6], {K::Vec, 0}, {K::StreamA, 0}, {K::StreamB, 0}, 0, -1});
    const int extra = 1 + static_cast<int>(rng() % 4);
    for (int s = 0; s < extra; ++s) {
      CvuStage st;
      st.dst = {K::Vec, 0};
      st.a = {K::Vec, 0};
      if (rng() & 1) {
        st.op = unary_ops[rng() % 4];
        st.imm = 0.5;
        st.imm2 = 0.25;
        st.convert_to = DType::f16;
      } else {
        st.op = binary_ops[rng() % 6];
        st.b = (rng() & 1) ? CvuOperand{K::StreamB, 0} : CvuOperand{K::Imm, 0};
        st.imm = nd(rng);
        st.imm2 = 1.5;
      }
      stages.push_back(st);
    }
    CvuPipeline chain;
    chain.rows = rows;
    chain.row_length = len;
    chain.a_dtype = chain.out_dtype = DType::f32;
    chain.b_dtype = DType::f32;
    chain.stages = stages;
    chain.emit = {{K::Vec, 0}};
    const auto whole = cvu_execute(chain, ab, bb);

    auto cur = ab;
    for (size_t s = 0; s < stages.size(); ++s) {
      CvuPipeline one = chain;
      auto st = stages[s];
      if (s > 0) st.a = {K::StreamA, 0};
      one.stages = {st};
      cur = cvu_execute(one, cur, bb);
    }
    EXPECT_EQ(whole, cur) << trial;
  }
}

TEST(Cvu, NonfiniteIntegerOutputFaultsWhenConfigured) {
  CvuPipeline p;
  p.rows = 1;
  p.row_length = 2;
  p.a_dtype = DType::f32;
  p.out_dtype = DType::i8;
  p.stages = {{CvuOpcode::Reciprocal, {CvuOperand::Kind::Vec, 0}, {CvuOperand::Kind::StreamA, 0}, {}}};
  p.emit = {{CvuOperand::Kind::Vec, 0}};
  const auto in = bytes_of(DType::f32, std::vector<double>{0.0, 4.0});
  EXPECT_EQ(values_of(DType::i8, cvu_execute(p, in, {})), (std::vector<double>{127, 0}));
  EXPECT_EQ(kind_of([&] { cvu_execute(p, in, {}, true); }), ErrorKind::NonfiniteFault);
}

TEST(Cvu, TimingIsFillPlusLanes) {
  MachineConfig cfg;
  EXPECT_EQ(cvu_cycles(recipes::pool_max(4, 64, DType::f16, DType::f16), cfg), 6u + 8u);
}

// ---- DTDU -----------------------------------------------------------------

TEST(Dtdu, FillAndTranspose) {
  DtduOp fill;
  fill.kind = DtduOp::Kind::Fill;
  fill.fill_pattern = {0};
  EXPECT_EQ(dtdu_transform(fill, {}, 4096), std::vector<uint8_t>(4096, 0));

  std::mt19937_64 rng(10);
  std::vector<uint8_t> tile(32 * 64);
  for (auto& b : tile) b = static_cast<uint8_t>(rng());
  DtduOp t;
  t.kind = DtduOp::Kind::Transpose2d;
  t.rows = 32;
  t.cols = 64;
  const auto once = dtdu_transform(t, tile, 0);
  EXPECT_EQ(once[1 * 32 + 0], tile[0 * 64 + 1]);
  std::swap(t.rows, t.cols);
  EXPECT_EQ(dtdu_transform(t, once, 0), tile);
}

// ---- GSDU / CPU -------------------------------------------------------------

class FakeMemory : public MemoryPort {
 public:
  std::vector<uint8_t>& space(const AddressSpace& s) {
    auto& m = mem_[s];
    if (m.empty()) m.resize(1 << 16);
    return m;
  }
  std::vector<uint8_t> read(const AddressSpace& s, uint64_t addr, uint64_t len) override {
    auto& m = space(s);
    if (addr + len > m.size()) fail(ErrorKind::OutOfRange, "fake read");
    return {m.begin() + static_cast<ptrdiff_t>(addr), m.begin() + static_cast<ptrdiff_t>(addr + len)};
  }
  void write(const AddressSpace& s, uint64_t addr, std::span<const uint8_t> bytes) override {
    auto& m = space(s);
    if (addr + bytes.size() > m.size()) fail(ErrorKind::OutOfRange, "fake write");
    std::memcpy(m.data() + addr, bytes.data(), bytes.size());
  }
  uint64_t capacity(const AddressSpace&) const override { return 1 << 16; }

 private:
  std::map<AddressSpace, std::vector<uint8_t>> mem_;
};

TEST(Gsdu, GatherMatchesIndexedCopy) {
  std::mt19937_64 rng(11);
  FakeMemory mem;
  const auto local = AddressSpace::hbsm(0, 1);
  auto& sram = mem.space(AddressSpace::sram());
  for (auto& b : sram) b = static_cast<uint8_t>(rng());
  GatherScatterPlan plan;
  plan.count = 1000;
  plan.index_addr = 0;
  plan.local_addr = 8192;
  plan.remote = AddressSpace::sram();
  plan.remote_base = 100;
  plan.remote_elems = 4000;
  plan.elem_bytes = 4;
  std::vector<int64_t> idx = random_ints(rng, 1000, 0, 3999);
  mem.write(local, 0, bytes_of(DType::i32, idx));
  EXPECT_EQ(decode_gsdu_args(encode_gsdu_args(plan)).remote_elems, 4000u);
  gsdu_execute(plan, local, mem);
  const auto got = mem.read(local, 8192, 4000);
  for (size_t i = 0; i < 1000; ++i)
    for (size_t b = 0; b < 4; ++b) ASSERT_EQ(got[i * 4 + b], sram[100 + idx[i] * 4 + b]);
  EXPECT_EQ(gsdu_wire_bytes(plan), 32000u);
}

TEST(Gsdu, IdentityGatherIsCopyAndScatterLastWriterWins) {
  FakeMemory mem;
  const auto local = AddressSpace::hbsm(0, 0);
  const auto remote = AddressSpace::hbsm(1, 2);
  std::vector<uint8_t> src(64);
  for (int i = 0; i < 64; ++i) src[i] = static_cast<uint8_t>(i * 3);
  mem.write(remote, 0, src);
  std::vector<int64_t> idx(64);
  for (int i = 0; i < 64; ++i) idx[i] = i;
  mem.write(local, 0, bytes_of(DType::i32, idx));
  GatherScatterPlan g{false, 0, 64, 1024, remote, 0, 64, 1};
  gsdu_execute(g, local, mem);
  EXPECT_EQ(mem.read(local, 1024, 64), src);

  mem.write(local, 0, bytes_of(DType::i32, std::vector<int64_t>{0, 0}));
  mem.write(local, 2048, std::vector<uint8_t>{0xaa, 0xbb});
  GatherScatterPlan s{true, 0, 2, 2048, remote, 0, 64, 1};
  gsdu_execute(s, local, mem);
  EXPECT_EQ(mem.read(remote, 0, 1)[0], 0xbb);

  mem.write(local, 0, bytes_of(DType::i32, std::vector<int64_t>{3, 64}));
  EXPECT_EQ(kind_of([&] { gsdu_execute(g, local, mem); }), ErrorKind::IndexOutOfRange);
}

TEST(Cpu, SingleRequestCostsRoutinePlusOverhead) {
  RoutineRegistry reg;
  reg.add({1, "post", RoutineBehavior::NoOp, 100});
  ClusterCpu cpu(&reg, 20);
  cpu.submit({1, {}, 2, 7, 50});
  EXPECT_TRUE(cpu.step(49, nullptr).empty());
  EXPECT_TRUE(cpu.step(50, nullptr).empty());
  EXPECT_EQ(cpu.next_event(), 170u);
  EXPECT_TRUE(cpu.step(169, nullptr).empty());
  const auto done = cpu.step(170, nullptr);
  ASSERT_EQ(done.size(), 1u);
  EXPECT_EQ(done[0].request.ticket, 7u);
  EXPECT_EQ(done[0].finish - 50, 120u);
  EXPECT_TRUE(cpu.idle());
}

TEST(Cpu, SimultaneousRequestsServedByTpbIndex) {
  RoutineRegistry reg;
  reg.add({1, "work", RoutineBehavior::NoOp, 10});
  ClusterCpu cpu(&reg, 20);
  for (uint32_t t : {3u, 1u, 0u, 2u}) cpu.submit({1, {}, t, t, 0});
  std::vector<uint32_t> order;
  std::vector<uint64_t> finish;
  for (uint64_t c = 0; c <= 200; ++c)
    for (const auto& d : cpu.step(c, nullptr)) {
      order.push_back(d.request.tpb);
      finish.push_back(d.finish);
    }
  EXPECT_EQ(order, (std::vector<uint32_t>{0, 1, 2, 3}));
  EXPECT_EQ(finish, (std::vector<uint64_t>{30, 60, 90, 120}));
}

TEST(Cpu, UnknownRoutineFaults) {
  RoutineRegistry reg;
  ClusterCpu cpu(&reg, 20);
  EXPECT_EQ(kind_of([&] { cpu.submit({9, {}, 0, 0, 0}); }), ErrorKind::UnknownRoutine);
  reg.add({9, "x", RoutineBehavior::NoOp, 1});
  EXPECT_EQ(kind_of([&] { reg.add({9, "y", RoutineBehavior::NoOp, 1}); }), ErrorKind::BadDescriptor);
}

TEST(Cpu, ScalarPostprocessRewritesElements) {
  FakeMemory mem;
  const auto local = AddressSpace::hbsm(0, 0);
  mem.write(local, 16, bytes_of(DType::i8, std::vector<int64_t>{1, -2, 100}));
  scalar_postprocess({16, 3, static_cast<int64_t>(DType::i8), 2, 1}, local, mem);
  EXPECT_EQ(values_of(DType::i8, mem.read(local, 16, 3)), (std::vector<double>{3, -3, 127}));
}

}  // namespace
}  // namespace tpbsim
