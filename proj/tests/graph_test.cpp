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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "random_graph.hpp"
#include "test_util.hpp"
#include "tpbsim/oracle.hpp"

namespace tpbsim {
namespace {

using testing::kind_of;

TEST(Graph, SingleMatmulIsThreeNodes) {
  const Graph g = parse_graph(R"(
    input x i8[32,32]
    const w i8[32,64] init=uniform lo=-3 hi=3 seed=7
    y = matmul(x, w)
    output y
  )");
  ASSERT_EQ(g.nodes.size(), 3u);
  EXPECT_EQ(g.nodes[0].kind, OpKind::Input);
  EXPECT_EQ(g.nodes[1].kind, OpKind::Constant);
  EXPECT_EQ(g.node("y").shape, (std::vector<int64_t>{32, 64}));
  EXPECT_EQ(g.node("y").dtype, DType::i32);
  EXPECT_EQ(g.outputs, std::vector<std::string>{"y"});
}

TEST(Graph, MismatchedAddIsRejected) {
  EXPECT_EQ(kind_of([] {
              parse_graph("input a f32[4,8]\ninput b f32[8,4]\nc = add(a, b)\noutput c\n");
            }),
            ErrorKind::ShapeMismatch);
}

TEST(Graph, ConvReluPoolSoftmaxShapes) {
  const Graph g = parse_graph(R"(
    input x f16[2,8,8,4]
    const w f16[3,3,4,16] init=uniform lo=-1 hi=1 seed=1
    c = conv2d(x, w) pad=1
    r = relu(c)
    p = pool(r) kind=max window=2
    s = softmax(p)
    output s
  )");
  EXPECT_EQ(g.node("c").shape, (std::vector<int64_t>{2, 8, 8, 16}));
  EXPECT_EQ(g.node("c").dtype, DType::f32);
  EXPECT_EQ(g.node("r").shape, g.node("c").shape);
  EXPECT_EQ(g.node("p").shape, (std::vector<int64_t>{2, 4, 4, 16}));
  EXPECT_EQ(g.node("s").shape, g.node("p").shape);
  EXPECT_EQ(g.node("s").dtype, DType::f32);
}

TEST(Graph, StridedConvShape) {
  const Graph g = parse_graph(R"(
    input x i8[1,7,7,3]
    const w i8[3,3,3,8] init=fill value=1
    c = conv2d(x, w) stride=2 pad=1
    output c
  )");
  // floor((7 + 2 - 3) / 2) + 1
  EXPECT_EQ(g.node("c").shape, (std::vector<int64_t>{1, 4, 4, 8}));
}

TEST(Graph, Errors) {
  EXPECT_EQ(kind_of([] { parse_graph(""); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { parse_graph("input x f32[4]\ny = frobnicate(x)\noutput y\n"); }), ErrorKind::UnsupportedOp);
  EXPECT_EQ(kind_of([] { parse_graph("input x f32[4]\ny = relu(z)\noutput y\n"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { parse_graph("input x f32[4]\noutput q\n"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { parse_graph("input x f32[4,4]\ninput w f32[4,4]\ny = matmul(x, w)\noutput y\n"); }),
            ErrorKind::UnsupportedOp);
  EXPECT_EQ(kind_of([] {
              parse_graph("input x f32[4,4]\nconst w f32[4,4] init=fill value=1\ny = matmul(x, w)\noutput y\n");
            }),
            ErrorKind::UnsupportedDtype);
  EXPECT_EQ(kind_of([] { parse_graph("input x f32[4,4]\ny = reshape(x) shape=[3,5]\noutput y\n"); }),
            ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([] { load_graph("/nonexistent/graph.txt"); }), ErrorKind::IoError);
}

TEST(Graph, ConstantBroadcastShapes) {
  const Graph g = parse_graph(R"(
    input x f32[4,8]
    const row f32[8] init=fill value=2
    const one f32[1] init=fill value=1
    a = add(x, row)
    b = mul(one, a)
    output b
  )");
  EXPECT_EQ(g.node("b").shape, (std::vector<int64_t>{4, 8}));
  EXPECT_EQ(kind_of([] {
              parse_graph("input x f32[4,8]\ninput r f32[8]\na = add(x, r)\noutput a\n");
            }),
            ErrorKind::ShapeMismatch);
}

TEST(Graph, RoundTripIsExact) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const Graph g = parse_graph(testing::random_graph(seed));
    const Graph again = parse_graph(format_graph(g));
    EXPECT_EQ(g, again) << "seed " << seed;
    EXPECT_EQ(format_graph(g), format_graph(again));
  }
}

TEST(Graph, UniformConstantsAreDeterministicAndInRange) {
  const Graph a = parse_graph("const c i8[100] init=uniform lo=-3 hi=3 seed=5\ninput x i8[100]\ny = add(x, c)\noutput y\n");
  const Graph b = parse_graph("const c i8[100] init=uniform lo=-3 hi=3 seed=5\ninput x i8[100]\ny = add(x, c)\noutput y\n");
  EXPECT_EQ(a.node("c").data, b.node("c").data);
  bool saw_lo = false, saw_hi = false;
  for (double v : constant_values(a.node("c"))) {
    EXPECT_GE(v, -3);
    EXPECT_LE(v, 3);
    saw_lo |= v == -3;
    saw_hi |= v == 3;
  }
  EXPECT_TRUE(saw_lo && saw_hi);
}

// ---- oracle ---------------------------------------------------------------

TEST(Oracle, IdentityMatmulPassesThrough) {
  std::string eye;
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) eye += i == j ? "01" : "00";
  const Graph g = parse_graph("input x i8[8,16]\nconst w i8[16,16] init=hex data=" + eye +
                              "\ny = matmul(x, w) out=i8\noutput y\n");
  const Tensor x = random_tensor(DType::i8, {8, 16}, 3);
  const auto out = oracle_run(g, {{"x", x}});
  EXPECT_EQ(out.at("y").bytes, x.bytes);
}

TEST(Oracle, SoftmaxRowsSumToOne) {
  const Graph g = parse_graph("input x f32[16,40]\ns = softmax(x) out=f32\noutput s\n");
  const auto out = oracle_run(g, random_inputs(g, 11));
  const Tensor& s = out.at("s");
  for (int r = 0; r < 16; ++r) {
    double sum = 0;
    for (int i = 0; i < 40; ++i) sum += s.at(r * 40 + i);
    EXPECT_NEAR(sum, 1.0, 40 * 6e-8);
  }
}

TEST(Oracle, LayernormHasZeroMeanUnitVariance) {
  const Graph g = parse_graph("input x f32[4,64]\ns = layernorm(x) eps=0\noutput s\n");
  const auto s = oracle_run(g, random_inputs(g, 2)).at("s");
  for (int r = 0; r < 4; ++r) {
    double mean = 0, sq = 0;
    for (int i = 0; i < 64; ++i) mean += s.at(r * 64 + i);
    mean /= 64;
    for (int i = 0; i < 64; ++i) sq += (s.at(r * 64 + i) - mean) * (s.at(r * 64 + i) - mean);
    EXPECT_NEAR(mean, 0, 1e-6);
    EXPECT_NEAR(sq / 64, 1, 1e-5);
  }
}

// The oracle's own f16 rounding against the machine codec, over random
// doubles spanning subnormals to overflow.
TEST(Oracle, F16RoundingMatchesCodec) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200000; ++i) {
    const double mag = std::ldexp(static_cast<double>(rng() >> 11) * 0x1.0p-53, static_cast<int>(rng() % 44) - 27);
    const float f = static_cast<float>((rng() & 1) ? -mag : mag);  // the codec takes floats
    const double v = f;
    const double want = f16_bits_to_f32(f32_to_f16_bits(f));
    const double got = oracle_round(DType::f16, v);
    ASSERT_EQ(got, want) << v;
  }
}

TEST(Oracle, IntegerElementwiseSaturates) {
  const Graph g = parse_graph(R"(
    input x i8[4]
    const c i8[4] init=hex data=7f80057f
    y = add(x, c)
    z = mul(y, c)
    output z
  )");
  const Tensor x = Tensor::from_values(DType::i8, {4}, {10, -10, 3, -128});
  const auto z = oracle_run(g, {{"x", x}}).at("z");
  // y = [127, -128, 8, -1]; z = y * [127, -128, 5, 127]
  EXPECT_EQ(z.values(), (std::vector<double>{127, 127, 40, -127}));
}

TEST(Oracle, GatherRejectsBadIndex) {
  const Graph g = parse_graph("const t f32[4,2] init=fill value=1\ninput i i32[2]\ny = gather(t, i)\noutput y\n");
  const Tensor idx = Tensor::from_values(DType::i32, {2}, {0, 4});
  EXPECT_EQ(kind_of([&] { oracle_run(g, {{"i", idx}}); }), ErrorKind::IndexOutOfRange);
  const auto ok = random_inputs(g, 1).at("i");
  for (double v : ok.values()) EXPECT_TRUE(v >= 0 && v < 4);
}

TEST(Oracle, ToleranceFollowsUpstreamDtypes) {
  const Graph g = parse_graph(R"(
    input x f16[4,8]
    input y f32[4,8]
    input z i8[4,8]
    a = cast(x) to=f32
    b = add(y, y)
    c = relu(z)
    output a
    output b
    output c
  )");
  EXPECT_EQ(output_tolerance(g, "a"), 1e-3);
  EXPECT_EQ(output_tolerance(g, "b"), 1e-5);
  EXPECT_EQ(output_tolerance(g, "c"), 0.0);
}

}  // namespace
}  // namespace tpbsim
