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
#include <set>

#include "tpbsim/error.hpp"
#include "tpbsim/machine.hpp"
#include "test_util.hpp"

namespace tpbsim {
namespace {

using testing::kind_of;

TEST(Config, DefaultsAreValid) {
  MachineConfig cfg;
  EXPECT_TRUE(config_violations(cfg).empty());
  EXPECT_EQ(cfg.total_tpbs(), 56u);
  EXPECT_EQ(cfg.hbsm_bytes, 2 * MiB);
}

TEST(Config, RejectsZeroAndIndivisibleValues) {
  MachineConfig cfg;
  cfg.hbsm_banks = 0;
  EXPECT_EQ(kind_of([&] { validate_config(cfg); }), ErrorKind::ConfigInvalid);
  cfg = MachineConfig{};
  cfg.hbsm_bytes = 2 * MiB + 1;
  EXPECT_EQ(kind_of([&] { validate_config(cfg); }), ErrorKind::ConfigInvalid);
  cfg = MachineConfig{};
  cfg.hbsm_ports = 9;
  EXPECT_FALSE(config_violations(cfg).empty());
}

TEST(Config, ParsesSuffixesAndComments) {
  const auto cfg = parse_config(
      "# small machine\n"
      "num_clusters = 2   # two clusters\n"
      "hbsm_bytes = 1M\n"
      "ccb_sram_bytes = 16M\n"
      "ddr_split_ports = true\n");
  EXPECT_EQ(cfg.num_clusters, 2u);
  EXPECT_EQ(cfg.hbsm_bytes, MiB);
  EXPECT_EQ(cfg.ccb_sram_bytes, 16 * MiB);
  EXPECT_TRUE(cfg.ddr_split_ports);
  EXPECT_EQ(cfg.tpbs_per_cluster, 4u);
}

TEST(Config, UnknownKeyIsAnError) {
  EXPECT_EQ(kind_of([] { parse_config("hbsm_bankz = 4\n"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { parse_config("hbsm_banks 4\n"); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([] { parse_config("hbsm_banks = 0\n"); }), ErrorKind::ConfigInvalid);
}

TEST(Config, FormatRoundTrips) {
  MachineConfig cfg;
  cfg.num_clusters = 3;
  cfg.hbsm_latency = 7;
  cfg.nonfinite_fault = true;
  const auto back = parse_config(format_config(cfg));
  EXPECT_EQ(format_config(back), format_config(cfg));
  EXPECT_EQ(back.num_clusters, 3u);
  EXPECT_TRUE(back.nonfinite_fault);
}

TEST(Tensor, Bytes) {
  EXPECT_EQ(tensor_bytes(TensorDesc::dense({32, 32}, DType::i8)), 1024u);
  EXPECT_EQ(tensor_bytes(TensorDesc::dense({32, 64}, DType::f16)), 4096u);
  EXPECT_EQ(tensor_bytes(TensorDesc::dense({1}, DType::f32)), 4u);
}

TEST(Tensor, ElementAddress) {
  auto t = TensorDesc::dense({4, 4}, DType::i8);
  int64_t idx[] = {1, 2};
  EXPECT_EQ(element_address(t, idx).offset, 6u);
  t.base = 100;
  int64_t zero[] = {0, 0};
  EXPECT_EQ(element_address(t, zero).offset, 100u);
  t.base = 0;
  t.strides = {1, 4};
  EXPECT_EQ(element_address(t, idx).offset, 9u);
  int64_t bad[] = {4, 0};
  EXPECT_EQ(kind_of([&] { element_address(t, bad); }), ErrorKind::IndexOutOfRange);
}

TEST(Tensor, AddressMatchesLayoutEnumeration) {
  // Random strided layouts against a brute-force walk of the index space.
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t rank = 1 + rng() % 4;
    TensorDesc t;
    t.dtype = static_cast<DType>(rng() % 5);
    t.base = rng() % 64;
    for (size_t d = 0; d < rank; ++d) {
      t.shape.push_back(1 + static_cast<int64_t>(rng() % 4));
      t.strides.push_back(static_cast<int64_t>(rng() % 9));
    }
    std::vector<int64_t> idx(rank, 0);
    for (;;) {
      int64_t off = 0;
      for (size_t d = 0; d < rank; ++d) off += idx[d] * t.strides[d];
      EXPECT_EQ(element_address(t, idx).offset, t.base + static_cast<uint64_t>(off) * byte_width(t.dtype));
      size_t d = rank;
      while (d > 0 && ++idx[d - 1] == t.shape[d - 1]) idx[--d] = 0;
      if (d == 0) break;
    }
  }
}

TEST(Tensor, WritableOverlapIsRejected) {
  MachineConfig cfg;
  auto t = TensorDesc::dense({4, 4}, DType::i8);
  validate_tensor(cfg, t, true);
  t.strides = {2, 1};
  EXPECT_EQ(kind_of([&] { validate_tensor(cfg, t, true); }), ErrorKind::OverlapFault);
  validate_tensor(cfg, t, false);  // overlapping reads are fine
  t = TensorDesc::dense({1024, 2049}, DType::i8);
  EXPECT_EQ(kind_of([&] { validate_tensor(cfg, t, false); }), ErrorKind::IndexOutOfRange);
}

TEST(Space, FormatParse) {
  for (auto s : {AddressSpace::hbsm(3, 2), AddressSpace::sram(), AddressSpace::ddr()})
    EXPECT_EQ(parse_space(format_space(s)), s);
  EXPECT_EQ(kind_of([] { parse_space("hbsm:x.1"); }), ErrorKind::ParseError);
}

}  // namespace
}  // namespace tpbsim
