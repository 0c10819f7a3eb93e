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

#include "tpbsim/hbsm.hpp"
#include "test_util.hpp"

namespace tpbsim {
namespace {

using testing::kind_of;

MemRequest read(uint32_t port, uint64_t addr, uint32_t len = 32, uint64_t tag = 0) {
  MemRequest r;
  r.requester = port;
  r.addr = addr;
  r.len = len;
  r.tag = tag;
  return r;
}

MemRequest write(uint32_t port, uint64_t addr, std::vector<uint8_t> data, uint64_t tag = 0) {
  MemRequest r;
  r.requester = port;
  r.addr = addr;
  r.len = static_cast<uint32_t>(data.size());
  r.rw = MemOp::Write;
  r.payload = std::move(data);
  r.tag = tag;
  return r;
}

TEST(Hbsm, BankMapping) {
  BankedMemory m(BankedMemoryConfig{});
  EXPECT_EQ(m.bank_of(0), 0u);
  EXPECT_EQ(m.bank_of(31), 0u);
  EXPECT_EQ(m.bank_of(32), 1u);
  EXPECT_EQ(m.bank_of(1024), 0u);
  EXPECT_EQ(kind_of([&] { m.bank_of(2 * MiB); }), ErrorKind::OutOfRange);
}

TEST(Hbsm, RejectsMalformedRequests) {
  BankedMemory m(BankedMemoryConfig{});
  m.submit(read(0, 64));
  EXPECT_EQ(kind_of([&] { m.submit(read(0, 0, 33)); }), ErrorKind::MalformedRequest);
  EXPECT_EQ(kind_of([&] { m.submit(read(0, 30, 11)); }), ErrorKind::MalformedRequest);
  EXPECT_EQ(kind_of([&] { m.submit(read(0, 0, 0)); }), ErrorKind::MalformedRequest);
  EXPECT_EQ(kind_of([&] { m.submit(read(8, 0)); }), ErrorKind::OutOfRange);
}

TEST(Hbsm, ConflictFreePortsGrantTogether) {
  BankedMemory m(BankedMemoryConfig{});
  for (uint32_t p = 0; p < 8; ++p) m.submit(read(p, p * 32));
  const auto r = m.cycle(0);
  EXPECT_EQ(r.grants.size(), 8u);
  uint64_t bytes = 0;
  for (const auto& g : r.grants) bytes += g.len;
  EXPECT_EQ(bytes, 256u);
}

TEST(Hbsm, ReadsReturnAfterLatency) {
  BankedMemory m(BankedMemoryConfig{});
  std::vector<uint8_t> data(32);
  for (int i = 0; i < 32; ++i) data[i] = static_cast<uint8_t>(i + 1);
  m.write_direct(96, data);
  m.submit(read(2, 96, 32, 5));
  EXPECT_TRUE(m.cycle(0).completions.empty());
  for (uint64_t c = 1; c < 20; ++c) EXPECT_TRUE(m.cycle(c).completions.empty());
  const auto r = m.cycle(20);
  ASSERT_EQ(r.completions.size(), 1u);
  EXPECT_EQ(r.completions[0].tag, 5u);
  EXPECT_EQ(r.completions[0].data, data);
}

TEST(Hbsm, WritesVisibleAtGrant) {
  BankedMemory m(BankedMemoryConfig{});
  m.submit(write(6, 0, std::vector<uint8_t>(32, 0xab)));
  m.cycle(0);
  EXPECT_EQ(m.read_direct(0, 1)[0], 0xab);
  m.submit(read(3, 0, 4));
  m.cycle(1);
  for (uint64_t c = 2; c < 21; ++c) m.cycle(c);
  const auto r = m.cycle(21);
  ASSERT_FALSE(r.completions.empty());
  EXPECT_EQ(r.completions.back().data, std::vector<uint8_t>(4, 0xab));
}

TEST(Hbsm, FullContentionIsRoundRobin) {
  BankedMemory m(BankedMemoryConfig{});
  for (int k = 0; k < 40; ++k)
    for (uint32_t p = 0; p < 8; ++p) m.submit(read(p, 1024 * (p + 1) * (k + 1) % (2 * MiB)));
  std::vector<uint32_t> order;
  for (uint64_t c = 0; c < 320; ++c) {
    const auto r = m.cycle(c);
    ASSERT_LE(r.grants.size(), 1u);
    for (const auto& g : r.grants) order.push_back(g.requester);
  }
  ASSERT_EQ(order.size(), 320u);
  for (size_t w = 0; w + 8 <= order.size(); ++w) {
    std::map<uint32_t, int> n;
    for (size_t i = w; i < w + 8; ++i) ++n[order[i]];
    EXPECT_EQ(n.size(), 8u) << w;
  }
}

TEST(Hbsm, SequentialStreamGrantsEveryCycle) {
  BankedMemory m(BankedMemoryConfig{});
  for (uint64_t i = 0; i < 1000; ++i) m.submit(read(0, i * 32));
  for (uint64_t c = 0; c < 1000; ++c) EXPECT_EQ(m.cycle(c).grants.size(), 1u);
}

TEST(Hbsm, PerPortCompletionOrderUnderStress) {
  BankedMemoryConfig cfg;
  cfg.read_latency = 7;
  BankedMemory m(cfg);
  std::mt19937_64 rng(13);
  std::vector<uint64_t> next_tag(8, 0), expect_tag(8, 0);
  for (uint64_t c = 0; c < 3000; ++c) {
    for (uint32_t p = 0; p < 8; ++p) {
      if (rng() % 3) continue;
      const uint64_t addr = (rng() % 4096) * 32;
      if (rng() & 1) m.submit(read(p, addr, 32, next_tag[p]++));
      else m.submit(write(p, addr, std::vector<uint8_t>(16, 1), next_tag[p]++));
    }
    const auto r = m.cycle(c);
    std::map<uint32_t, int> per_port;
    for (const auto& g : r.grants) EXPECT_EQ(++per_port[g.requester], 1);
    std::map<uint32_t, int> per_bank;
    for (const auto& g : r.grants) EXPECT_EQ(++per_bank[g.bank], 1);
    for (const auto& done : r.completions) EXPECT_EQ(done.tag, expect_tag[done.requester]++);
  }
}

TEST(Hbsm, SyncActionReportedWithGrant) {
  BankedMemory m(BankedMemoryConfig{});
  auto r = read(1, 0);
  r.sync_on_grant = CounterRef::local(4);
  m.submit(r);
  const auto g = m.cycle(0).grants;
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].sync_on_grant, CounterRef::local(4));
}

}  // namespace
}  // namespace tpbsim
