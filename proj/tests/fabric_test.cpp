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

#include "tpbsim/fabric.hpp"
#include "test_util.hpp"

namespace tpbsim {
namespace {

using testing::kind_of;

TpbInstruction csu_instr(uint64_t seq, TpbMask mask, size_t args) {
  TpbInstruction in;
  in.seq = seq;
  in.mask = std::move(mask);
  in.op = CsuOp{1, std::vector<int64_t>(args, 0)};
  return finalize(in);
}

TpbInstruction sized_instr(uint64_t seq, uint32_t target) {
  // A TCU matmul with three 3-level walkers and two syncs: 1248 bits.
  TpbInstruction in;
  in.seq = seq;
  in.mask = TpbMask::single(target);
  TcuOp op;
  op.m = op.k = op.n = 1;
  in.op = op;
  const WalkerConfig w{{{0, 1, 0}, {0, 1, 0}, {0, 1, 0}}};
  in.in_walkers = {w, w};
  in.out_walker = w;
  in.syncs = {SyncAction::monitor(CounterRef::local(0), 1), SyncAction::update(CounterRef::local(1))};
  return finalize(in);
}

std::map<uint64_t, StreamDone> run_fabric(Fabric& f, uint64_t from, uint64_t limit = 100000) {
  std::map<uint64_t, StreamDone> done;
  for (uint64_t t = from; t < limit && !f.idle(); ++t) {
    for (const auto& d : f.deliveries(t)) done[d.tag] = d;
    f.step(t);
  }
  for (const auto& d : f.deliveries(limit)) done[d.tag] = d;
  return done;
}

// ---- ICB ------------------------------------------------------------------

TEST(Icb, SingleInstructionArrivesAfterTransmitAndOneHop) {
  MachineConfig cfg;
  IcbChain icb(cfg);
  const auto in = sized_instr(0, 0);
  ASSERT_EQ(in.encoded_bits, 1248u);
  icb.load(0, {in});
  const auto tx = icb.try_start(0, [](uint32_t, uint32_t) { return true; });
  ASSERT_TRUE(tx);
  EXPECT_EQ(tx->end, 20u);
  EXPECT_TRUE(icb.deliveries(20).empty());
  const auto d = icb.deliveries(21);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].cycle, 21u);
  EXPECT_EQ(d[0].cluster, 0u);
}

TEST(Icb, MulticastReachesFartherClustersLater) {
  MachineConfig cfg;
  IcbChain icb(cfg);
  TpbMask mask;
  for (uint32_t c = 0; c < cfg.num_clusters; ++c) mask.set(c * cfg.tpbs_per_cluster);
  icb.load(0, {csu_instr(0, mask, 0)});
  ASSERT_TRUE(icb.try_start(0, [](uint32_t, uint32_t) { return true; }));
  std::map<uint32_t, uint64_t> at;
  for (uint64_t t = 0; t < 40; ++t)
    for (const auto& d : icb.deliveries(t)) at[d.cluster] = d.cycle;
  ASSERT_EQ(at.size(), cfg.num_clusters);
  for (uint32_t c = 0; c < cfg.num_clusters; ++c) EXPECT_EQ(at[c], 4u + c + 1);
  EXPECT_EQ(icb.bits_sent(), 256u);
}

TEST(Icb, TwoDispatchersSerializeOnTheChain) {
  MachineConfig cfg;
  IcbChain icb(cfg);
  icb.load(0, {csu_instr(0, TpbMask::single(0), 0), csu_instr(1, TpbMask::single(0), 0)});
  icb.load(1, {csu_instr(0, TpbMask::single(4), 0)});
  std::vector<std::pair<uint32_t, uint64_t>> starts;
  for (uint64_t t = 0; t < 20; ++t)
    if (auto tx = icb.try_start(t, [](uint32_t, uint32_t) { return true; })) starts.push_back({tx->dispatcher, tx->start});
  // Dispatcher 1's head has waited as long as dispatcher 0's second, so it
  // wins the second slot.
  EXPECT_EQ(starts, (std::vector<std::pair<uint32_t, uint64_t>>{{0, 0}, {1, 4}, {0, 8}}));
  EXPECT_EQ(icb.busy_cycles(), 12u);
  EXPECT_TRUE(icb.all_sent());
}

TEST(Icb, BackpressureStallsUntilWoken) {
  MachineConfig cfg;
  IcbChain icb(cfg);
  icb.load(0, {csu_instr(0, TpbMask::single(0), 0)});
  bool room = false;
  auto fn = [&](uint32_t, uint32_t) { return room; };
  EXPECT_FALSE(icb.try_start(0, fn));
  EXPECT_TRUE(icb.stalled());
  room = true;
  EXPECT_FALSE(icb.try_start(1, fn));
  icb.wake();
  const auto tx = icb.try_start(5, fn);
  ASSERT_TRUE(tx);
  EXPECT_EQ(tx->start, 5u);
}

TEST(Icb, ClusterEntriesCountMaskedTpbs) {
  MachineConfig cfg;
  TpbMask m;
  for (uint32_t g : {0u, 1u, 3u, 9u}) m.set(g);
  EXPECT_EQ(cluster_entries(m, cfg), (std::map<uint32_t, uint32_t>{{0, 3}, {2, 1}}));
}

// ---- streams --------------------------------------------------------------

TEST(Fabric, DrbBroadcastOf256KiBTakes1024Cycles) {
  MachineConfig cfg;
  Fabric f(cfg);
  f.start({{f.drb()}, 256 * KiB, 0, 0, 1}, 0);
  auto done = run_fabric(f, 0);
  EXPECT_EQ(done.at(1).landed, 1024u);

  Fabric g(cfg);
  g.start({{g.drb()}, 256 * KiB, 0, 0, 1}, 0);
  g.start({{g.drb()}, 256 * KiB, 0, 0, 2}, 0);
  done = run_fabric(g, 0);
  EXPECT_EQ(done.at(1).landed, 2048u);
  EXPECT_EQ(done.at(2).landed, 2048u);
}

TEST(Fabric, MeshStreamRateAndSharedLink) {
  MachineConfig cfg;
  Fabric f(cfg);
  const auto r = f.mesh_route(Fabric::cluster_node(0), Fabric::cluster_node(1));
  ASSERT_EQ(r.hops, 1u);
  f.start({r.links, 64 * KiB, r.hops, 0, 1}, 0);
  EXPECT_EQ(run_fabric(f, 0).at(1).landed, 256u + 1);

  Fabric g(cfg);
  g.start({r.links, 64 * KiB, 0, 0, 1}, 0);
  const auto other = g.mesh_route(Fabric::cluster_node(0), Fabric::cluster_node(5));
  ASSERT_EQ(other.links.front(), r.links.front());
  g.start({other.links, 64 * KiB, 0, 0, 2}, 0);
  const auto done = run_fabric(g, 0);
  EXPECT_EQ(done.at(1).landed, 512u);
  EXPECT_EQ(done.at(2).landed, 512u);
}

TEST(Fabric, XyRoutingHopsAreManhattan) {
  MachineConfig cfg;
  Fabric f(cfg);
  for (uint32_t a = 0; a < 16; ++a)
    for (uint32_t b = 0; b < 16; ++b) {
      const auto [ax, ay] = f.node_xy(a);
      const auto [bx, by] = f.node_xy(b);
      const uint32_t manhattan = (ax > bx ? ax - bx : bx - ax) + (ay > by ? ay - by : by - ay);
      const auto r = f.mesh_route(a, b);
      EXPECT_EQ(r.hops, manhattan);
      EXPECT_EQ(r.links.size(), manhattan);
    }
}

TEST(Fabric, SharingNeverExceedsCapacity) {
  MachineConfig cfg;
  Fabric f(cfg);
  std::mt19937_64 rng(12);
  const uint32_t pool[] = {f.drb(), f.sram(), f.ddr(0), f.cluster_noc(0), f.cluster_noc(3)};
  uint64_t total = 0;
  for (uint64_t tag = 0; tag < 40; ++tag) {
    StreamSpec s;
    for (uint32_t r : pool)
      if (rng() % 3 == 0) s.resources.push_back(r);
    if (s.resources.empty()) s.resources.push_back(f.drb());
    s.bytes = 1 + rng() % 20000;
    s.tag = tag;
    total += s.bytes;
    f.start(s, 0);
  }
  std::map<uint64_t, StreamDone> done;
  for (uint64_t t = 0; !f.idle(); ++t) {
    for (const auto& d : f.deliveries(t)) done[d.tag] = d;
    f.step(t);
    for (uint32_t r : pool) ASSERT_LE(f.last_step_bytes(r), f.resource(r).capacity);
    ASSERT_LT(t, 100000u);
  }
  EXPECT_EQ(done.size(), 40u);
  uint64_t landed = 0;
  for (const auto& [_, d] : done) landed += d.bytes;
  EXPECT_EQ(landed, total);
}

// ---- DMA ------------------------------------------------------------------

DmaDescriptor ddr_to_sram(uint32_t engine, uint64_t bytes, uint64_t sram_addr) {
  DmaDescriptor d;
  d.engine = engine;
  d.src_space = AddressSpace::ddr();
  d.dsts = {{AddressSpace::sram(), sram_addr}};
  d.bytes = bytes;
  return d;
}

TEST(Dma, DdrToSramIsBoundByDdr) {
  MachineConfig cfg;
  Fabric f(cfg);
  const auto d = ddr_to_sram(0, MiB, 0);
  validate_descriptor(d, cfg);
  f.start(dma_stream(d, f, cfg), 0);
  const auto landed = run_fabric(f, 0).at(0).landed;
  EXPECT_GE(landed, 3841u);
  EXPECT_LE(landed, 3842u);
  EXPECT_LE(f.peak_ddr_bytes(), 273u);
}

TEST(Dma, TwoEnginesShareTheDdrPool) {
  MachineConfig cfg;
  Fabric f(cfg);
  auto a = ddr_to_sram(0, MiB, 0), b = ddr_to_sram(1, MiB, 8 * MiB);
  auto sa = dma_stream(a, f, cfg), sb = dma_stream(b, f, cfg);
  sb.tag = 1;
  f.start(sa, 0);
  f.start(sb, 0);
  const auto done = run_fabric(f, 0);
  EXPECT_LE(f.peak_ddr_bytes(), 273u);
  EXPECT_GE(std::max(done.at(0).landed, done.at(1).landed), 2 * MiB / 273);
}

TEST(Dma, SplitPortsAreIndependent) {
  MachineConfig cfg;
  cfg.ddr_split_ports = true;
  Fabric f(cfg);
  EXPECT_NE(f.ddr(0), f.ddr(1));
  f.start(dma_stream(ddr_to_sram(0, 128 * KiB, 0), f, cfg), 0);
  EXPECT_EQ(run_fabric(f, 0).at(0).landed, 1024u);
}

TEST(Dma, MegabyteBroadcastTakes4096Cycles) {
  MachineConfig cfg;
  Fabric f(cfg);
  DmaDescriptor d;
  d.src_space = AddressSpace::ddr();
  for (uint32_t c = 0; c < cfg.num_clusters; ++c) d.dsts.push_back({AddressSpace::hbsm(c, 0), 0});
  d.broadcast = true;
  d.bytes = MiB;
  validate_descriptor(d, cfg);
  const auto s = dma_stream(d, f, cfg);
  f.start(s, 0);
  const auto done = run_fabric(f, 0);
  EXPECT_EQ(done.at(0).landed, 4096u);
}

TEST(Dma, SramBankCapsNarrowTransfers) {
  MachineConfig cfg;
  EXPECT_EQ(sram_bank_of(cfg, 0), 0u);
  EXPECT_EQ(sram_bank_of(cfg, 4095), 0u);
  EXPECT_EQ(sram_bank_of(cfg, 4096), 1u);
  EXPECT_EQ(sram_bank_of(cfg, 4 * 4096 + 5), 0u);
  Fabric f(cfg);
  DmaDescriptor d;
  d.src_space = AddressSpace::sram();
  d.dsts = {{AddressSpace::hbsm(0, 0), 0}};
  d.bytes = 4096;
  const auto s = dma_stream(d, f, cfg);
  EXPECT_EQ(s.max_rate, 256u);
}

TEST(Dma, DescriptorValidationAndText) {
  MachineConfig cfg;
  DmaDescriptor d;
  d.src_space = AddressSpace::ddr();
  d.dsts = {{AddressSpace::hbsm(0, 1), 4096}, {AddressSpace::hbsm(0, 2), 4096}};
  d.broadcast = true;
  d.bytes = 1024;
  d.waits = {{CounterRef::ccb(2), 1}, {CounterRef::at(0, 3, 1), 4}};
  d.updates = {CounterRef::at(0, 1, 5), CounterRef::at(0, 2, 5)};
  validate_descriptor(d, cfg);
  const std::string text = format_descriptor(d);
  EXPECT_EQ(text, "dma engine=0 src=ddr@0 dst=hbsm:0.1@4096+hbsm:0.2@4096 bcast=1 bytes=1024 wait=ccb.2>=1,0.3.1>=4 upd=0.1.5,0.2.5");
  EXPECT_EQ(parse_descriptor(text), d);

  auto bad = d;
  bad.broadcast = false;
  EXPECT_EQ(kind_of([&] { validate_descriptor(bad, cfg); }), ErrorKind::BadDescriptor);
  bad = d;
  bad.updates = {CounterRef::local(1)};
  EXPECT_EQ(kind_of([&] { validate_descriptor(bad, cfg); }), ErrorKind::BadDescriptor);
  bad = ddr_to_sram(0, 64, cfg.ccb_sram_bytes);
  EXPECT_NE(kind_of([&] { validate_descriptor(bad, cfg); }), ErrorKind::Internal);
  bad = ddr_to_sram(5, 64, 0);
  EXPECT_NE(kind_of([&] { validate_descriptor(bad, cfg); }), ErrorKind::Internal);
}

TEST(Dma, EnginesRunOneDescriptorAtATime) {
  DmaEngines e(2);
  e.enqueue(ddr_to_sram(0, 64, 0));
  e.enqueue(ddr_to_sram(0, 128, 0));
  EXPECT_FALSE(e.busy(0));
  ASSERT_NE(e.head(0), nullptr);
  EXPECT_EQ(e.head(0)->bytes, 64u);
  e.start(0, 7);
  EXPECT_TRUE(e.busy(0));
  EXPECT_EQ(e.active_stream(0), 7u);
  EXPECT_EQ(e.finish(0).bytes, 64u);
  EXPECT_EQ(e.head(0)->bytes, 128u);
  EXPECT_EQ(e.head(1), nullptr);
  EXPECT_FALSE(e.idle());
}

TEST(Endpoints, LatencyByDistance) {
  MachineConfig cfg;
  EXPECT_EQ(endpoint_latency(cfg, Endpoint::of_tpb(0, 1), Endpoint::of_tpb(0, 1)), 0u);
  EXPECT_EQ(endpoint_latency(cfg, Endpoint::of_tpb(0, 1), Endpoint::of_tpb(0, 2)), 1u);
  EXPECT_EQ(endpoint_latency(cfg, Endpoint::of_tpb(0, 0), Endpoint::of_tpb(1, 0)), 1u);
  EXPECT_EQ(endpoint_latency(cfg, Endpoint::of_ccb(), Endpoint::of_tpb(13, 0)), 6u);
}

TEST(Interrupts, OrderedByCycleThenSource) {
  InterruptLog log;
  log.raise({10, 3, InterruptCode::TaskComplete, "c2"});
  log.raise({10, 0, InterruptCode::Fault, "ccb"});
  log.raise({5, 9, InterruptCode::TaskComplete, "early"});
  log.raise({10, 3, InterruptCode::TaskComplete, "c2b"});
  std::vector<std::string> msgs;
  for (const auto& i : log.entries()) msgs.push_back(i.message);
  EXPECT_EQ(msgs, (std::vector<std::string>{"early", "ccb", "c2", "c2b"}));
  ASSERT_NE(log.first(InterruptCode::Fault), nullptr);
  EXPECT_EQ(log.first(InterruptCode::Fault)->message, "ccb");
}

}  // namespace
}  // namespace tpbsim
