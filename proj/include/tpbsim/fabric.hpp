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

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpbsim/isa.hpp"
#include "tpbsim/machine.hpp"
#include "tpbsim/sync.hpp"

namespace tpbsim {

// ---- Instruction chain ----------------------------------------------------

struct IcbTransmission {
  uint32_t dispatcher = 0;
  uint64_t start = 0;
  uint64_t end = 0;  // first cycle the channel is free again
  std::map<uint32_t, uint32_t> entries;  // cluster -> queue entries it needs
};

struct IcbDelivery {
  uint32_t dispatcher = 0;
  uint32_t cluster = 0;
  uint64_t cycle = 0;
  TpbInstruction instr;
};

// Number of queue entries an instruction occupies in each masked cluster
// (one per masked TPB).
std::map<uint32_t, uint32_t> cluster_entries(const TpbMask& mask, const MachineConfig& cfg);

// One shared daisy chain. A transmission occupies the chain head for
// ceil(bits / width) cycles and reaches cluster c (c + 1) hops after it
// ends. Dispatchers are served in order of how long their head
// instruction has been waiting, ties to the lower index. When a masked
// cluster lacks queue room the whole chain stalls.
class IcbChain {
 public:
  using RoomFn = std::function<bool(uint32_t cluster, uint32_t entries)>;

  explicit IcbChain(const MachineConfig& cfg);

  void load(uint32_t dispatcher, std::vector<TpbInstruction> stream);
  std::optional<IcbTransmission> try_start(uint64_t now, const RoomFn& room);
  std::vector<IcbDelivery> deliveries(uint64_t now);

  // Clears a backpressure stall; call when queue space frees up.
  void wake() { stalled_ = false; }
  bool stalled() const { return stalled_; }
  std::optional<uint64_t> next_event() const;
  bool all_sent() const;
  bool idle() const { return all_sent() && in_flight_.empty(); }
  uint64_t busy_cycles() const { return busy_cycles_; }
  uint64_t bits_sent() const { return bits_sent_; }

 private:
  struct Stream {
    std::deque<TpbInstruction> pending;
    uint64_t ready_since = 0;
  };
  MachineConfig cfg_;
  std::vector<Stream> streams_;
  std::vector<IcbDelivery> in_flight_;
  uint64_t free_at_ = 0;
  bool stalled_ = false;
  uint64_t busy_cycles_ = 0;
  uint64_t bits_sent_ = 0;
};

// ---- Bandwidth-shared streams ---------------------------------------------

enum class ResourceKind : uint8_t { Ddr, Sram, Drb, MeshLink, ClusterNoc };
std::string_view resource_kind_name(ResourceKind k);

struct Resource {
  ResourceKind kind;
  uint32_t capacity;  // bytes per cycle
  std::string name;
};

struct StreamSpec {
  std::vector<uint32_t> resources;
  uint64_t bytes = 0;
  uint64_t latency = 0;   // cycles between the last byte and landing
  uint32_t max_rate = 0;  // per-stream cap, 0 = none
  uint64_t tag = 0;       // caller's handle
};

struct StreamDone {
  uint64_t id = 0;
  uint64_t tag = 0;
  uint64_t start = 0;
  uint64_t landed = 0;
  uint64_t bytes = 0;
};

// Every active stream gets an equal integer share of each resource it
// crosses (remainder bytes rotate by stream id each cycle); its rate is the
// smallest of those shares. Sharing is recomputed every cycle, so it
// follows stream starts and stops exactly.
class Fabric {
 public:
  explicit Fabric(const MachineConfig& cfg);

  // Mesh nodes: 0 = CCB (with DDR), 1 = CCB SRAM, 2 + c = cluster c.
  static uint32_t ccb_node() { return 0; }
  static uint32_t sram_node() { return 1; }
  static uint32_t cluster_node(uint32_t c) { return 2 + c; }
  std::pair<uint32_t, uint32_t> node_xy(uint32_t node) const;

  struct Route {
    std::vector<uint32_t> links;
    uint32_t hops = 0;
  };
  // Dimension-ordered: along x first, then y.
  Route mesh_route(uint32_t from, uint32_t to) const;

  uint32_t ddr(uint32_t engine) const;
  uint32_t sram() const { return sram_; }
  uint32_t drb() const { return drb_; }
  uint32_t cluster_noc(uint32_t cluster) const { return noc_base_ + cluster; }
  const Resource& resource(uint32_t id) const { return resources_.at(id); }
  size_t resource_count() const { return resources_.size(); }

  uint64_t start(const StreamSpec& spec, uint64_t now);
  // Moves the bytes of cycle `now`. A stream whose last byte moves in cycle
  // t lands at t + 1 + latency.
  void step(uint64_t now);
  std::vector<StreamDone> deliveries(uint64_t now);

  bool moving() const { return !active_.empty(); }
  bool idle() const { return active_.empty() && landing_.empty(); }
  std::optional<uint64_t> next_event(uint64_t now) const;

  uint64_t bytes_moved(ResourceKind kind) const;
  // Largest number of bytes all DDR resources together granted in a cycle.
  uint64_t peak_ddr_bytes() const { return peak_ddr_; }
  uint64_t last_step_bytes(uint32_t resource) const { return last_step_.at(resource); }

 private:
  struct Active {
    uint64_t id;
    StreamSpec spec;
    uint64_t start;
    uint64_t remaining;
  };
  uint32_t add_resource(ResourceKind kind, uint32_t capacity, std::string name);
  uint32_t link_id(uint32_t node, uint32_t dir) const;

  MachineConfig cfg_;
  std::vector<Resource> resources_;
  std::vector<uint64_t> moved_;
  std::vector<uint64_t> last_step_;
  uint32_t ddr_ = 0;
  uint32_t sram_ = 0;
  uint32_t drb_ = 0;
  uint32_t noc_base_ = 0;
  uint32_t link_base_ = 0;
  std::vector<Active> active_;
  std::vector<StreamDone> landing_;
  uint64_t next_id_ = 1;
  uint64_t peak_ddr_ = 0;
};

// CCB SRAM bank of a byte address: floor(addr / interleave) mod banks.
uint32_t sram_bank_of(const MachineConfig& cfg, uint64_t addr);

// Latency of a sync message or data landing between two endpoints: zero
// inside a TPB, the cluster network latency inside a cluster, mesh hops
// otherwise.
uint64_t endpoint_latency(const MachineConfig& cfg, const Endpoint& from, const Endpoint& to);

// ---- DMA --------------------------------------------------------------------

struct DmaTarget {
  AddressSpace space;
  uint64_t addr = 0;
  bool operator==(const DmaTarget&) const = default;
};

// Moves `bytes` from one source to one or more targets. Supported paths:
// DDR <-> CCB SRAM; DDR or SRAM broadcast over the ring to TPB memories;
// DDR or SRAM to one TPB memory over the mesh; one TPB memory to DDR or
// SRAM over the mesh. Optional waits hold the descriptor at the head of
// its engine until every counter reaches its expected value; updates fire
// when the data lands.
struct DmaWait {
  CounterRef counter;
  uint64_t expected = 0;
  bool operator==(const DmaWait&) const = default;
};

struct DmaDescriptor {
  uint32_t engine = 0;
  AddressSpace src_space;
  uint64_t src_addr = 0;
  std::vector<DmaTarget> dsts;
  bool broadcast = false;
  uint64_t bytes = 0;
  std::vector<DmaWait> waits;
  std::vector<CounterRef> updates;
  bool operator==(const DmaDescriptor&) const = default;
};

void validate_descriptor(const DmaDescriptor& d, const MachineConfig& cfg);
StreamSpec dma_stream(const DmaDescriptor& d, const Fabric& fabric, const MachineConfig& cfg);

std::string format_descriptor(const DmaDescriptor& d);
DmaDescriptor parse_descriptor(const std::string& line);

// Per-engine descriptor queues; an engine works on one descriptor at a time.
class DmaEngines {
 public:
  explicit DmaEngines(uint32_t engines);

  void enqueue(const DmaDescriptor& d);
  bool busy(uint32_t engine) const { return active_.at(engine).has_value(); }
  const DmaDescriptor* head(uint32_t engine) const;
  void start(uint32_t engine, uint64_t stream_id);
  DmaDescriptor finish(uint32_t engine);
  std::optional<uint64_t> active_stream(uint32_t engine) const { return active_.at(engine); }
  uint32_t engines() const { return static_cast<uint32_t>(queues_.size()); }
  bool idle() const;

 private:
  std::vector<std::deque<DmaDescriptor>> queues_;
  std::vector<std::optional<uint64_t>> active_;
};

// ---- Interrupts -------------------------------------------------------------

enum class InterruptCode : uint8_t { TaskComplete, Fault };

struct Interrupt {
  uint64_t cycle = 0;
  uint32_t source = 0;  // 0 = CCB, 1 + cluster otherwise
  InterruptCode code = InterruptCode::TaskComplete;
  std::string message;
};

// Entries are kept in (cycle, source) order; equal keys keep raise order.
class InterruptLog {
 public:
  void raise(Interrupt i);
  const std::vector<Interrupt>& entries() const { return entries_; }
  const Interrupt* first(InterruptCode code) const;

 private:
  std::vector<Interrupt> entries_;
};

}  // namespace tpbsim
