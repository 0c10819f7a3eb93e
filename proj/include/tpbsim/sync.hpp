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

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpbsim/machine.hpp"

namespace tpbsim {

// A counter lives either in a TPB's synchronization unit or in the CCB
// barrier unit. `local` refs are resolved by the executing TPB before they
// reach the network.
struct CounterRef {
  enum class Scope : uint8_t { Local, Tpb, Ccb };
  Scope scope = Scope::Local;
  uint32_t cluster = 0;
  uint32_t tpb = 0;
  uint32_t index = 0;

  static CounterRef local(uint32_t index) { return {Scope::Local, 0, 0, index}; }
  static CounterRef at(uint32_t cluster, uint32_t tpb, uint32_t index) {
    return {Scope::Tpb, cluster, tpb, index};
  }
  static CounterRef ccb(uint32_t index) { return {Scope::Ccb, 0, 0, index}; }

  CounterRef resolve(uint32_t cluster, uint32_t tpb) const;

  bool operator==(const CounterRef&) const = default;
  auto operator<=>(const CounterRef&) const = default;
};

std::string format_counter(const CounterRef& ref);
CounterRef parse_counter(const std::string& text);

// Where a sync message originates; used for fabric latency and ordering.
struct Endpoint {
  bool ccb = false;
  uint32_t cluster = 0;
  uint32_t tpb = 0;

  static Endpoint of_ccb() { return {true, 0, 0}; }
  static Endpoint of_tpb(uint32_t c, uint32_t t) { return {false, c, t}; }
  bool operator==(const Endpoint&) const = default;
};

Endpoint endpoint_of(const CounterRef& ref);

// Vector clock over dense agent ids; missing entries read as zero.
class VectorClock {
 public:
  uint32_t get(uint32_t agent) const { return agent < v_.size() ? v_[agent] : 0; }
  void set(uint32_t agent, uint32_t value);
  void tick(uint32_t agent) { set(agent, get(agent) + 1); }
  void join(const VectorClock& other);

 private:
  std::vector<uint32_t> v_;
};

struct SyncEvent {
  enum class Kind : uint8_t { Update, MonitorSatisfied, BarrierRelease };
  Kind kind;
  uint64_t cycle;
  CounterRef counter;
  uint64_t value;
  uint32_t waiter = 0;  // MonitorSatisfied only
};

// Per-TPB (or CCB) file of monotonic counters.
class SyncCounterFile {
 public:
  explicit SyncCounterFile(uint32_t size = 64, bool track_clocks = false);

  uint32_t size() const { return static_cast<uint32_t>(values_.size()); }
  uint64_t value(uint32_t index) const;

  // Sets a raw value without history; for program load and fixtures.
  void preset(uint32_t index, uint64_t value);
  // +1; throws IndexOutOfRange / OverflowFault. Returns the new value.
  uint64_t update(uint32_t index, const VectorClock* clock = nullptr);
  // Clock published by the updates that brought the counter to `value`.
  VectorClock clock_at(uint32_t index, uint64_t value) const;

 private:
  std::vector<uint64_t> values_;
  bool track_;
  std::vector<std::vector<VectorClock>> history_;
};

enum class MonitorResult : uint8_t { Proceed, Blocked };

struct PendingMonitor {
  CounterRef counter;
  uint64_t expected;
};

struct BarrierSpec {
  uint32_t ccb_counter = 0;
  uint32_t group_size = 1;
  // One update per member once every member has arrived.
  std::vector<CounterRef> release_targets;
};

// All counter files of the machine plus the pending-monitor table, delayed
// (remote) updates and barrier units. Time only advances through settle().
// Within a settlement, updates are applied before monitors are
// re-evaluated, in (delivery cycle, order key, post sequence) order.
class SyncNetwork {
 public:
  using LatencyFn = std::function<uint64_t(const Endpoint& from, const Endpoint& to)>;

  SyncNetwork(const MachineConfig& cfg, bool track_clocks = false);

  void set_latency(LatencyFn fn) { latency_ = std::move(fn); }

  SyncCounterFile& file(const CounterRef& ref);
  const SyncCounterFile& file(const CounterRef& ref) const;
  uint64_t value(const CounterRef& ref) const;

  // Immediate update, as performed inside a settlement step.
  uint64_t sc_update(const CounterRef& ref, uint64_t cycle, const VectorClock* clock = nullptr);

  // Proceed iff value >= expected; otherwise `waiter` is parked until a
  // later settlement satisfies it. A waiter has at most one pending monitor.
  MonitorResult sc_monitor(uint32_t waiter, const CounterRef& ref, uint64_t expected);
  void cancel(uint32_t waiter);
  const std::map<uint32_t, PendingMonitor>& pending() const { return pending_; }

  // Queue an update to land at `deliver_cycle`. Throws UnroutableTarget.
  void post_update(const CounterRef& ref, uint64_t deliver_cycle, uint64_t order_key,
                   const VectorClock* clock = nullptr);
  // Fan-out of one update per target, each delayed by the fabric latency
  // from `from`.
  void multicast_update(const std::vector<CounterRef>& targets, const Endpoint& from,
                        uint64_t cycle, uint64_t order_key, const VectorClock* clock = nullptr);

  uint32_t add_barrier(BarrierSpec spec);

  // Applies every posted update due at or before `cycle`, fires barriers,
  // then releases satisfied monitors. Returns released waiters in ascending
  // id order.
  std::vector<uint32_t> settle(uint64_t cycle);

  std::optional<uint64_t> next_delivery() const;
  bool has_posted() const { return !posted_.empty(); }

  const std::vector<SyncEvent>& events() const { return events_; }
  void set_event_logging(bool on) { log_events_ = on; }

 private:
  struct Posted {
    uint64_t cycle;
    uint64_t key;
    uint64_t seq;
    CounterRef ref;
    std::optional<VectorClock> clock;
    auto operator<=>(const Posted& o) const {
      return std::tie(cycle, key, seq) <=> std::tie(o.cycle, o.key, o.seq);
    }
    bool operator==(const Posted& o) const { return seq == o.seq; }
  };
  struct Barrier {
    BarrierSpec spec;
    uint64_t generation = 0;
  };

  void check_ref(const CounterRef& ref) const;
  void log(SyncEvent ev);

  MachineConfig cfg_;
  bool track_;
  std::vector<SyncCounterFile> tpb_files_;
  SyncCounterFile ccb_file_;
  std::map<uint32_t, PendingMonitor> pending_;
  std::vector<Posted> posted_;  // kept sorted
  uint64_t post_seq_ = 0;
  std::vector<Barrier> barriers_;
  LatencyFn latency_;
  std::vector<SyncEvent> events_;
  bool log_events_ = true;
};

}  // namespace tpbsim
