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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpbsim/machine.hpp"
#include "tpbsim/sync.hpp"

namespace tpbsim {

struct BankedMemoryConfig {
  uint64_t bytes = 2 * MiB;
  uint32_t banks = 32;
  uint32_t line_bytes = 32;   // interleave granularity
  uint32_t ports = 8;
  uint32_t read_latency = 20;

  static BankedMemoryConfig hbsm(const MachineConfig& cfg);
};

enum class MemOp : uint8_t { Read, Write };

struct MemRequest {
  uint32_t requester = 0;
  uint64_t addr = 0;
  uint32_t len = 0;
  MemOp rw = MemOp::Read;
  std::vector<uint8_t> payload;  // writes only
  uint64_t tag = 0;
  std::optional<CounterRef> sync_on_grant;
};

struct MemGrant {
  uint32_t requester;
  uint64_t tag;
  uint64_t addr;
  uint32_t len;
  MemOp rw;
  uint32_t bank;
  std::optional<CounterRef> sync_on_grant;
};

struct MemCompletion {
  uint32_t requester;
  uint64_t tag;
  MemOp rw;
  std::vector<uint8_t> data;  // reads only
};

struct MemCycleResult {
  std::vector<MemGrant> grants;
  std::vector<MemCompletion> completions;
};

// Line-interleaved banked scratchpad. Each cycle every bank grants at most
// one port-queue head, chosen round-robin starting after the previous
// winner. Reads sample memory at grant and return after the pipeline
// latency; writes become visible at grant. Each port is served in
// submission order.
class BankedMemory {
 public:
  explicit BankedMemory(BankedMemoryConfig cfg);

  const BankedMemoryConfig& config() const { return cfg_; }

  uint32_t bank_of(uint64_t addr) const;

  // Throws MalformedRequest (zero length, line crossing, out of range) or
  // OutOfRange for a bad port.
  void submit(MemRequest req);

  MemCycleResult cycle(uint64_t now);

  size_t queued(uint32_t port) const { return queues_.at(port).size(); }
  size_t inflight() const { return inflight_.size(); }
  bool idle() const;
  std::optional<uint64_t> next_completion() const;

  // Side-band access that bypasses arbitration (fabric landing, fixtures).
  std::span<const uint8_t> bytes() const { return storage_; }
  void write_direct(uint64_t addr, std::span<const uint8_t> data);
  std::vector<uint8_t> read_direct(uint64_t addr, uint64_t len) const;
  void load_image(std::span<const uint8_t> image);

  uint64_t granted_bytes() const { return granted_bytes_; }
  uint64_t grants() const { return grants_; }

 private:
  struct Inflight {
    uint64_t ready;
    uint32_t requester;
    uint64_t tag;
    MemOp rw;
    std::vector<uint8_t> data;
  };

  BankedMemoryConfig cfg_;
  std::vector<uint8_t> storage_;
  std::vector<std::deque<MemRequest>> queues_;
  std::vector<uint32_t> rr_;
  std::deque<Inflight> inflight_;  // ready cycles are nondecreasing
  uint64_t granted_bytes_ = 0;
  uint64_t grants_ = 0;
};

}  // namespace tpbsim
