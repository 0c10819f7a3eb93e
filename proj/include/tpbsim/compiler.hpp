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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tpbsim/graph.hpp"
#include "tpbsim/machine.hpp"
#include "tpbsim/passes.hpp"
#include "tpbsim/program.hpp"

namespace tpbsim {

struct CompileOptions {
  uint32_t tpbs = 4;       // TPB budget
  uint32_t first_tpb = 0;  // global index of the first TPB used
  int64_t chunks = 0;      // nonzero overrides the graph directive and the fit rule
  std::vector<Pass> passes = default_passes();
  double scratch_margin = 0.125;  // share of each HBSM kept free
  uint32_t dispatcher = 0;
};

// Space: which TPB and unit runs each lowered op. Ops are graph node names
// in topological order; reshapes that only alias their input are absent.
struct Placement {
  std::vector<std::string> ops;
  std::map<std::string, uint32_t> stage;
  std::map<std::string, uint32_t> tpb;  // global TPB index
  std::map<std::string, Unit> unit;
  std::map<std::string, uint64_t> cost;  // estimated cycles for the whole tensor
  uint32_t stages = 0;
};

// Time: every chunked tensor is cut into `chunks` equal byte ranges along
// its outermost axis and streamed through double-buffered HBSM slots.
struct PartitionPlan {
  int64_t chunks = 1;
  std::map<std::string, uint64_t> chunk_bytes;  // per chunked tensor
  std::map<uint32_t, uint64_t> footprint;       // HBSM bytes used per TPB
  uint64_t budget = 0;                          // usable HBSM bytes per TPB
};

// Greedy contiguous stages: one op per TPB when there are no more ops than
// TPBs, otherwise cuts near total / tpbs estimated cycles. Throws
// TooFewTpbs when the budget is empty or exceeds the machine.
Placement place(const Graph& g, const MachineConfig& cfg, const CompileOptions& opt);

// Chunk counts the graph admits, ascending: divisors of the common
// outermost extent, or just 1 when an op cannot be chunked.
std::vector<int64_t> chunk_candidates(const Graph& g);

// Smallest admissible chunk count whose buffers fit every TPB (largest
// chunk), or the requested count. Throws DoesNotFit or ShapeMismatch.
std::pair<PartitionPlan, Placement> partition_and_place(const Graph& g, const MachineConfig& cfg,
                                                        const CompileOptions& opt);

// Buffers, sync counters, DMA descriptors and instructions for a plan.
// Throws OutOfCounters when a TPB or the CCB needs more counters than it has.
ScheduledProgram emit(const Graph& g, const PartitionPlan& plan, const Placement& placement,
                      const MachineConfig& cfg, const CompileOptions& opt);

// optimize + partition_and_place + emit.
ScheduledProgram compile(const Graph& g, const MachineConfig& cfg, const CompileOptions& opt = {});

// Lower bound on the makespan: the longest path through unit order,
// producer/consumer waits, DMA engine order and instruction delivery, each
// step costed by its compute time or its memory traffic, whichever is
// larger.
uint64_t estimate_latency(const ScheduledProgram& p, const MachineConfig& cfg);

}  // namespace tpbsim
