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
#include <string>
#include <vector>

#include "tpbsim/graph.hpp"
#include "tpbsim/machine.hpp"

namespace tpbsim {

// Micro-benchmarks over the simulator. Each one builds its own workload,
// runs it and reports measured cycle counts; none of them asserts.

struct TcuBench {
  uint64_t mac_cycles = 0;        // from the TCU timing model
  uint64_t instruction_cycles = 0;  // compute span of the traced TCU event
  uint64_t makespan = 0;
  bool outputs_match = false;
  uint64_t trace_hash = 0;
};

// i8 matmul M=32, K=32, N=64 compiled onto one TPB and simulated.
TcuBench bench_tcu_matmul(const MachineConfig& cfg);

struct HbsmBench {
  uint64_t cycles = 0;
  uint64_t stream_bytes = 0;       // granted bytes over `cycles`
  uint64_t stream_min_cycle = 0;   // least bytes granted in any cycle
  uint64_t stream_max_cycle = 0;
  uint64_t contention_grants = 0;
  uint64_t window_spread = 0;      // max - min per-port grants, worst 8-grant window
};

// Conflict-free streaming on all ports, then full contention on bank 0.
HbsmBench bench_hbsm(const MachineConfig& cfg, uint64_t cycles);

struct DmaBench {
  uint64_t broadcast_bytes = 0;
  uint64_t broadcast_cycles = 0;  // DDR to every cluster over the ring
  uint64_t dual_cycles = 0;       // two engines reading DDR at once
  uint64_t dual_peak_ddr = 0;     // most DDR bytes in one cycle
  uint64_t trace_hash = 0;
};

DmaBench bench_dma(const MachineConfig& cfg, uint64_t bytes);

// The bundled 4-op pipeline: matmul, softmax, matmul, layernorm.
Graph pipeline_graph();

struct PipelineBench {
  uint64_t makespan = 0;
  uint64_t serial_makespan = 0;  // same chunks on one TPB, serial mode
  uint64_t estimate = 0;
  double ratio = 0;
  double concurrency = 0;        // fraction of makespan with >= 2 units busy
  double error = 0;
  double tolerance = 0;
  bool ok = false;
  uint64_t trace_hash = 0;
};

PipelineBench bench_pipeline(const MachineConfig& cfg, const Graph& g, uint32_t tpbs,
                             int64_t chunks, uint64_t seed);

struct BenchRow {
  std::string name;
  uint64_t cycles = 0;
  std::string note;
};

struct BenchTable {
  std::string suite;
  std::vector<BenchRow> rows;
  uint64_t trace_hash = 0;  // combined over every simulated run
};

// Suites: "micro", "pipeline", "all". Unknown names throw ParseError.
BenchTable run_bench(const std::string& suite, const MachineConfig& cfg);
std::vector<std::string> bench_suites();
std::string format_bench(const BenchTable& t);

}  // namespace tpbsim
