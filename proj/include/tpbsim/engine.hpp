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
#include <optional>
#include <string>
#include <vector>

#include "tpbsim/error.hpp"
#include "tpbsim/machine.hpp"
#include "tpbsim/oracle.hpp"
#include "tpbsim/program.hpp"

namespace tpbsim {

// One duration on a track. Tracks are "c<cluster>.t<tpb>.<unit>",
// "dma<engine>", "icb" and "c<cluster>.cpu".
struct TraceEvent {
  std::string track;
  std::string name;
  uint64_t begin = 0;
  uint64_t end = 0;  // exclusive
  uint64_t seq = 0;
  uint64_t bytes = 0;
  uint64_t compute = 0;  // cycles of the compute phase, units only
};

struct TraceCounterEvent {
  uint64_t cycle = 0;
  std::string counter;
  uint64_t value = 0;
  std::string kind;  // "update" or "release"
};

struct TraceSummary {
  uint64_t makespan = 0;
  std::map<std::string, uint64_t> busy;     // cycles per track
  std::map<std::string, uint64_t> fabric_bytes;
  uint64_t icb_bits = 0;
  uint64_t hbsm_bytes = 0;
  uint64_t peak_ddr_bytes = 0;  // most DDR bytes moved in any one cycle
};

struct Trace {
  std::vector<TraceEvent> events;
  std::vector<TraceCounterEvent> sync;
  TraceSummary summary;
};

// Chrome trace-event JSON with a "summary" object next to "traceEvents".
std::string trace_json(const Trace& t);
void save_trace(const std::string& path, const Trace& t);  // IoError
uint64_t trace_hash(const Trace& t);

// Fraction of the makespan during which at least `k` unit tracks (not DMA,
// ICB or CPU tracks) are busy at once.
double concurrency_fraction(const Trace& t, uint32_t k);

struct RaceEvent {
  uint64_t cycle = 0;
  std::string what;
};

struct RunOptions {
  // One execution at a time: an instruction or DMA starts only when no
  // other instruction or DMA is in flight.
  bool serial = false;
  bool trace = true;
  std::optional<uint64_t> watchdog;  // overrides cfg.watchdog_cycles
};

struct Fault {
  ErrorKind kind = ErrorKind::Internal;
  std::string message;
  std::vector<std::string> details;
  uint64_t cycle = 0;
};

struct RunResult {
  TensorMap outputs;
  uint64_t makespan = 0;
  Trace trace;
  std::optional<Fault> fault;
  std::vector<RaceEvent> races;
  std::vector<Interrupt> interrupts;
  uint64_t output_hash = 0;

  bool ok() const { return !fault.has_value(); }
  // Throws the fault, if any, as an Error.
  const RunResult& check() const;
};

// Loads the program and inputs, steps the machine until the end-of-task
// condition holds or a fault stops it. Input mismatches throw ShapeMismatch
// before the run starts; faults during the run are returned in `fault`.
RunResult run(const ScheduledProgram& p, const MachineConfig& cfg, const TensorMap& inputs,
              const RunOptions& opt = {});

}  // namespace tpbsim
