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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tpbsim/isa.hpp"
#include "tpbsim/machine.hpp"

namespace tpbsim {

// ---- TCU ----------------------------------------------------------------

struct TcuTiming {
  uint64_t mac_cycles = 0;
  uint64_t fill = 0;
  uint64_t drain = 0;
  uint64_t total() const { return fill + mac_cycles + drain; }
};

// MAC phase = ceil(K' / (rows * dot)) * M' * ceil(N' / cols).
TcuTiming tcu_timing(const TcuOp& op, const MachineConfig& cfg);

// Operands and result are dense element streams in walker order:
// matmul act [m,k], wt [k,n], out [m,n]; conv act NHWC, wt [kh,kw,cin,cout],
// out NHWC. Integer inputs accumulate exactly (saturating to i32); f16
// inputs accumulate in f32 four products at a time.
std::vector<uint8_t> tcu_execute(const TcuOp& op, std::span<const uint8_t> act,
                                 std::span<const uint8_t> wt);

// ---- CVU ----------------------------------------------------------------

// Pipelines whose streams are all integer and that use only exact operators
// run in 64-bit integers; everything else runs in f32.
bool cvu_integer_domain(const CvuPipeline& p);

// fill + ceil(elements / lanes) for one pass over stream A.
uint64_t cvu_cycles(const CvuPipeline& p, const MachineConfig& cfg);

// Stage semantics: binary ops combine a and b; scalebias is a*imm + imm2;
// selge yields a when a >= b and imm2 otherwise; convert rounds through
// convert_to. Throws NonfiniteFault on a NaN/Inf stored to an integer
// output when `fault_on_nonfinite` is set.
std::vector<uint8_t> cvu_execute(const CvuPipeline& p, std::span<const uint8_t> a,
                                 std::span<const uint8_t> b, bool fault_on_nonfinite = false);

// Two-pass and windowed pipelines built from the operator set. The stats
// passes emit two f32 scalars per row that the second pass reads as row
// scalars of stream B.
namespace recipes {
// Emits (row max, sum of exp(x - max)).
CvuPipeline softmax_stats(int64_t rows, int64_t len, DType in);
CvuPipeline softmax_normalize(int64_t rows, int64_t len, DType in, DType out);
// Emits (mean, 1 / sqrt(variance + eps)).
CvuPipeline layernorm_stats(int64_t rows, int64_t len, DType in, double eps);
CvuPipeline layernorm_normalize(int64_t rows, int64_t len, DType in, DType out);
// One output per row of `window` elements. The average divides the f32
// row sum by the window size.
CvuPipeline pool_max(int64_t rows, int64_t window, DType in, DType out);
CvuPipeline pool_avg(int64_t rows, int64_t window, DType in, DType out);
}  // namespace recipes

// ---- DTDU ---------------------------------------------------------------

// Maps the input element stream to the output element stream: copy is the
// identity, transpose2d reorders a rows x cols tile, fill repeats the
// pattern `count` times (the input is ignored).
std::vector<uint8_t> dtdu_transform(const DtduOp& op, std::span<const uint8_t> in, uint64_t count);

// ---- CSU / cluster CPU / GSDU -------------------------------------------

enum class RoutineBehavior : uint8_t { LaunchGsdu, ScalarPostprocess, NoOp };
std::string_view routine_behavior_name(RoutineBehavior b);
std::optional<RoutineBehavior> parse_routine_behavior(std::string_view s);

struct Routine {
  uint32_t id = 0;
  std::string name;
  RoutineBehavior behavior = RoutineBehavior::NoOp;
  uint64_t cost = 0;
  bool operator==(const Routine&) const = default;
};

class RoutineRegistry {
 public:
  void add(const Routine& r);
  const Routine& get(uint32_t id) const;  // UnknownRoutine if absent
  bool contains(uint32_t id) const { return routines_.count(id) != 0; }
  const std::map<uint32_t, Routine>& all() const { return routines_; }

 private:
  std::map<uint32_t, Routine> routines_;
};

// Byte-addressed view of every memory in the machine, used by the CPU-side
// engines. Implementations range-check and throw OutOfRange.
class MemoryPort {
 public:
  virtual ~MemoryPort() = default;
  virtual std::vector<uint8_t> read(const AddressSpace& space, uint64_t addr, uint64_t len) = 0;
  virtual void write(const AddressSpace& space, uint64_t addr, std::span<const uint8_t> bytes) = 0;
  virtual uint64_t capacity(const AddressSpace& space) const = 0;
};

// launch_gsdu argument block:
//   [0] 0 gather / 1 scatter   [1] index table address (i32, local HBSM)
//   [2] element count          [3] local HBSM address
//   [4] remote kind            [5] remote cluster   [6] remote tpb
//   [7] remote base address    [8] remote element count   [9] element bytes
struct GatherScatterPlan {
  bool scatter = false;
  uint64_t index_addr = 0;
  uint64_t count = 0;
  uint64_t local_addr = 0;
  AddressSpace remote;
  uint64_t remote_base = 0;
  uint64_t remote_elems = 0;
  uint32_t elem_bytes = 1;
};
std::vector<int64_t> encode_gsdu_args(const GatherScatterPlan& plan);
GatherScatterPlan decode_gsdu_args(const std::vector<int64_t>& args);

struct AccessRecord {
  AddressSpace space;
  uint64_t addr = 0;
  uint64_t len = 0;
  bool write = false;
};

// Executes a plan element by element against `mem`; `local` is the issuing
// TPB's HBSM. Every access is appended to `log` when given. Duplicate
// scatter indices resolve in index order (last writer wins).
void gsdu_execute(const GatherScatterPlan& plan, const AddressSpace& local, MemoryPort& mem,
                  std::vector<AccessRecord>* log = nullptr);
// Bytes a plan puts on the fabric. Elements are never coalesced: each one
// costs at least one 32-byte transaction.
inline constexpr uint64_t kGsduTransactionBytes = 32;
uint64_t gsdu_wire_bytes(const GatherScatterPlan& plan);

// scalar_postprocess argument block: [0] local address [1] count
// [2] dtype code [3] multiplier [4] addend. Rewrites x -> x * mul + add.
void scalar_postprocess(const std::vector<int64_t>& args, const AddressSpace& local, MemoryPort& mem,
                        std::vector<AccessRecord>* log = nullptr);

struct ServiceRequest {
  uint32_t routine = 0;
  std::vector<int64_t> args;
  uint32_t tpb = 0;       // within the cluster
  uint64_t ticket = 0;    // caller's handle
  uint64_t arrival = 0;   // cycle the request reached the CPU
};

struct ServiceDone {
  ServiceRequest request;
  uint64_t start = 0;
  uint64_t finish = 0;
};

// Cluster CPU: one routine at a time. Among waiting requests the earliest
// arrival runs first, ties broken by ascending TPB index. Service time is
// the interrupt overhead + routine cost + the modeled work returned by
// `work` (called when service starts).
class ClusterCpu {
 public:
  using WorkFn = std::function<uint64_t(const ServiceRequest&, const Routine&)>;
  ClusterCpu(const RoutineRegistry* routines, uint32_t interrupt_overhead);

  void submit(ServiceRequest r);  // UnknownRoutine if not registered
  // Starts service if idle and something is waiting; returns finished
  // requests whose finish cycle is <= now.
  std::vector<ServiceDone> step(uint64_t now, const WorkFn& work);
  bool idle() const { return !busy_ && waiting_.empty(); }
  std::optional<uint64_t> next_event() const;

 private:
  const RoutineRegistry* routines_;
  uint32_t overhead_;
  std::vector<ServiceRequest> waiting_;
  std::optional<ServiceDone> busy_;
};

}  // namespace tpbsim
