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

#include "tpbsim/dtype.hpp"
#include "tpbsim/fabric.hpp"
#include "tpbsim/funits.hpp"
#include "tpbsim/isa.hpp"
#include "tpbsim/machine.hpp"

namespace tpbsim {

// A graph tensor with a home in DDR.
struct TensorBinding {
  enum class Role : uint8_t { Input, Output, Constant };
  Role role = Role::Input;
  std::string name;
  DType dtype = DType::f32;
  std::vector<int64_t> shape;
  uint64_t ddr_addr = 0;
  std::vector<uint8_t> data;  // constants only

  uint64_t bytes() const;
  bool operator==(const TensorBinding&) const = default;
};

// A region of one TPB's HBSM holding `slots` chunk-sized slots.
struct BufferRegion {
  std::string name;
  std::string tensor;
  uint32_t tpb = 0;  // global TPB index
  uint64_t base = 0;
  uint64_t slot_bytes = 0;
  uint32_t slots = 1;
  bool operator==(const BufferRegion&) const = default;
};

struct NamedCounter {
  std::string name;
  CounterRef ref;
  bool operator==(const NamedCounter&) const = default;
};

// Everything needed to run a compiled graph: tensor homes, the HBSM buffer
// and counter maps (informational), routines, the DMA descriptor list
// (each engine runs its descriptors in list order), one dispatcher's
// instruction stream and the end-of-task condition.
struct ScheduledProgram {
  int64_t chunks = 1;
  uint32_t dispatcher = 0;
  std::vector<uint32_t> tpbs;
  std::vector<TensorBinding> tensors;
  std::vector<Routine> routines;
  std::vector<BufferRegion> buffers;
  std::vector<NamedCounter> counters;
  std::vector<DmaDescriptor> dma;
  std::vector<TpbInstruction> instructions;
  std::vector<DmaWait> done;

  const TensorBinding* tensor(const std::string& name) const;
  bool operator==(const ScheduledProgram&) const = default;
};

// Line-oriented text form starting with "program v1". Deterministic: equal
// programs format to identical bytes.
std::string format_program(const ScheduledProgram& p);
ScheduledProgram parse_program(const std::string& text);
void save_program(const std::string& path, const ScheduledProgram& p);
ScheduledProgram load_program(const std::string& path);

// Structural checks: every instruction and descriptor, buffers inside
// their HBSM and disjoint, tensors inside DDR and disjoint, per-(tpb, unit)
// sequence numbers gap-free from 0.
void validate_program(const ScheduledProgram& p, const MachineConfig& cfg);

}  // namespace tpbsim
