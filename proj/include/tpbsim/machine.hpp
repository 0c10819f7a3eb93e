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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tpbsim/dtype.hpp"

namespace tpbsim {

constexpr uint64_t KiB = 1024;
constexpr uint64_t MiB = 1024 * KiB;

// Machine parameters. Bandwidths are bytes (or bits) per cycle under a
// nominal 1 GHz clock; every latency is in cycles.
struct MachineConfig {
  uint32_t num_clusters = 14;
  uint32_t tpbs_per_cluster = 4;

  uint64_t hbsm_bytes = 2 * MiB;
  uint32_t hbsm_banks = 32;
  uint32_t hbsm_bank_width = 32;
  uint32_t hbsm_ports = 8;
  uint32_t hbsm_latency = 20;

  uint64_t ccb_sram_bytes = 32 * MiB;
  uint32_t ccb_sram_banks = 4;
  uint32_t ccb_interleave = 4096;
  uint32_t ccb_dma_engines = 2;
  uint32_t ccb_sram_bank_bytes_per_cycle = 256;

  uint32_t ddr_bytes_per_cycle = 273;
  uint64_t ddr_bytes = 256 * MiB;
  // Alternative DDR model: two independent AXI masters of half the width.
  bool ddr_split_ports = false;
  uint32_t mesh_pair_bytes_per_cycle = 256;
  uint32_t drb_aggregate_bytes_per_cycle = 256;
  uint32_t icb_bits_per_cycle = 64;

  uint32_t tcu_rows = 8;
  uint32_t tcu_cols = 64;
  uint32_t tcu_dot_width = 4;
  uint32_t tcu_fill = 8;
  uint32_t tcu_drain = 4;
  uint32_t cvu_lanes = 32;
  uint32_t cvu_fill = 6;
  uint32_t dispatcher_contexts = 4;

  uint32_t queue_capacity = 64;
  uint32_t sync_counters = 64;
  uint32_t csu_interrupt_overhead = 20;
  uint32_t icb_hop_latency = 1;
  uint32_t mesh_hop_latency = 1;
  uint32_t cluster_noc_latency = 1;
  uint32_t drb_hop_latency = 0;
  uint32_t mesh_cols = 4;
  uint32_t mesh_rows = 4;
  uint32_t max_walker_levels = 8;
  uint64_t max_walker_iterations = uint64_t{1} << 32;
  uint32_t unit_outstanding_beats = 32;
  bool nonfinite_fault = false;
  uint64_t watchdog_cycles = 100'000'000;

  uint32_t total_tpbs() const { return num_clusters * tpbs_per_cluster; }
  uint64_t hbsm_line_count() const { return hbsm_bytes / hbsm_bank_width; }
};

// Units that own an HBSM requester port, in port order. GSDU and CSU share
// the last port.
inline constexpr std::string_view kHbsmPortRoles[] = {
    "tcu_act", "tcu_wt", "tcu_out", "cvu_in0", "cvu_in1", "cvu_out", "dtdu", "gsdu_csu"};
inline constexpr uint32_t kRequesterCapableUnits = 8;

// Returns the config unchanged if every invariant holds; throws
// Error(ConfigInvalid) listing each violation otherwise.
const MachineConfig& validate_config(const MachineConfig& cfg);
std::vector<std::string> config_violations(const MachineConfig& cfg);

// `key = value` per line, `#` comments. Unknown keys are errors; missing keys
// keep their defaults. The result is validated.
MachineConfig parse_config(std::string_view text);
MachineConfig load_config(const std::string& path);
std::string format_config(const MachineConfig& cfg);

enum class SpaceKind : uint8_t { HBSM, CCB_SRAM, DDR };

struct AddressSpace {
  SpaceKind kind = SpaceKind::HBSM;
  uint32_t cluster = 0;
  uint32_t tpb = 0;

  static AddressSpace hbsm(uint32_t cluster, uint32_t tpb) { return {SpaceKind::HBSM, cluster, tpb}; }
  static AddressSpace sram() { return {SpaceKind::CCB_SRAM, 0, 0}; }
  static AddressSpace ddr() { return {SpaceKind::DDR, 0, 0}; }

  bool operator==(const AddressSpace&) const = default;
  auto operator<=>(const AddressSpace&) const = default;
};

uint64_t space_capacity(const MachineConfig& cfg, const AddressSpace& space);
bool space_valid(const MachineConfig& cfg, const AddressSpace& space);
std::string format_space(const AddressSpace& space);
// Inverse of format_space; throws ParseError.
AddressSpace parse_space(const std::string& text);

struct TensorDesc {
  std::vector<int64_t> shape;
  std::vector<int64_t> strides;  // in elements
  DType dtype = DType::i8;
  AddressSpace space;
  uint64_t base = 0;

  static TensorDesc dense(std::vector<int64_t> shape, DType dtype,
                          AddressSpace space = {}, uint64_t base = 0);

  size_t rank() const { return shape.size(); }
  int64_t element_count() const;
};

std::vector<int64_t> dense_strides(const std::vector<int64_t>& shape);

// Throws IndexOutOfRange/ConfigInvalid-style errors for rank mismatch,
// zero extents, capacity overflow or (when writable) self-overlapping strides.
void validate_tensor(const MachineConfig& cfg, const TensorDesc& t, bool writable);

uint64_t tensor_bytes(const TensorDesc& t);

struct ResolvedAddress {
  AddressSpace space;
  uint64_t offset = 0;
};

ResolvedAddress element_address(const TensorDesc& t, std::span<const int64_t> index);

// Largest byte offset touched by any element, plus its width.
uint64_t footprint_end(const TensorDesc& t);

}  // namespace tpbsim
