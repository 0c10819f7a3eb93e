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

#include "tpbsim/machine.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <variant>

#include "tpbsim/error.hpp"

namespace tpbsim {

namespace {

using FieldPtr = std::variant<uint32_t MachineConfig::*, uint64_t MachineConfig::*,
                              bool MachineConfig::*>;

struct Field {
  std::string_view key;
  FieldPtr ptr;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"num_clusters", &MachineConfig::num_clusters},
      {"tpbs_per_cluster", &MachineConfig::tpbs_per_cluster},
      {"hbsm_bytes", &MachineConfig::hbsm_bytes},
      {"hbsm_banks", &MachineConfig::hbsm_banks},
      {"hbsm_bank_width", &MachineConfig::hbsm_bank_width},
      {"hbsm_ports", &MachineConfig::hbsm_ports},
      {"hbsm_latency", &MachineConfig::hbsm_latency},
      {"ccb_sram_bytes", &MachineConfig::ccb_sram_bytes},
      {"ccb_sram_banks", &MachineConfig::ccb_sram_banks},
      {"ccb_interleave", &MachineConfig::ccb_interleave},
      {"ccb_dma_engines", &MachineConfig::ccb_dma_engines},
      {"ccb_sram_bank_bytes_per_cycle", &MachineConfig::ccb_sram_bank_bytes_per_cycle},
      {"ddr_bytes_per_cycle", &MachineConfig::ddr_bytes_per_cycle},
      {"ddr_bytes", &MachineConfig::ddr_bytes},
      {"ddr_split_ports", &MachineConfig::ddr_split_ports},
      {"mesh_pair_bytes_per_cycle", &MachineConfig::mesh_pair_bytes_per_cycle},
      {"drb_aggregate_bytes_per_cycle", &MachineConfig::drb_aggregate_bytes_per_cycle},
      {"icb_bits_per_cycle", &MachineConfig::icb_bits_per_cycle},
      {"tcu_rows", &MachineConfig::tcu_rows},
      {"tcu_cols", &MachineConfig::tcu_cols},
      {"tcu_dot_width", &MachineConfig::tcu_dot_width},
      {"tcu_fill", &MachineConfig::tcu_fill},
      {"tcu_drain", &MachineConfig::tcu_drain},
      {"cvu_lanes", &MachineConfig::cvu_lanes},
      {"cvu_fill", &MachineConfig::cvu_fill},
      {"dispatcher_contexts", &MachineConfig::dispatcher_contexts},
      {"queue_capacity", &MachineConfig::queue_capacity},
      {"sync_counters", &MachineConfig::sync_counters},
      {"csu_interrupt_overhead", &MachineConfig::csu_interrupt_overhead},
      {"icb_hop_latency", &MachineConfig::icb_hop_latency},
      {"mesh_hop_latency", &MachineConfig::mesh_hop_latency},
      {"cluster_noc_latency", &MachineConfig::cluster_noc_latency},
      {"drb_hop_latency", &MachineConfig::drb_hop_latency},
      {"mesh_cols", &MachineConfig::mesh_cols},
      {"mesh_rows", &MachineConfig::mesh_rows},
      {"max_walker_levels", &MachineConfig::max_walker_levels},
      {"max_walker_iterations", &MachineConfig::max_walker_iterations},
      {"unit_outstanding_beats", &MachineConfig::unit_outstanding_beats},
      {"nonfinite_fault", &MachineConfig::nonfinite_fault},
      {"watchdog_cycles", &MachineConfig::watchdog_cycles},
  };
  return table;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Accepts plain integers and a K/M/G binary suffix ("2M" = 2 MiB).
std::optional<uint64_t> parse_size(std::string_view v) {
  uint64_t mult = 1;
  if (!v.empty()) {
    switch (v.back()) {
      case 'K': mult = KiB; break;
      case 'M': mult = MiB; break;
      case 'G': mult = 1024 * MiB; break;
      default: break;
    }
    if (mult != 1) v.remove_suffix(1);
  }
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) return std::nullopt;
  return out * mult;
}

}  // namespace

std::vector<std::string> config_violations(const MachineConfig& cfg) {
  std::vector<std::string> errs;
  auto positive = [&](std::string_view name, uint64_t v) {
    if (v == 0) errs.push_back(std::string(name) + " must be > 0");
  };
  for (const auto& f : fields()) {
    if (f.key == "drb_hop_latency" || f.key == "icb_hop_latency" ||
        f.key == "mesh_hop_latency" || f.key == "cluster_noc_latency" ||
        f.key == "tcu_fill" || f.key == "tcu_drain" || f.key == "cvu_fill" ||
        f.key == "csu_interrupt_overhead" || f.key == "hbsm_latency")
      continue;  // latencies may be zero
    std::visit(
        [&](auto ptr) {
          using T = std::remove_reference_t<decltype(cfg.*ptr)>;
          if constexpr (!std::is_same_v<T, const bool>) positive(f.key, cfg.*ptr);
        },
        f.ptr);
  }
  if (cfg.hbsm_banks && cfg.hbsm_bank_width &&
      cfg.hbsm_bytes % (uint64_t{cfg.hbsm_banks} * cfg.hbsm_bank_width) != 0)
    errs.push_back("hbsm_bytes must be divisible by hbsm_banks * hbsm_bank_width");
  if (cfg.hbsm_ports > kRequesterCapableUnits)
    errs.push_back("hbsm_ports exceeds the " + std::to_string(kRequesterCapableUnits) +
                   " requester-capable units of a TPB");
  if (cfg.ccb_sram_banks && cfg.ccb_interleave &&
      cfg.ccb_sram_bytes % (uint64_t{cfg.ccb_sram_banks} * cfg.ccb_interleave) != 0)
    errs.push_back("ccb_sram_bytes must be divisible by ccb_sram_banks * ccb_interleave");
  if (uint64_t{cfg.mesh_cols} * cfg.mesh_rows < uint64_t{cfg.num_clusters} + 2)
    errs.push_back("mesh grid too small for clusters + CCB + SRAM nodes");
  if (cfg.dispatcher_contexts > 64) errs.push_back("dispatcher_contexts must be <= 64");
  if (cfg.max_walker_levels > 16) errs.push_back("max_walker_levels must be <= 16");
  if (cfg.ccb_dma_engines > 16) errs.push_back("ccb_dma_engines must be <= 16");
  return errs;
}

const MachineConfig& validate_config(const MachineConfig& cfg) {
  auto errs = config_violations(cfg);
  if (!errs.empty())
    throw Error(ErrorKind::ConfigInvalid, "machine config has " +
                                              std::to_string(errs.size()) + " violation(s)",
                std::move(errs));
  return cfg;
}

MachineConfig parse_config(std::string_view text) {
  MachineConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorKind::ParseError, "config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    auto it = std::find_if(fields().begin(), fields().end(),
                           [&](const Field& f) { return f.key == key; });
    if (it == fields().end())
      fail(ErrorKind::ParseError,
           "config line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
    std::visit(
        [&](auto ptr) {
          using T = std::remove_reference_t<decltype(cfg.*ptr)>;
          if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1") cfg.*ptr = true;
            else if (value == "false" || value == "0") cfg.*ptr = false;
            else fail(ErrorKind::ParseError, "config line " + std::to_string(lineno) + ": bad bool");
          } else {
            auto v = parse_size(value);
            if (!v || *v > std::numeric_limits<T>::max())
              fail(ErrorKind::ParseError,
                   "config line " + std::to_string(lineno) + ": bad value for " + std::string(key));
            cfg.*ptr = static_cast<T>(*v);
          }
        },
        it->ptr);
  }
  validate_config(cfg);
  return cfg;
}

MachineConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::IoError, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const MachineConfig& cfg) {
  std::ostringstream out;
  for (const auto& f : fields()) {
    out << f.key << " = ";
    std::visit([&](auto ptr) {
      if constexpr (std::is_same_v<std::remove_cvref_t<decltype(cfg.*ptr)>, bool>)
        out << (cfg.*ptr ? "true" : "false");
      else
        out << cfg.*ptr;
    }, f.ptr);
    out << '\n';
  }
  return out.str();
}

uint64_t space_capacity(const MachineConfig& cfg, const AddressSpace& space) {
  switch (space.kind) {
    case SpaceKind::HBSM: return cfg.hbsm_bytes;
    case SpaceKind::CCB_SRAM: return cfg.ccb_sram_bytes;
    case SpaceKind::DDR: return cfg.ddr_bytes;
  }
  return 0;
}

bool space_valid(const MachineConfig& cfg, const AddressSpace& space) {
  if (space.kind != SpaceKind::HBSM) return true;
  return space.cluster < cfg.num_clusters && space.tpb < cfg.tpbs_per_cluster;
}

std::string format_space(const AddressSpace& space) {
  switch (space.kind) {
    case SpaceKind::HBSM:
      return "hbsm:" + std::to_string(space.cluster) + "." + std::to_string(space.tpb);
    case SpaceKind::CCB_SRAM: return "sram";
    case SpaceKind::DDR: return "ddr";
  }
  return "?";
}

AddressSpace parse_space(const std::string& text) {
  if (text == "sram") return AddressSpace::sram();
  if (text == "ddr") return AddressSpace::ddr();
  const auto dot = text.find('.');
  if (text.rfind("hbsm:", 0) == 0 && dot != std::string::npos) {
    try {
      size_t used = 0;
      const auto c = std::stoul(text.substr(5, dot - 5), &used);
      if (used == dot - 5) {
        const auto t = std::stoul(text.substr(dot + 1), &used);
        if (used == text.size() - dot - 1)
          return AddressSpace::hbsm(static_cast<uint32_t>(c), static_cast<uint32_t>(t));
      }
    } catch (const std::exception&) {
    }
  }
  fail(ErrorKind::ParseError, "bad address space '" + text + "'");
}

std::vector<int64_t> dense_strides(const std::vector<int64_t>& shape) {
  std::vector<int64_t> strides(shape.size(), 1);
  for (size_t d = shape.size(); d-- > 1;) strides[d - 1] = strides[d] * shape[d];
  return strides;
}

TensorDesc TensorDesc::dense(std::vector<int64_t> shape, DType dtype, AddressSpace space,
                             uint64_t base) {
  TensorDesc t;
  t.strides = dense_strides(shape);
  t.shape = std::move(shape);
  t.dtype = dtype;
  t.space = space;
  t.base = base;
  return t;
}

int64_t TensorDesc::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), int64_t{1}, std::multiplies<>());
}

uint64_t tensor_bytes(const TensorDesc& t) {
  return static_cast<uint64_t>(t.element_count()) * byte_width(t.dtype);
}

uint64_t footprint_end(const TensorDesc& t) {
  int64_t hi = 0;
  for (size_t d = 0; d < t.rank(); ++d)
    if (t.strides[d] > 0) hi += (t.shape[d] - 1) * t.strides[d];
  return t.base + static_cast<uint64_t>(hi) * byte_width(t.dtype) + byte_width(t.dtype);
}

void validate_tensor(const MachineConfig& cfg, const TensorDesc& t, bool writable) {
  if (t.shape.empty()) fail(ErrorKind::ShapeMismatch, "tensor has rank 0");
  if (t.shape.size() != t.strides.size())
    fail(ErrorKind::ShapeMismatch, "shape and strides differ in rank");
  int64_t neg = 0;
  for (size_t d = 0; d < t.rank(); ++d) {
    if (t.shape[d] <= 0) fail(ErrorKind::ShapeMismatch, "zero or negative extent");
    if (t.strides[d] < 0) neg += (t.shape[d] - 1) * -t.strides[d];
  }
  if (static_cast<uint64_t>(neg) * byte_width(t.dtype) > t.base)
    fail(ErrorKind::IndexOutOfRange, "negative strides reach below address 0");
  if (!space_valid(cfg, t.space)) fail(ErrorKind::IndexOutOfRange, "HBSM id out of range");
  if (footprint_end(t) > space_capacity(cfg, t.space))
    fail(ErrorKind::IndexOutOfRange, "tensor footprint exceeds " + format_space(t.space));
  if (writable) {
    // Sufficient non-overlap condition: sorted by |stride|, each stride
    // clears the full span of the dimensions nested inside it.
    std::vector<std::pair<int64_t, int64_t>> dims;
    for (size_t d = 0; d < t.rank(); ++d)
      if (t.shape[d] > 1) dims.emplace_back(std::abs(t.strides[d]), t.shape[d]);
    std::sort(dims.begin(), dims.end());
    int64_t span = 1;
    for (auto [stride, extent] : dims) {
      if (stride < span) fail(ErrorKind::OverlapFault, "writable tensor layout self-overlaps");
      span = stride * extent;
    }
  }
}

ResolvedAddress element_address(const TensorDesc& t, std::span<const int64_t> index) {
  if (index.size() != t.rank()) fail(ErrorKind::IndexOutOfRange, "index rank mismatch");
  int64_t off = 0;
  for (size_t d = 0; d < t.rank(); ++d) {
    if (index[d] < 0 || index[d] >= t.shape[d])
      fail(ErrorKind::IndexOutOfRange, "index out of range in dim " + std::to_string(d));
    off += index[d] * t.strides[d];
  }
  const int64_t bytes = static_cast<int64_t>(t.base) + off * byte_width(t.dtype);
  return {t.space, static_cast<uint64_t>(bytes)};
}

}  // namespace tpbsim
