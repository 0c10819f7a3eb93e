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

#include "tpbsim/fabric.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

#include "tpbsim/error.hpp"
#include "text.hpp"

namespace tpbsim {

std::map<uint32_t, uint32_t> cluster_entries(const TpbMask& mask, const MachineConfig& cfg) {
  std::map<uint32_t, uint32_t> out;
  for (uint32_t g : mask.members()) ++out[g / cfg.tpbs_per_cluster];
  return out;
}

IcbChain::IcbChain(const MachineConfig& cfg) : cfg_(cfg), streams_(cfg.dispatcher_contexts) {}

void IcbChain::load(uint32_t dispatcher, std::vector<TpbInstruction> stream) {
  if (dispatcher >= streams_.size())
    fail(ErrorKind::IndexOutOfRange, "dispatcher " + std::to_string(dispatcher) + " does not exist");
  for (auto& i : stream) streams_[dispatcher].pending.push_back(std::move(i));
}

std::optional<IcbTransmission> IcbChain::try_start(uint64_t now, const RoomFn& room) {
  if (now < free_at_ || stalled_) return std::nullopt;
  int best = -1;
  for (size_t d = 0; d < streams_.size(); ++d) {
    if (streams_[d].pending.empty()) continue;
    if (best < 0 || streams_[d].ready_since < streams_[best].ready_since) best = static_cast<int>(d);
  }
  if (best < 0) return std::nullopt;
  auto& s = streams_[best];
  const TpbInstruction& instr = s.pending.front();
  IcbTransmission tx;
  tx.dispatcher = static_cast<uint32_t>(best);
  tx.entries = cluster_entries(instr.mask, cfg_);
  for (auto [c, n] : tx.entries) {
    if (!room(c, n)) {
      stalled_ = true;
      return std::nullopt;
    }
  }
  const uint64_t cycles = transmit_cycles(instr.encoded_bits, cfg_.icb_bits_per_cycle);
  tx.start = now;
  tx.end = now + cycles;
  for (auto [c, n] : tx.entries) {
    in_flight_.push_back({tx.dispatcher, c, tx.end + uint64_t{c + 1} * cfg_.icb_hop_latency, instr});
  }
  busy_cycles_ += cycles;
  bits_sent_ += instr.encoded_bits;
  free_at_ = tx.end;
  s.pending.pop_front();
  s.ready_since = tx.end;
  return tx;
}

std::vector<IcbDelivery> IcbChain::deliveries(uint64_t now) {
  std::vector<IcbDelivery> due;
  std::vector<IcbDelivery> rest;
  for (auto& d : in_flight_) (d.cycle <= now ? due : rest).push_back(std::move(d));
  in_flight_ = std::move(rest);
  std::stable_sort(due.begin(), due.end(), [](const IcbDelivery& a, const IcbDelivery& b) {
    return std::tie(a.cycle, a.cluster) < std::tie(b.cycle, b.cluster);
  });
  return due;
}

std::optional<uint64_t> IcbChain::next_event() const {
  std::optional<uint64_t> t;
  for (const auto& d : in_flight_)
    if (!t || d.cycle < *t) t = d.cycle;
  if (!all_sent() && !stalled_) t = t ? std::min(*t, free_at_) : free_at_;
  return t;
}

bool IcbChain::all_sent() const {
  for (const auto& s : streams_)
    if (!s.pending.empty()) return false;
  return true;
}

std::string_view resource_kind_name(ResourceKind k) {
  switch (k) {
    case ResourceKind::Ddr: return "ddr";
    case ResourceKind::Sram: return "sram";
    case ResourceKind::Drb: return "drb";
    case ResourceKind::MeshLink: return "mesh";
    case ResourceKind::ClusterNoc: return "cluster_noc";
  }
  return "?";
}

namespace {
// Each of the two AXI masters when the DDR pool is split.
constexpr uint32_t kSplitDdrPortBytes = 128;
constexpr const char* kDirNames[] = {"+x", "-x", "+y", "-y"};
}  // namespace

Fabric::Fabric(const MachineConfig& cfg) : cfg_(cfg) {
  if (cfg.ddr_split_ports) {
    ddr_ = add_resource(ResourceKind::Ddr, kSplitDdrPortBytes, "ddr.port0");
    add_resource(ResourceKind::Ddr, kSplitDdrPortBytes, "ddr.port1");
  } else {
    ddr_ = add_resource(ResourceKind::Ddr, cfg.ddr_bytes_per_cycle, "ddr");
  }
  sram_ = add_resource(ResourceKind::Sram, cfg.ccb_sram_banks * cfg.ccb_sram_bank_bytes_per_cycle, "sram");
  drb_ = add_resource(ResourceKind::Drb, cfg.drb_aggregate_bytes_per_cycle, "drb");
  noc_base_ = static_cast<uint32_t>(resources_.size());
  for (uint32_t c = 0; c < cfg.num_clusters; ++c)
    add_resource(ResourceKind::ClusterNoc, cfg.mesh_pair_bytes_per_cycle, "noc." + std::to_string(c));
  link_base_ = static_cast<uint32_t>(resources_.size());
  for (uint32_t n = 0; n < cfg.mesh_cols * cfg.mesh_rows; ++n)
    for (uint32_t d = 0; d < 4; ++d)
      add_resource(ResourceKind::MeshLink, cfg.mesh_pair_bytes_per_cycle,
                   "mesh." + std::to_string(n) + kDirNames[d]);
}

uint32_t Fabric::add_resource(ResourceKind kind, uint32_t capacity, std::string name) {
  resources_.push_back({kind, capacity, std::move(name)});
  moved_.push_back(0);
  last_step_.push_back(0);
  return static_cast<uint32_t>(resources_.size() - 1);
}

uint32_t Fabric::ddr(uint32_t engine) const { return cfg_.ddr_split_ports ? ddr_ + (engine % 2) : ddr_; }

std::pair<uint32_t, uint32_t> Fabric::node_xy(uint32_t node) const {
  return {node % cfg_.mesh_cols, node / cfg_.mesh_cols};
}

uint32_t Fabric::link_id(uint32_t node, uint32_t dir) const { return link_base_ + node * 4 + dir; }

Fabric::Route Fabric::mesh_route(uint32_t from, uint32_t to) const {
  const uint32_t nodes = cfg_.mesh_cols * cfg_.mesh_rows;
  if (from >= nodes || to >= nodes) fail(ErrorKind::UnroutableTarget, "mesh node outside the grid");
  Route r;
  auto [x, y] = node_xy(from);
  const auto [tx, ty] = node_xy(to);
  while (x != tx) {
    const uint32_t node = y * cfg_.mesh_cols + x;
    r.links.push_back(link_id(node, x < tx ? 0 : 1));
    x = x < tx ? x + 1 : x - 1;
  }
  while (y != ty) {
    const uint32_t node = y * cfg_.mesh_cols + x;
    r.links.push_back(link_id(node, y < ty ? 2 : 3));
    y = y < ty ? y + 1 : y - 1;
  }
  r.hops = static_cast<uint32_t>(r.links.size());
  return r;
}

uint64_t Fabric::start(const StreamSpec& spec, uint64_t now) {
  for (uint32_t r : spec.resources)
    if (r >= resources_.size()) fail(ErrorKind::Internal, "stream names an unknown resource");
  const uint64_t id = next_id_++;
  if (spec.bytes == 0) {
    landing_.push_back({id, spec.tag, now, now + spec.latency, 0});
  } else {
    active_.push_back({id, spec, now, spec.bytes});
  }
  return id;
}

void Fabric::step(uint64_t now) {
  std::fill(last_step_.begin(), last_step_.end(), 0);
  if (active_.empty()) return;
  std::vector<std::vector<size_t>> users(resources_.size());
  std::vector<uint64_t> rate(active_.size(), std::numeric_limits<uint64_t>::max());
  for (size_t i = 0; i < active_.size(); ++i) {
    for (uint32_t r : active_[i].spec.resources) users[r].push_back(i);
    if (active_[i].spec.max_rate) rate[i] = active_[i].spec.max_rate;
  }
  for (size_t r = 0; r < resources_.size(); ++r) {
    const size_t n = users[r].size();
    if (n == 0) continue;
    const uint64_t cap = resources_[r].capacity;
    const uint64_t base = cap / n, rem = cap % n, rot = now % n;
    for (size_t j = 0; j < n; ++j) {
      const uint64_t share = base + (((j + n - rot) % n) < rem ? 1 : 0);
      rate[users[r][j]] = std::min(rate[users[r][j]], share);
    }
  }
  uint64_t ddr_total = 0;
  std::vector<Active> still;
  for (size_t i = 0; i < active_.size(); ++i) {
    auto& a = active_[i];
    const uint64_t moved = std::min(rate[i], a.remaining);
    a.remaining -= moved;
    for (uint32_t r : a.spec.resources) {
      moved_[r] += moved;
      last_step_[r] += moved;
      if (resources_[r].kind == ResourceKind::Ddr) ddr_total += moved;
    }
    if (a.remaining == 0) {
      landing_.push_back({a.id, a.spec.tag, a.start, now + 1 + a.spec.latency, a.spec.bytes});
    } else {
      still.push_back(std::move(a));
    }
  }
  active_ = std::move(still);
  peak_ddr_ = std::max(peak_ddr_, ddr_total);
}

std::vector<StreamDone> Fabric::deliveries(uint64_t now) {
  std::vector<StreamDone> due, rest;
  for (auto& d : landing_) (d.landed <= now ? due : rest).push_back(d);
  landing_ = std::move(rest);
  std::sort(due.begin(), due.end(),
            [](const StreamDone& a, const StreamDone& b) { return std::tie(a.landed, a.id) < std::tie(b.landed, b.id); });
  return due;
}

std::optional<uint64_t> Fabric::next_event(uint64_t now) const {
  if (!active_.empty()) return now;
  std::optional<uint64_t> t;
  for (const auto& d : landing_)
    if (!t || d.landed < *t) t = d.landed;
  return t;
}

uint64_t Fabric::bytes_moved(ResourceKind kind) const {
  uint64_t total = 0;
  for (size_t r = 0; r < resources_.size(); ++r)
    if (resources_[r].kind == kind) total += moved_[r];
  return total;
}

uint32_t sram_bank_of(const MachineConfig& cfg, uint64_t addr) {
  return static_cast<uint32_t>((addr / cfg.ccb_interleave) % cfg.ccb_sram_banks);
}

uint64_t endpoint_latency(const MachineConfig& cfg, const Endpoint& from, const Endpoint& to) {
  if (from == to) return 0;
  if (!from.ccb && !to.ccb && from.cluster == to.cluster) return cfg.cluster_noc_latency;
  auto node = [](const Endpoint& e) { return e.ccb ? Fabric::ccb_node() : Fabric::cluster_node(e.cluster); };
  auto xy = [&](uint32_t n) { return std::pair<int64_t, int64_t>(n % cfg.mesh_cols, n / cfg.mesh_cols); };
  const auto [x0, y0] = xy(node(from));
  const auto [x1, y1] = xy(node(to));
  return static_cast<uint64_t>(std::abs(x0 - x1) + std::abs(y0 - y1)) * cfg.mesh_hop_latency;
}

namespace {

bool is_ccb_side(const AddressSpace& s) { return s.kind == SpaceKind::DDR || s.kind == SpaceKind::CCB_SRAM; }

void bad(const std::string& what) { fail(ErrorKind::BadDescriptor, "DMA descriptor: " + what); }

void check_range(const MachineConfig& cfg, const AddressSpace& s, uint64_t addr, uint64_t bytes) {
  if (!space_valid(cfg, s)) fail(ErrorKind::UnroutableTarget, "DMA names " + format_space(s));
  if (addr + bytes > space_capacity(cfg, s) || addr + bytes < addr)
    fail(ErrorKind::OutOfRange, "DMA range exceeds " + format_space(s));
}

uint32_t banks_touched(const MachineConfig& cfg, uint64_t addr, uint64_t bytes) {
  const uint64_t first = addr / cfg.ccb_interleave;
  const uint64_t last = (addr + bytes - 1) / cfg.ccb_interleave;
  return static_cast<uint32_t>(std::min<uint64_t>(last - first + 1, cfg.ccb_sram_banks));
}

}  // namespace

void validate_descriptor(const DmaDescriptor& d, const MachineConfig& cfg) {
  if (d.engine >= cfg.ccb_dma_engines) bad("engine " + std::to_string(d.engine) + " does not exist");
  if (d.bytes == 0) bad("zero-length transfer");
  if (d.dsts.empty()) bad("no destination");
  check_range(cfg, d.src_space, d.src_addr, d.bytes);
  for (const auto& t : d.dsts) check_range(cfg, t.space, t.addr, d.bytes);
  if (d.src_space.kind == SpaceKind::HBSM) {
    if (d.broadcast || d.dsts.size() != 1 || !is_ccb_side(d.dsts[0].space))
      bad("a TPB memory source must target DDR or CCB SRAM");
  } else if (d.broadcast) {
    for (const auto& t : d.dsts)
      if (t.space.kind != SpaceKind::HBSM) bad("ring broadcast targets must be TPB memories");
  } else {
    if (d.dsts.size() != 1) bad("several targets need a ring broadcast");
    if (d.dsts[0].space.kind == d.src_space.kind) bad("source and destination are the same memory");
  }
  for (const auto& w : d.waits)
    if (w.counter.scope == CounterRef::Scope::Local) bad("wait counters must be global");
  for (const auto& u : d.updates)
    if (u.scope == CounterRef::Scope::Local) bad("update counters must be global");
}

StreamSpec dma_stream(const DmaDescriptor& d, const Fabric& fabric, const MachineConfig& cfg) {
  StreamSpec s;
  s.bytes = d.bytes;
  bool ddr = d.src_space.kind == SpaceKind::DDR;
  std::optional<uint64_t> sram_addr;
  if (d.src_space.kind == SpaceKind::CCB_SRAM) sram_addr = d.src_addr;
  for (const auto& t : d.dsts) {
    ddr |= t.space.kind == SpaceKind::DDR;
    if (t.space.kind == SpaceKind::CCB_SRAM) sram_addr = t.addr;
  }
  if (ddr) s.resources.push_back(fabric.ddr(d.engine));
  if (sram_addr) {
    s.resources.push_back(fabric.sram());
    s.max_rate = banks_touched(cfg, *sram_addr, d.bytes) * cfg.ccb_sram_bank_bytes_per_cycle;
  }
  if (d.broadcast) {
    s.resources.push_back(fabric.drb());
    uint32_t far = 0;
    for (const auto& t : d.dsts) far = std::max(far, t.space.cluster + 1);
    s.latency = uint64_t{far} * cfg.drb_hop_latency;
  } else {
    const AddressSpace& a = d.src_space;
    const AddressSpace& b = d.dsts[0].space;
    if (a.kind == SpaceKind::HBSM || b.kind == SpaceKind::HBSM) {
      const AddressSpace& tpb = a.kind == SpaceKind::HBSM ? a : b;
      const AddressSpace& ccb = a.kind == SpaceKind::HBSM ? b : a;
      const uint32_t ccb_node = ccb.kind == SpaceKind::DDR ? Fabric::ccb_node() : Fabric::sram_node();
      const uint32_t tpb_node = Fabric::cluster_node(tpb.cluster);
      const auto route = a.kind == SpaceKind::HBSM ? fabric.mesh_route(tpb_node, ccb_node)
                                                   : fabric.mesh_route(ccb_node, tpb_node);
      s.resources.insert(s.resources.end(), route.links.begin(), route.links.end());
      s.latency = uint64_t{route.hops} * cfg.mesh_hop_latency;
    }
  }
  return s;
}

namespace {

std::string format_target(const AddressSpace& s, uint64_t addr) {
  return format_space(s) + "@" + std::to_string(addr);
}

DmaTarget parse_target(const std::string& s) {
  const auto at = s.find('@');
  if (at == std::string::npos) fail(ErrorKind::ParseError, "bad DMA endpoint '" + s + "'");
  return {parse_space(s.substr(0, at)), text::to_u64(s.substr(at + 1))};
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

std::string format_descriptor(const DmaDescriptor& d) {
  std::ostringstream o;
  o << "dma engine=" << d.engine << " src=" << format_target(d.src_space, d.src_addr) << " dst=";
  for (size_t i = 0; i < d.dsts.size(); ++i) o << (i ? "+" : "") << format_target(d.dsts[i].space, d.dsts[i].addr);
  o << " bcast=" << (d.broadcast ? 1 : 0) << " bytes=" << d.bytes << " wait=";
  if (d.waits.empty()) o << "-";
  for (size_t i = 0; i < d.waits.size(); ++i)
    o << (i ? "," : "") << format_counter(d.waits[i].counter) << ">=" << d.waits[i].expected;
  o << " upd=";
  if (d.updates.empty()) o << "-";
  for (size_t i = 0; i < d.updates.size(); ++i) o << (i ? "," : "") << format_counter(d.updates[i]);
  return o.str();
}

DmaDescriptor parse_descriptor(const std::string& line) {
  std::istringstream in(line);
  std::string word;
  in >> word;
  if (word != "dma") fail(ErrorKind::ParseError, "descriptor record must start with 'dma'");
  std::map<std::string, std::string> kv;
  while (in >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) fail(ErrorKind::ParseError, "bad descriptor field '" + word + "'");
    kv[word.substr(0, eq)] = word.substr(eq + 1);
  }
  for (const char* key : {"engine", "src", "dst", "bcast", "bytes", "wait", "upd"})
    if (!kv.count(key)) fail(ErrorKind::ParseError, std::string("descriptor lacks '") + key + "'");
  DmaDescriptor d;
  d.engine = static_cast<uint32_t>(text::to_u64(kv["engine"]));
  const auto src = parse_target(kv["src"]);
  d.src_space = src.space;
  d.src_addr = src.addr;
  for (const auto& t : split_on(kv["dst"], '+')) d.dsts.push_back(parse_target(t));
  d.broadcast = kv["bcast"] == "1";
  d.bytes = text::to_u64(kv["bytes"]);
  if (kv["wait"] != "-")
    for (const auto& w : split_on(kv["wait"], ',')) {
      const auto ge = w.find(">=");
      if (ge == std::string::npos) fail(ErrorKind::ParseError, "bad descriptor wait");
      d.waits.push_back({parse_counter(w.substr(0, ge)), text::to_u64(w.substr(ge + 2))});
    }
  if (kv["upd"] != "-")
    for (const auto& u : split_on(kv["upd"], ',')) d.updates.push_back(parse_counter(u));
  return d;
}

DmaEngines::DmaEngines(uint32_t engines) : queues_(engines), active_(engines) {}

void DmaEngines::enqueue(const DmaDescriptor& d) { queues_.at(d.engine).push_back(d); }

const DmaDescriptor* DmaEngines::head(uint32_t engine) const {
  const auto& q = queues_.at(engine);
  return q.empty() ? nullptr : &q.front();
}

void DmaEngines::start(uint32_t engine, uint64_t stream_id) {
  if (active_.at(engine) || queues_.at(engine).empty()) fail(ErrorKind::Internal, "DMA engine cannot start");
  active_[engine] = stream_id;
}

DmaDescriptor DmaEngines::finish(uint32_t engine) {
  if (!active_.at(engine)) fail(ErrorKind::Internal, "DMA engine is not running");
  active_[engine].reset();
  DmaDescriptor d = std::move(queues_[engine].front());
  queues_[engine].pop_front();
  return d;
}

bool DmaEngines::idle() const {
  for (size_t e = 0; e < queues_.size(); ++e)
    if (active_[e] || !queues_[e].empty()) return false;
  return true;
}

void InterruptLog::raise(Interrupt i) {
  auto pos = std::upper_bound(entries_.begin(), entries_.end(), i, [](const Interrupt& a, const Interrupt& b) {
    return std::tie(a.cycle, a.source) < std::tie(b.cycle, b.source);
  });
  entries_.insert(pos, std::move(i));
}

const Interrupt* InterruptLog::first(InterruptCode code) const {
  for (const auto& e : entries_)
    if (e.code == code) return &e;
  return nullptr;
}

}  // namespace tpbsim
