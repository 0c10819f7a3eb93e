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

#include "tpbsim/engine.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "tpbsim/fabric.hpp"
#include "tpbsim/funits.hpp"
#include "tpbsim/hbsm.hpp"
#include "tpbsim/sync.hpp"
#include "tpbsim/tensor.hpp"

namespace tpbsim {

namespace {

constexpr uint32_t kPortTcuAct = 0, kPortTcuWt = 1, kPortTcuOut = 2;
constexpr uint32_t kPortCvuIn0 = 3, kPortCvuIn1 = 4, kPortCvuOut = 5;
constexpr uint32_t kPortDtdu = 6, kPortCsu = 7;
constexpr uint32_t kNoAgent = ~0u;

Unit unit_of_port(uint32_t port) {
  if (port < 3) return Unit::TCU;
  if (port < 6) return Unit::CVU;
  return port == kPortDtdu ? Unit::DTDU : Unit::CSU;
}

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

// A contiguous byte run inside one memory line; `offset` locates it in the
// stream's element-ordered byte image.
struct Piece {
  uint64_t addr;
  uint32_t len;
  uint64_t offset;
};

// Splits a walk of `width`-byte elements into line pieces, merging
// neighbours that continue the previous run within the same line.
std::vector<Piece> line_pieces(const WalkerConfig& w, uint32_t width, uint32_t line) {
  std::vector<Piece> out;
  uint64_t off = 0;
  Walker walker(w);
  while (auto a = walker.next()) {
    if (*a < 0) fail(ErrorKind::OutOfRange, "walker produced negative address " + std::to_string(*a));
    auto addr = static_cast<uint64_t>(*a);
    uint32_t rem = width;
    while (rem) {
      const auto n = static_cast<uint32_t>(std::min<uint64_t>(rem, line - addr % line));
      if (!out.empty() && out.back().addr + out.back().len == addr && out.back().addr / line == addr / line)
        out.back().len += n;
      else
        out.push_back({addr, n, off});
      addr += n;
      off += n;
      rem -= n;
    }
  }
  return out;
}

uint64_t pieces_bytes(const std::vector<Piece>& p) { return p.empty() ? 0 : p.back().offset + p.back().len; }

struct PortStream {
  uint32_t port = 0;
  MemOp rw = MemOp::Read;
  std::vector<Piece> pieces;
  std::vector<uint8_t> data;
  size_t next = 0;  // next piece to submit
  size_t done = 0;  // completed pieces
  uint32_t outstanding = 0;
  uint64_t granted_bytes = 0;
  bool finished() const { return done == pieces.size(); }
};

// Happens-before shadow state of one HBSM line.
struct LineShadow {
  uint32_t writer = kNoAgent;
  uint32_t write_epoch = 0;
  std::vector<std::pair<uint32_t, uint32_t>> readers;  // agent, epoch
};

std::string unit_track(const MachineConfig& cfg, uint32_t g, Unit u) {
  return "c" + std::to_string(g / cfg.tpbs_per_cluster) + ".t" + std::to_string(g % cfg.tpbs_per_cluster) + "." +
         std::string(unit_name(u));
}

std::string op_label(const TpbInstruction& in) {
  return std::visit(
      [](const auto& op) -> std::string {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, TcuOp>) return op.kind == TcuOp::Kind::Matmul ? "matmul" : "conv2d";
        else if constexpr (std::is_same_v<T, CvuPipeline>) return "cvu";
        else if constexpr (std::is_same_v<T, DtduOp>)
          return op.kind == DtduOp::Kind::Copy ? "copy" : op.kind == DtduOp::Kind::Fill ? "fill" : "transpose";
        else return "csu" + std::to_string(op.routine);
      },
      in.op);
}

class Machine;

struct UnitRun {
  enum class Phase : uint8_t { Idle, Waiting, Reading, Computing, Writing, Landing, Service };
  uint32_t tpb = 0;  // global
  Unit unit = Unit::TCU;
  uint32_t agent = 0;
  Phase phase = Phase::Idle;
  TpbInstruction ins;
  size_t monitor = 0;  // next monitor to check
  std::vector<PortStream> streams;
  uint64_t begin = 0;
  uint64_t compute = 0;
  uint64_t compute_end = 0;
  std::vector<uint8_t> result;
  std::vector<DtduDest> landing_dests;
  std::vector<Piece> landing_pieces;
  uint32_t out_width = 1;
  uint64_t perchunk_posted = 0;
  std::optional<StreamSpec> after_service;
  bool active() const { return phase != Phase::Idle && phase != Phase::Waiting; }
};

struct DmaRun {
  std::optional<DmaDescriptor> desc;
  uint64_t stream = 0;
  uint64_t begin = 0;
  std::vector<uint8_t> data;
};

class Machine : public MemoryPort {
 public:
  Machine(const ScheduledProgram& p, const MachineConfig& cfg, const RunOptions& opt)
      : p_(p),
        cfg_(validate_config(cfg)),
        opt_(opt),
        sync_(cfg_, true),
        fabric_(cfg_),
        icb_(cfg_),
        dma_(cfg_.ccb_dma_engines) {
    sync_.set_latency([this](const Endpoint& a, const Endpoint& b) { return endpoint_latency(cfg_, a, b); });
    for (const auto& r : p.routines) routines_.add(r);
    const uint32_t n = cfg_.total_tpbs();
    for (uint32_t c = 0; c < cfg_.num_clusters; ++c) {
      queues_.emplace_back(cfg_.tpbs_per_cluster, cfg_.queue_capacity);
      cpus_.emplace_back(&routines_, cfg_.csu_interrupt_overhead);
    }
    reserved_.assign(cfg_.num_clusters, 0);
    units_.resize(static_cast<size_t>(n) * kUnitCount);
    for (uint32_t g = 0; g < n; ++g)
      for (uint32_t u = 0; u < kUnitCount; ++u) {
        auto& r = units_[g * kUnitCount + u];
        r.tpb = g;
        r.unit = static_cast<Unit>(u);
        r.agent = g * kUnitCount + u;
      }
    dma_runs_.resize(cfg_.ccb_dma_engines);
    clocks_.resize(static_cast<size_t>(n) * kUnitCount + cfg_.ccb_dma_engines);
  }

  RunResult run(const TensorMap& inputs);

  // MemoryPort, used by cluster CPU routines.
  std::vector<uint8_t> read(const AddressSpace& s, uint64_t addr, uint64_t len) override {
    check_range(s, addr, len);
    if (s.kind == SpaceKind::HBSM) return hbsm(s).read_direct(addr, len);
    auto& m = s.kind == SpaceKind::DDR ? ddr_ : sram_;
    std::vector<uint8_t> out(len, 0);
    if (addr < m.size()) std::copy_n(m.begin() + static_cast<ptrdiff_t>(addr), std::min<uint64_t>(len, m.size() - addr), out.begin());
    return out;
  }
  void write(const AddressSpace& s, uint64_t addr, std::span<const uint8_t> bytes) override {
    check_range(s, addr, bytes.size());
    if (s.kind == SpaceKind::HBSM) return hbsm(s).write_direct(addr, bytes);
    auto& m = s.kind == SpaceKind::DDR ? ddr_ : sram_;
    if (m.size() < addr + bytes.size()) m.resize(addr + bytes.size(), 0);
    std::copy(bytes.begin(), bytes.end(), m.begin() + static_cast<ptrdiff_t>(addr));
  }
  uint64_t capacity(const AddressSpace& s) const override { return space_capacity(cfg_, s); }

 private:
  void check_range(const AddressSpace& s, uint64_t addr, uint64_t len) const {
    if (!space_valid(cfg_, s)) fail(ErrorKind::UnroutableTarget, "no memory " + format_space(s));
    if (addr + len > space_capacity(cfg_, s) || addr + len < addr)
      fail(ErrorKind::OutOfRange, format_space(s) + " access [" + std::to_string(addr) + ", +" +
                                      std::to_string(len) + ") out of range");
  }
  uint32_t global(const AddressSpace& s) const { return s.cluster * cfg_.tpbs_per_cluster + s.tpb; }
  AddressSpace space_of(uint32_t g) const {
    return AddressSpace::hbsm(g / cfg_.tpbs_per_cluster, g % cfg_.tpbs_per_cluster);
  }
  BankedMemory& hbsm(const AddressSpace& s) { return hbsm_at(global(s)); }
  BankedMemory& hbsm_at(uint32_t g) {
    auto it = hbsm_.find(g);
    if (it == hbsm_.end()) {
      it = hbsm_.emplace(g, std::make_unique<BankedMemory>(BankedMemoryConfig::hbsm(cfg_))).first;
      shadow_[g].resize(cfg_.hbsm_bytes / cfg_.hbsm_bank_width);
    }
    return *it->second;
  }
  uint32_t dma_agent(uint32_t engine) const { return cfg_.total_tpbs() * kUnitCount + engine; }
  std::string agent_name(uint32_t a) const {
    if (a >= cfg_.total_tpbs() * kUnitCount) return "dma" + std::to_string(a - cfg_.total_tpbs() * kUnitCount);
    return unit_track(cfg_, a / kUnitCount, static_cast<Unit>(a % kUnitCount));
  }
  uint32_t epoch(uint32_t agent) const { return clocks_[agent].get(agent); }

  // ---- race detector ------------------------------------------------------

  void record(uint32_t g, uint64_t addr, uint64_t len, bool is_write, uint32_t agent) {
    if (len == 0) return;
    hbsm_at(g);
    auto& lines = shadow_.at(g);
    const VectorClock& clk = clocks_[agent];
    const uint32_t ep = clk.get(agent);
    const uint64_t lb = cfg_.hbsm_bank_width;
    for (uint64_t l = addr / lb; l <= (addr + len - 1) / lb; ++l) {
      LineShadow& s = lines.at(l);
      auto race = [&](const char* what, uint32_t other, uint32_t other_epoch) {
        std::ostringstream m;
        m << what << " on " << format_space(space_of(g)) << " line " << l << " (byte " << l * lb << "): "
          << agent_name(agent) << " instr " << ep << " is not ordered after " << agent_name(other) << " instr "
          << other_epoch;
        races_.push_back({now_, m.str()});
        fail(ErrorKind::RaceDetected, m.str());
      };
      if (!is_write && s.writer == kNoAgent) {
        std::ostringstream m;
        m << "read-before-produce on " << format_space(space_of(g)) << " line " << l << " (byte " << l * lb
          << "): " << agent_name(agent) << " instr " << ep << " reads memory nothing has written";
        races_.push_back({now_, m.str()});
        fail(ErrorKind::RaceDetected, m.str());
      }
      if (s.writer != kNoAgent && s.writer != agent && clk.get(s.writer) < s.write_epoch)
        race(is_write ? "write-after-write" : "read-before-produce", s.writer, s.write_epoch);
      if (is_write) {
        for (const auto& [r, e] : s.readers)
          if (r != agent && clk.get(r) < e) race("write-before-free", r, e);
        s.writer = agent;
        s.write_epoch = ep;
        s.readers.clear();
      } else {
        auto it = std::find_if(s.readers.begin(), s.readers.end(), [&](const auto& x) { return x.first == agent; });
        if (it == s.readers.end()) s.readers.push_back({agent, ep});
        else it->second = ep;
      }
    }
  }

  // ---- loading ------------------------------------------------------------

  void load(const TensorMap& inputs) {
    uint64_t end = 0;
    for (const auto& t : p_.tensors) end = std::max(end, t.ddr_addr + t.bytes());
    if (end > cfg_.ddr_bytes) fail(ErrorKind::OutOfRange, "program tensors exceed DDR");
    ddr_.assign(end, 0);
    for (const auto& t : p_.tensors) {
      if (t.role == TensorBinding::Role::Constant) {
        std::copy(t.data.begin(), t.data.end(), ddr_.begin() + static_cast<ptrdiff_t>(t.ddr_addr));
      } else if (t.role == TensorBinding::Role::Input) {
        auto it = inputs.find(t.name);
        if (it == inputs.end()) fail(ErrorKind::ShapeMismatch, "missing input '" + t.name + "'");
        if (it->second.dtype != t.dtype || it->second.shape != t.shape || it->second.bytes.size() != t.bytes())
          fail(ErrorKind::ShapeMismatch, "input '" + t.name + "' does not match " + std::string(dtype_name(t.dtype)));
        std::copy(it->second.bytes.begin(), it->second.bytes.end(), ddr_.begin() + static_cast<ptrdiff_t>(t.ddr_addr));
      }
    }
    for (uint32_t g : p_.tpbs) hbsm_at(g);
    icb_.load(p_.dispatcher, p_.instructions);
    for (const auto& d : p_.dma) dma_.enqueue(d);
    for (const auto& in : p_.instructions)
      for (uint32_t g : in.mask.members()) {
        ++remaining_instructions_;
        std::vector<CounterRef> ups;
        for (const auto& sy : in.syncs)
          if (sy.kind == SyncKind::Update)
            ups.push_back(sy.counter.resolve(g / cfg_.tpbs_per_cluster, g % cfg_.tpbs_per_cluster));
        planned_updates_[g * kUnitCount + static_cast<uint32_t>(in.unit)].push_back(std::move(ups));
      }
    for (const auto& d : p_.dma) planned_updates_[dma_agent(d.engine)].push_back(d.updates);
    remaining_dma_ = p_.dma.size();
  }

  // ---- per-cycle phases -----------------------------------------------------

  void deliver();
  void settle();
  void issue();
  void arbitrate();
  void progress();

  bool can_start() const { return !opt_.serial || in_flight() == 0; }
  size_t in_flight() const {
    size_t n = 0;
    for (const auto& u : units_) n += u.active();
    for (uint32_t e = 0; e < dma_.engines(); ++e) n += dma_.busy(e);
    return n;
  }

  bool try_monitors(UnitRun& u);
  void start_unit(UnitRun& u);
  void finish_compute(UnitRun& u);
  void complete_unit(UnitRun& u);
  void post_updates(UnitRun& u, SyncStage stage, uint64_t count);
  void start_dma(uint32_t engine);
  void land_dma(uint32_t engine);
  void land_unit(UnitRun& u);
  uint64_t run_routine(UnitRun& u, const Routine& r);

  bool done() const;
  std::optional<uint64_t> next_event() const;
  [[noreturn]] void deadlock();

  void trace(std::string track, std::string name, uint64_t begin, uint64_t end, uint64_t seq, uint64_t bytes,
             uint64_t compute = 0) {
    if (!opt_.trace) return;
    TraceEvent e;
    e.track = std::move(track);
    e.name = std::move(name);
    e.begin = begin;
    e.end = end;
    e.seq = seq;
    e.bytes = bytes;
    e.compute = compute;
    trace_.events.push_back(std::move(e));
  }

  const ScheduledProgram& p_;
  MachineConfig cfg_;
  RunOptions opt_;
  SyncNetwork sync_;
  Fabric fabric_;
  IcbChain icb_;
  DmaEngines dma_;
  RoutineRegistry routines_;
  std::vector<InstructionQueue> queues_;
  std::vector<uint32_t> reserved_;  // queue entries in flight on the chain
  std::vector<ClusterCpu> cpus_;
  std::vector<UnitRun> units_;
  std::vector<DmaRun> dma_runs_;
  std::vector<VectorClock> clocks_;
  std::map<uint32_t, std::unique_ptr<BankedMemory>> hbsm_;
  std::map<uint32_t, std::vector<LineShadow>> shadow_;
  std::map<uint64_t, uint32_t> stream_owner_;  // fabric stream -> agent
  std::vector<uint8_t> ddr_, sram_;
  std::vector<RaceEvent> races_;
  InterruptLog interrupts_;
  Trace trace_;
  uint64_t now_ = 0;
  bool changed_ = false;
  size_t remaining_instructions_ = 0;
  size_t remaining_dma_ = 0;
  // Per agent, the counters each of its work items updates, in order, and
  // how many items it has started; used to explain deadlocks.
  std::map<uint32_t, std::vector<std::vector<CounterRef>>> planned_updates_;
  std::map<uint32_t, size_t> started_;
};

// ---- (1) deliveries -----------------------------------------------------------

void Machine::deliver() {
  for (const auto& d : fabric_.deliveries(now_)) {
    const uint32_t a = stream_owner_.at(d.id);
    stream_owner_.erase(d.id);
    changed_ = true;
    if (a >= dma_agent(0)) land_dma(a - dma_agent(0));
    else land_unit(units_[a]);
  }
  const uint32_t per = cfg_.tpbs_per_cluster;
  for (auto& d : icb_.deliveries(now_)) {
    changed_ = true;
    for (uint32_t g : d.instr.mask.members()) {
      if (g / per != d.cluster) continue;
      --reserved_[d.cluster];
      if (queues_[d.cluster].enqueue(g % per, d.instr) != EnqueueResult::Ok)
        fail(ErrorKind::Internal, "instruction queue overflow in cluster " + std::to_string(d.cluster));
    }
  }
  auto work = [this](const ServiceRequest& r, const Routine& rt) { return run_routine(units_[r.ticket], rt); };
  for (auto& cpu : cpus_)
    for (const auto& s : cpu.step(now_, work)) {
      changed_ = true;
      UnitRun& u = units_[s.request.ticket];
      trace("c" + std::to_string(u.tpb / per) + ".cpu", routines_.get(s.request.routine).name, s.start, s.finish,
            u.ins.seq, 0);
      if (u.after_service && u.after_service->bytes > 0) {
        const uint64_t id = fabric_.start(*u.after_service, now_);
        stream_owner_[id] = u.agent;
        u.phase = UnitRun::Phase::Landing;
      } else {
        complete_unit(u);
      }
    }
}

// ---- (2, 3) sync settlement ---------------------------------------------------

void Machine::settle() {
  const size_t before = sync_.events().size();
  sync_.settle(now_);
  if (sync_.events().size() != before) changed_ = true;
}

// ---- (4) issue ----------------------------------------------------------------

bool Machine::try_monitors(UnitRun& u) {
  const uint32_t c = u.tpb / cfg_.tpbs_per_cluster, t = u.tpb % cfg_.tpbs_per_cluster;
  while (u.monitor < u.ins.syncs.size()) {
    const SyncAction& s = u.ins.syncs[u.monitor];
    if (s.kind != SyncKind::Monitor) {
      ++u.monitor;
      continue;
    }
    const CounterRef ref = s.counter.resolve(c, t);
    if (sync_.sc_monitor(u.agent, ref, s.expected) == MonitorResult::Blocked) return false;
    clocks_[u.agent].join(sync_.file(ref).clock_at(ref.index, s.expected));
    ++u.monitor;
  }
  return true;
}

void Machine::issue() {
  const uint32_t per = cfg_.tpbs_per_cluster;
  for (auto& u : units_) {
    if (u.phase == UnitRun::Phase::Idle) {
      auto& q = queues_[u.tpb / per];
      if (!q.peek(u.tpb % per, u.unit)) continue;
      u.ins = *q.ready_pop(u.tpb % per, u.unit);
      u.phase = UnitRun::Phase::Waiting;
      u.monitor = 0;
      ++started_[u.agent];
      --remaining_instructions_;
      icb_.wake();
      changed_ = true;
    }
    if (u.phase == UnitRun::Phase::Waiting && !sync_.pending().count(u.agent) && try_monitors(u) && can_start())
      start_unit(u);
  }
  for (uint32_t e = 0; e < dma_.engines(); ++e) {
    const DmaDescriptor* d = dma_.head(e);
    if (dma_.busy(e) || !d || !can_start()) continue;
    const bool ready = std::all_of(d->waits.begin(), d->waits.end(),
                                   [&](const DmaWait& w) { return sync_.value(w.counter) >= w.expected; });
    if (ready) start_dma(e);
  }
  auto room = [this](uint32_t c, uint32_t n) { return queues_[c].size() + reserved_[c] + n <= cfg_.queue_capacity; };
  if (auto tx = icb_.try_start(now_, room)) {
    changed_ = true;
    for (auto [c, n] : tx->entries) reserved_[c] += n;
    trace("icb", "d" + std::to_string(tx->dispatcher), tx->start, tx->end, 0, 0);
  }
}

void Machine::start_unit(UnitRun& u) {
  changed_ = true;
  u.begin = now_;
  clocks_[u.agent].tick(u.agent);
  u.streams.clear();
  u.result.clear();
  u.landing_dests.clear();
  u.perchunk_posted = 0;
  u.after_service.reset();
  const uint32_t line = cfg_.hbsm_bank_width;
  auto read = [&](uint32_t port, const WalkerConfig& w, uint32_t width) {
    PortStream s;
    s.port = port;
    s.pieces = line_pieces(w, width, line);
    s.data.assign(pieces_bytes(s.pieces), 0);
    u.streams.push_back(std::move(s));
  };
  const auto& in = u.ins.in_walkers;
  if (const auto* op = std::get_if<TcuOp>(&u.ins.op)) {
    const auto w = static_cast<uint32_t>(byte_width(op->in_dtype));
    read(kPortTcuAct, in.at(0), w);
    read(kPortTcuWt, in.at(1), w);
    u.compute = tcu_timing(*op, cfg_).total();
    u.out_width = static_cast<uint32_t>(byte_width(op->out_dtype));
  } else if (const auto* p = std::get_if<CvuPipeline>(&u.ins.op)) {
    read(kPortCvuIn0, in.at(0), static_cast<uint32_t>(byte_width(p->a_dtype)));
    if (in.size() > 1) read(kPortCvuIn1, in[1], static_cast<uint32_t>(byte_width(p->b_dtype.value_or(DType::f32))));
    u.compute = cvu_cycles(*p, cfg_);
    u.out_width = static_cast<uint32_t>(byte_width(p->out_dtype));
  } else if (const auto* d = std::get_if<DtduOp>(&u.ins.op)) {
    if (d->kind != DtduOp::Kind::Fill && !in.empty()) read(kPortDtdu, in[0], d->elem_bytes);
    u.compute = 1;
    u.out_width = d->elem_bytes;
  } else {
    const auto& op = std::get<CsuOp>(u.ins.op);
    u.phase = UnitRun::Phase::Service;
    cpus_[u.tpb / cfg_.tpbs_per_cluster].submit({op.routine, op.args, u.tpb % cfg_.tpbs_per_cluster, u.agent, now_});
    return;
  }
  u.phase = UnitRun::Phase::Reading;
}

uint64_t Machine::run_routine(UnitRun& u, const Routine& r) {
  const AddressSpace local = space_of(u.tpb);
  const auto& args = std::get<CsuOp>(u.ins.op).args;
  std::vector<AccessRecord> log;
  uint64_t work = 0;
  switch (r.behavior) {
    case RoutineBehavior::LaunchGsdu: {
      const GatherScatterPlan plan = decode_gsdu_args(args);
      gsdu_execute(plan, local, *this, &log);
      StreamSpec s;
      s.bytes = gsdu_wire_bytes(plan);
      const uint32_t here = Fabric::cluster_node(local.cluster);
      std::optional<uint32_t> far;
      if (plan.remote.kind == SpaceKind::DDR) {
        s.resources.push_back(fabric_.ddr(0));
        far = Fabric::ccb_node();
      } else if (plan.remote.kind == SpaceKind::CCB_SRAM) {
        s.resources.push_back(fabric_.sram());
        far = Fabric::sram_node();
      } else if (plan.remote.cluster != local.cluster) {
        s.resources.push_back(fabric_.cluster_noc(plan.remote.cluster));
        far = Fabric::cluster_node(plan.remote.cluster);
      }
      s.resources.push_back(fabric_.cluster_noc(local.cluster));
      if (far) {
        const auto route = fabric_.mesh_route(*far, here);
        s.resources.insert(s.resources.end(), route.links.begin(), route.links.end());
        s.latency = uint64_t{route.hops} * cfg_.mesh_hop_latency;
      }
      u.after_service = s;
      break;
    }
    case RoutineBehavior::ScalarPostprocess:
      scalar_postprocess(args, local, *this, &log);
      work = args.size() > 1 ? static_cast<uint64_t>(std::max<int64_t>(args[1], 0)) : 0;
      break;
    case RoutineBehavior::NoOp: break;
  }
  for (const auto& a : log)
    if (a.space.kind == SpaceKind::HBSM) record(global(a.space), a.addr, a.len, a.write, u.agent);
  return work;
}

void Machine::start_dma(uint32_t e) {
  changed_ = true;
  const DmaDescriptor d = *dma_.head(e);
  const uint32_t agent = dma_agent(e);
  for (const auto& w : d.waits) clocks_[agent].join(sync_.file(w.counter).clock_at(w.counter.index, w.expected));
  clocks_[agent].tick(agent);
  ++started_[agent];
  --remaining_dma_;
  DmaRun& r = dma_runs_[e];
  r.desc = d;
  r.begin = now_;
  r.data = read(d.src_space, d.src_addr, d.bytes);
  if (d.src_space.kind == SpaceKind::HBSM) record(global(d.src_space), d.src_addr, d.bytes, false, agent);
  r.stream = fabric_.start(dma_stream(d, fabric_, cfg_), now_);
  dma_.start(e, r.stream);
  stream_owner_[r.stream] = agent;
}

void Machine::land_dma(uint32_t e) {
  DmaRun& r = dma_runs_[e];
  const DmaDescriptor d = dma_.finish(e);
  const uint32_t agent = dma_agent(e);
  for (const auto& t : d.dsts) {
    write(t.space, t.addr, r.data);
    if (t.space.kind == SpaceKind::HBSM) record(global(t.space), t.addr, d.bytes, true, agent);
  }
  if (!d.updates.empty()) sync_.multicast_update(d.updates, Endpoint::of_ccb(), now_, agent, &clocks_[agent]);
  trace("dma" + std::to_string(e), d.broadcast ? "broadcast" : "copy", r.begin, now_, started_[agent] - 1, d.bytes);
  r = {};
}

// ---- (5) HBSM arbitration -------------------------------------------------------

void Machine::arbitrate() {
  const uint32_t cap = std::max<uint32_t>(cfg_.unit_outstanding_beats, 1);
  for (auto& [g, mem] : hbsm_) {
    for (uint32_t k = 0; k < kUnitCount; ++k) {
      UnitRun& u = units_[g * kUnitCount + k];
      if (u.phase != UnitRun::Phase::Reading && u.phase != UnitRun::Phase::Writing) continue;
      for (size_t si = 0; si < u.streams.size(); ++si) {
        PortStream& s = u.streams[si];
        while (s.next < s.pieces.size() && s.outstanding < cap) {
          const Piece& pc = s.pieces[s.next];
          MemRequest req;
          req.requester = s.port;
          req.addr = pc.addr;
          req.len = pc.len;
          req.rw = s.rw;
          if (s.rw == MemOp::Write)
            req.payload.assign(s.data.begin() + static_cast<ptrdiff_t>(pc.offset),
                               s.data.begin() + static_cast<ptrdiff_t>(pc.offset + pc.len));
          req.tag = (uint64_t{si} << 40) | s.next;
          mem->submit(std::move(req));
          ++s.next;
          ++s.outstanding;
          changed_ = true;
        }
      }
    }
    if (mem->idle()) continue;
    changed_ = true;
    const MemCycleResult res = mem->cycle(now_);
    for (const auto& gr : res.grants) {
      UnitRun& u = units_[g * kUnitCount + static_cast<uint32_t>(unit_of_port(gr.requester))];
      record(g, gr.addr, gr.len, gr.rw == MemOp::Write, u.agent);
      if (gr.rw == MemOp::Write) {
        PortStream& s = u.streams.at(gr.tag >> 40);
        s.granted_bytes += gr.len;
        for (const auto& sy : u.ins.syncs)
          if (sy.kind == SyncKind::Update && sy.stage == SyncStage::PerChunk && sy.chunk_elems) {
            const uint64_t due = s.granted_bytes / u.out_width / sy.chunk_elems;
            if (due > u.perchunk_posted) post_updates(u, SyncStage::PerChunk, due - u.perchunk_posted);
            u.perchunk_posted = due;
            break;
          }
      }
    }
    for (const auto& c : res.completions) {
      UnitRun& u = units_[g * kUnitCount + static_cast<uint32_t>(unit_of_port(c.requester))];
      PortStream& s = u.streams.at(c.tag >> 40);
      const Piece& pc = s.pieces.at(c.tag & ((uint64_t{1} << 40) - 1));
      if (c.rw == MemOp::Read) std::copy(c.data.begin(), c.data.end(), s.data.begin() + static_cast<ptrdiff_t>(pc.offset));
      ++s.done;
      --s.outstanding;
    }
  }
}

// ---- (6) unit progress ----------------------------------------------------------

void Machine::finish_compute(UnitRun& u) {
  auto stream = [&](size_t i) -> std::span<const uint8_t> {
    return i < u.streams.size() ? std::span<const uint8_t>(u.streams[i].data) : std::span<const uint8_t>();
  };
  if (const auto* op = std::get_if<TcuOp>(&u.ins.op)) {
    u.result = tcu_execute(*op, stream(0), stream(1));
  } else if (const auto* p = std::get_if<CvuPipeline>(&u.ins.op)) {
    u.result = cvu_execute(*p, stream(0), stream(1), cfg_.nonfinite_fault);
  } else {
    const auto& d = std::get<DtduOp>(u.ins.op);
    u.result = dtdu_transform(d, stream(0), u.ins.out_walker ? walker_total(*u.ins.out_walker) : 0);
    u.landing_dests = d.dests;
  }
  if (!u.ins.out_walker) fail(ErrorKind::MalformedRequest, "instruction has no output walker");
  u.landing_pieces = line_pieces(*u.ins.out_walker, u.out_width, cfg_.hbsm_bank_width);
  if (pieces_bytes(u.landing_pieces) != u.result.size())
    fail(ErrorKind::MalformedRequest, "output walker covers " + std::to_string(pieces_bytes(u.landing_pieces)) +
                                          " bytes but the unit produced " + std::to_string(u.result.size()));
  u.compute_end = now_ + u.compute;
  u.phase = UnitRun::Phase::Computing;
}

void Machine::progress() {
  const uint32_t per = cfg_.tpbs_per_cluster;
  for (auto& u : units_) {
    if (u.phase == UnitRun::Phase::Reading &&
        std::all_of(u.streams.begin(), u.streams.end(), [](const PortStream& s) { return s.finished(); })) {
      finish_compute(u);
      changed_ = true;
    }
    if (u.phase == UnitRun::Phase::Computing && now_ >= u.compute_end) {
      changed_ = true;
      if (!u.landing_dests.empty()) {
        StreamSpec s;
        s.bytes = u.result.size();
        const uint32_t c = u.tpb / per;
        std::set<uint32_t> res{fabric_.cluster_noc(c)};
        for (const auto& d : u.landing_dests) {
          res.insert(fabric_.cluster_noc(d.cluster));
          if (d.cluster != c)
            for (uint32_t l : fabric_.mesh_route(Fabric::cluster_node(c), Fabric::cluster_node(d.cluster)).links)
              res.insert(l);
          s.latency = std::max(s.latency, endpoint_latency(cfg_, Endpoint::of_tpb(c, u.tpb % per),
                                                           Endpoint::of_tpb(d.cluster, d.tpb)));
        }
        s.resources.assign(res.begin(), res.end());
        stream_owner_[fabric_.start(s, now_)] = u.agent;
        u.phase = UnitRun::Phase::Landing;
      } else {
        PortStream w;
        w.port = u.unit == Unit::TCU ? kPortTcuOut : u.unit == Unit::CVU ? kPortCvuOut : kPortDtdu;
        w.rw = MemOp::Write;
        w.pieces = std::move(u.landing_pieces);
        w.data = std::move(u.result);
        u.streams.clear();
        u.streams.push_back(std::move(w));
        u.phase = UnitRun::Phase::Writing;
      }
    }
    if (u.phase == UnitRun::Phase::Writing && u.streams[0].finished()) complete_unit(u);
  }
  fabric_.step(now_);
}

void Machine::land_unit(UnitRun& u) {
  if (u.unit == Unit::DTDU) {
    for (const auto& d : u.landing_dests) {
      const uint32_t g = d.cluster * cfg_.tpbs_per_cluster + d.tpb;
      for (const auto& pc : u.landing_pieces) {
        const std::span<const uint8_t> bytes(u.result.data() + pc.offset, pc.len);
        write(space_of(g), d.base + pc.addr, bytes);
        record(g, d.base + pc.addr, pc.len, true, u.agent);
      }
    }
  }
  complete_unit(u);
}

void Machine::post_updates(UnitRun& u, SyncStage stage, uint64_t count) {
  const uint32_t c = u.tpb / cfg_.tpbs_per_cluster, t = u.tpb % cfg_.tpbs_per_cluster;
  std::vector<CounterRef> targets;
  for (const auto& s : u.ins.syncs)
    if (s.kind == SyncKind::Update && s.stage == stage) targets.push_back(s.counter.resolve(c, t));
  if (targets.empty()) return;
  for (uint64_t i = 0; i < count; ++i)
    sync_.multicast_update(targets, Endpoint::of_tpb(c, t), now_, u.agent, &clocks_[u.agent]);
}

void Machine::complete_unit(UnitRun& u) {
  changed_ = true;
  for (const auto& s : u.ins.syncs)
    if (s.kind == SyncKind::Update && s.stage == SyncStage::PerChunk && s.chunk_elems) {
      const uint64_t elems = u.ins.out_walker ? walker_total(*u.ins.out_walker) : 0;
      const uint64_t total = ceil_div(elems, s.chunk_elems);
      if (total > u.perchunk_posted) post_updates(u, SyncStage::PerChunk, total - u.perchunk_posted);
      break;
    }
  post_updates(u, SyncStage::AfterComplete, 1);
  uint64_t bytes = 0;
  for (const auto& s : u.streams) bytes += s.data.size();
  trace(unit_track(cfg_, u.tpb, u.unit), op_label(u.ins), u.begin, now_ + 1, u.ins.seq, bytes, u.compute);
  u.phase = UnitRun::Phase::Idle;
  u.streams.clear();
  u.result.clear();
}

// ---- termination ------------------------------------------------------------------

bool Machine::done() const {
  if (!p_.done.empty())
    return std::all_of(p_.done.begin(), p_.done.end(),
                       [&](const DmaWait& w) { return sync_.value(w.counter) >= w.expected; });
  if (remaining_instructions_ || remaining_dma_ || !icb_.idle() || !fabric_.idle() || sync_.has_posted()) return false;
  for (const auto& u : units_)
    if (u.phase != UnitRun::Phase::Idle) return false;
  for (const auto& c : cpus_)
    if (!c.idle()) return false;
  for (const auto& [g, m] : hbsm_)
    if (!m->idle()) return false;
  return true;
}

std::optional<uint64_t> Machine::next_event() const {
  if (changed_) return now_ + 1;
  std::optional<uint64_t> t;
  auto consider = [&](std::optional<uint64_t> v) {
    if (v) t = t ? std::min(*t, *v) : *v;
  };
  consider(fabric_.next_event(now_));
  consider(sync_.next_delivery());
  consider(icb_.next_event());
  for (const auto& c : cpus_) consider(c.next_event());
  for (const auto& u : units_)
    if (u.phase == UnitRun::Phase::Computing) consider(u.compute_end);
  for (const auto& [g, m] : hbsm_)
    if (!m->idle()) consider(now_ + 1);
  if (t) t = std::max(*t, now_ + 1);
  return t;
}

void Machine::deadlock() {
  std::vector<std::string> details;
  std::map<uint32_t, std::vector<std::pair<CounterRef, uint64_t>>> waits;
  for (const auto& u : units_) {
    auto it = sync_.pending().find(u.agent);
    if (u.phase == UnitRun::Phase::Waiting && it != sync_.pending().end())
      waits[u.agent].push_back({it->second.counter, it->second.expected});
  }
  for (uint32_t e = 0; e < dma_.engines(); ++e) {
    const DmaDescriptor* d = dma_.head(e);
    if (dma_.busy(e) || !d) continue;
    for (const auto& w : d->waits)
      if (sync_.value(w.counter) < w.expected) waits[dma_agent(e)].push_back({w.counter, w.expected});
  }
  // Which agents still hold a pending update of each counter.
  auto holders = [&](const CounterRef& ref, uint32_t waiter) {
    std::vector<uint32_t> out;
    for (const auto& [agent, items] : planned_updates_) {
      const size_t from = started_.count(agent) ? started_.at(agent) : 0;
      // A waiting agent's current item has started but not yet updated.
      const size_t first = (waits.count(agent) && from > 0) ? from - 1 : from;
      for (size_t i = first; i < items.size(); ++i)
        if (std::find(items[i].begin(), items[i].end(), ref) != items[i].end()) {
          if (agent != waiter) out.push_back(agent);
          break;
        }
    }
    return out;
  };
  std::map<uint32_t, std::vector<uint32_t>> edges;
  for (const auto& [agent, ws] : waits)
    for (const auto& [ref, expected] : ws) {
      const auto hs = holders(ref, agent);
      std::string line = agent_name(agent) + " waits " + format_counter(ref) + ">=" + std::to_string(expected) +
                         " (value " + std::to_string(sync_.value(ref)) + ")";
      if (hs.empty()) line += "; no pending work updates it";
      else {
        line += "; held by";
        for (uint32_t h : hs) line += " " + agent_name(h);
      }
      details.push_back(line);
      for (uint32_t h : hs) edges[agent].push_back(h);
    }
  if (icb_.stalled()) details.push_back("instruction chain stalled on a full cluster queue");
  // Depth-first search for a wait-for cycle among blocked agents.
  std::vector<uint32_t> cycle;
  std::map<uint32_t, int> color;
  std::vector<uint32_t> stack;
  std::function<bool(uint32_t)> dfs = [&](uint32_t a) {
    color[a] = 1;
    stack.push_back(a);
    for (uint32_t b : edges[a]) {
      if (color[b] == 1) {
        cycle.assign(std::find(stack.begin(), stack.end(), b), stack.end());
        cycle.push_back(b);
        return true;
      }
      if (color[b] == 0 && waits.count(b) && dfs(b)) return true;
    }
    stack.pop_back();
    color[a] = 2;
    return false;
  };
  for (const auto& [a, ws] : waits)
    if (color[a] == 0 && dfs(a)) break;
  std::string msg = "no progress possible at cycle " + std::to_string(now_);
  if (!cycle.empty()) {
    msg += "; wait-for cycle:";
    for (size_t i = 0; i < cycle.size(); ++i) msg += (i ? " -> " : " ") + agent_name(cycle[i]);
  }
  throw Error(ErrorKind::DeadlockDetected, msg, details);
}

RunResult Machine::run(const TensorMap& inputs) {
  validate_program(p_, cfg_);
  load(inputs);
  RunResult res;
  const uint64_t watchdog = opt_.watchdog.value_or(cfg_.watchdog_cycles);
  try {
    for (;;) {
      changed_ = false;
      deliver();
      settle();
      if (done()) break;
      issue();
      arbitrate();
      progress();
      const auto next = next_event();
      if (!next) deadlock();
      if (*next > watchdog)
        fail(ErrorKind::DeadlockDetected, "watchdog: no end of task within " + std::to_string(watchdog) + " cycles");
      now_ = *next;
    }
    interrupts_.raise({now_, 0, InterruptCode::TaskComplete, "end of task"});
    for (const auto& t : p_.tensors) {
      if (t.role != TensorBinding::Role::Output) continue;
      Tensor out{t.dtype, t.shape, {}};
      out.bytes.assign(ddr_.begin() + static_cast<ptrdiff_t>(t.ddr_addr),
                       ddr_.begin() + static_cast<ptrdiff_t>(t.ddr_addr + t.bytes()));
      res.outputs[t.name] = std::move(out);
    }
  } catch (const Error& e) {
    res.fault = Fault{e.kind(), e.what(), e.details(), now_};
    interrupts_.raise({now_, 0, InterruptCode::Fault, e.what()});
  }
  res.makespan = now_;
  if (opt_.trace) {
    for (const auto& ev : sync_.events()) {
      const char* kind = ev.kind == SyncEvent::Kind::Update ? "update"
                         : ev.kind == SyncEvent::Kind::MonitorSatisfied ? "release"
                                                                         : "barrier";
      trace_.sync.push_back({ev.cycle, format_counter(ev.counter), ev.value, kind});
    }
  }
  TraceSummary& s = trace_.summary;
  s.makespan = now_;
  for (const auto& e : trace_.events) s.busy[e.track] += e.end - e.begin;
  for (auto k : {ResourceKind::Ddr, ResourceKind::Sram, ResourceKind::Drb, ResourceKind::MeshLink,
                 ResourceKind::ClusterNoc})
    s.fabric_bytes[std::string(resource_kind_name(k))] = fabric_.bytes_moved(k);
  s.icb_bits = icb_.bits_sent();
  s.peak_ddr_bytes = fabric_.peak_ddr_bytes();
  for (const auto& [g, m] : hbsm_) s.hbsm_bytes += m->granted_bytes();
  res.trace = std::move(trace_);
  res.races = races_;
  res.interrupts = interrupts_.entries();
  uint64_t h = fnv1a("", 0);
  for (const auto& [name, t] : res.outputs) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.bytes.data(), t.bytes.size(), h);
  }
  res.output_hash = h;
  return res;
}

}  // namespace

const RunResult& RunResult::check() const {
  if (fault) throw Error(fault->kind, fault->message, fault->details);
  return *this;
}

RunResult run(const ScheduledProgram& p, const MachineConfig& cfg, const TensorMap& inputs, const RunOptions& opt) {
  Machine m(p, cfg, opt);
  return m.run(inputs);
}

// ---- trace output ---------------------------------------------------------------------

namespace {
bool is_unit_track(const std::string& t) {
  return t.size() > 2 && t[0] == 'c' && t.find(".t") != std::string::npos;
}
}  // namespace

std::string trace_json(const Trace& t) {
  using nlohmann::json;
  std::set<std::string> names;
  for (const auto& e : t.events) names.insert(e.track);
  std::map<std::string, int> tid;
  for (const auto& n : names) tid[n] = static_cast<int>(tid.size()) + 1;
  json events = json::array();
  for (const auto& [n, id] : tid)
    events.push_back({{"name", "thread_name"}, {"ph", "M"}, {"pid", 0}, {"tid", id}, {"args", {{"name", n}}}});
  for (const auto& e : t.events) {
    json args = {{"seq", e.seq}, {"bytes", e.bytes}};
    if (e.compute) args["compute"] = e.compute;
    events.push_back({{"name", e.name},
                      {"ph", "X"},
                      {"ts", e.begin},
                      {"dur", e.end - e.begin},
                      {"pid", 0},
                      {"tid", tid.at(e.track)},
                      {"args", args}});
  }
  for (const auto& s : t.sync)
    events.push_back({{"name", s.counter},
                      {"ph", "i"},
                      {"s", "p"},
                      {"ts", s.cycle},
                      {"pid", 1},
                      {"tid", 0},
                      {"args", {{"kind", s.kind}, {"value", s.value}}}});
  json busy = json::object();
  for (const auto& [track, cycles] : t.summary.busy)
    busy[track] = t.summary.makespan ? static_cast<double>(cycles) / static_cast<double>(t.summary.makespan) : 0.0;
  json summary = {{"makespan", t.summary.makespan},
                  {"busy_fraction", busy},
                  {"fabric_bytes", t.summary.fabric_bytes},
                  {"icb_bits", t.summary.icb_bits},
                  {"hbsm_bytes", t.summary.hbsm_bytes},
                  {"peak_ddr_bytes_per_cycle", t.summary.peak_ddr_bytes}};
  json doc = {{"traceEvents", events}, {"displayTimeUnit", "ns"}, {"summary", summary}};
  return doc.dump(1) + "\n";
}

void save_trace(const std::string& path, const Trace& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write trace '" + path + "'");
  out << trace_json(t);
  if (!out) fail(ErrorKind::IoError, "failed writing trace '" + path + "'");
}

uint64_t trace_hash(const Trace& t) {
  const std::string s = trace_json(t);
  return fnv1a(s.data(), s.size());
}

double concurrency_fraction(const Trace& t, uint32_t k) {
  if (t.summary.makespan == 0) return 0;
  std::vector<std::pair<uint64_t, int>> edges;
  for (const auto& e : t.events)
    if (is_unit_track(e.track) && e.end > e.begin) {
      edges.push_back({e.begin, +1});
      edges.push_back({e.end, -1});
    }
  std::sort(edges.begin(), edges.end());
  uint64_t covered = 0, last = 0;
  int level = 0;
  for (const auto& [at, d] : edges) {
    if (level >= static_cast<int>(k)) covered += at - last;
    level += d;
    last = at;
  }
  return static_cast<double>(covered) / static_cast<double>(t.summary.makespan);
}

}  // namespace tpbsim
