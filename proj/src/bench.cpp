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

#include "tpbsim/bench.hpp"

#include <algorithm>
#include <deque>
#include <iomanip>
#include <sstream>

#include "tpbsim/compiler.hpp"
#include "tpbsim/engine.hpp"
#include "tpbsim/error.hpp"
#include "tpbsim/fabric.hpp"
#include "tpbsim/funits.hpp"
#include "tpbsim/hbsm.hpp"
#include "tpbsim/oracle.hpp"
#include "tpbsim/tensor.hpp"

namespace tpbsim {

namespace {

constexpr const char* kPipelineGraph = R"(# 4-op pipeline: matmul, softmax, matmul, layernorm
input x f16[256,64]
const w1 f16[64,64] init=uniform lo=-0.5 hi=0.5 seed=1
const w2 f16[64,64] init=uniform lo=-0.5 hi=0.5 seed=2
a = matmul(x, w1) out=f16
b = softmax(a) out=f16
c = matmul(b, w2) out=f16
d = layernorm(c)
output d
chunks 16
)";

constexpr const char* kMatmulGraph = R"(
input x i8[32,32]
const w i8[32,64] init=uniform lo=-3 hi=3 seed=7
y = matmul(x, w)
output y
)";

bool outputs_match(const Graph& g, const TensorMap& got, const TensorMap& want) {
  for (const auto& [name, t] : want) {
    const auto it = got.find(name);
    if (it == got.end() || relative_error(it->second, t) > output_tolerance(g, name)) return false;
  }
  return true;
}

uint64_t mix(uint64_t h, uint64_t v) { return fnv1a(&v, sizeof v, h); }

MemRequest read_req(uint32_t port, uint64_t addr) {
  MemRequest r;
  r.requester = port;
  r.addr = addr;
  r.len = 32;
  return r;
}

}  // namespace

Graph pipeline_graph() { return parse_graph(kPipelineGraph); }

TcuBench bench_tcu_matmul(const MachineConfig& cfg) {
  const Graph g = parse_graph(kMatmulGraph);
  CompileOptions o;
  o.tpbs = 1;
  const ScheduledProgram p = compile(g, cfg, o);
  const TensorMap in = random_inputs(g, 1);
  const RunResult r = run(p, cfg, in);
  r.check();

  TcuBench b;
  for (const auto& i : p.instructions)
    if (const auto* op = std::get_if<TcuOp>(&i.op)) b.mac_cycles = tcu_timing(*op, cfg).mac_cycles;
  for (const auto& e : r.trace.events)
    if (e.track.ends_with(".TCU")) b.instruction_cycles = e.compute;
  b.makespan = r.makespan;
  b.outputs_match = outputs_match(g, r.outputs, oracle_run(g, in));
  b.trace_hash = trace_hash(r.trace);
  return b;
}

HbsmBench bench_hbsm(const MachineConfig& cfg, uint64_t cycles) {
  const BankedMemoryConfig mc = BankedMemoryConfig::hbsm(cfg);
  const uint64_t line = mc.line_bytes;
  const uint32_t banks_per_port = std::max<uint32_t>(1, mc.banks / mc.ports);
  HbsmBench b;
  b.cycles = cycles;
  b.stream_min_cycle = UINT64_MAX;

  // Port p cycles through its own disjoint group of banks.
  BankedMemory stream(mc);
  std::vector<uint64_t> next(mc.ports, 0);
  auto top_up = [&](BankedMemory& m, auto addr_of) {
    for (uint32_t p = 0; p < mc.ports; ++p)
      while (m.queued(p) < 4) m.submit(read_req(p, addr_of(p, next[p]++)));
  };
  auto disjoint = [&](uint32_t p, uint64_t k) { return (p * banks_per_port + k % banks_per_port) * line; };
  for (uint64_t c = 0; c < cycles; ++c) {
    top_up(stream, disjoint);
    const auto r = stream.cycle(c);
    uint64_t bytes = 0;
    for (const auto& gr : r.grants) bytes += gr.len;
    b.stream_bytes += bytes;
    b.stream_min_cycle = std::min(b.stream_min_cycle, bytes);
    b.stream_max_cycle = std::max(b.stream_max_cycle, bytes);
  }

  // Every port hammers bank 0.
  BankedMemory hot(mc);
  std::fill(next.begin(), next.end(), 0);
  const uint64_t stride = line * mc.banks;
  auto same_bank = [&](uint32_t p, uint64_t k) { return ((p * 64 + k) * stride) % mc.bytes; };
  std::vector<uint32_t> order;
  for (uint64_t c = 0; c < cycles; ++c) {
    top_up(hot, same_bank);
    for (const auto& gr : hot.cycle(c).grants) order.push_back(gr.requester);
  }
  b.contention_grants = order.size();
  for (size_t w = 0; w + mc.ports <= order.size(); ++w) {
    std::vector<uint64_t> n(mc.ports, 0);
    for (size_t i = w; i < w + mc.ports; ++i) ++n[order[i]];
    const auto [lo, hi] = std::minmax_element(n.begin(), n.end());
    b.window_spread = std::max(b.window_spread, *hi - *lo);
  }
  return b;
}

DmaBench bench_dma(const MachineConfig& cfg, uint64_t bytes) {
  DmaBench b;
  b.broadcast_bytes = bytes;
  auto program = [&](std::vector<DmaDescriptor> dma) {
    ScheduledProgram p;
    p.tpbs = {0};
    TensorBinding src;
    src.name = "src";
    src.dtype = DType::u8;
    src.shape = {static_cast<int64_t>(bytes)};
    p.tensors.push_back(src);
    p.counters.push_back({"done", CounterRef::ccb(0)});
    for (auto& d : dma) d.updates.push_back(CounterRef::ccb(0));
    p.done = {{CounterRef::ccb(0), dma.size()}};
    p.dma = std::move(dma);
    return p;
  };
  const TensorMap in{{"src", random_tensor(DType::u8, {static_cast<int64_t>(bytes)}, 3)}};
  auto dma_span = [](const RunResult& r) {
    uint64_t lo = UINT64_MAX, hi = 0;
    for (const auto& e : r.trace.events)
      if (e.track.starts_with("dma")) lo = std::min(lo, e.begin), hi = std::max(hi, e.end);
    return hi > lo ? hi - lo : 0;
  };

  DmaDescriptor bc;
  bc.src_space = AddressSpace::ddr();
  for (uint32_t c = 0; c < cfg.num_clusters; ++c) bc.dsts.push_back({AddressSpace::hbsm(c, 0), 0});
  bc.broadcast = true;
  bc.bytes = bytes;
  const RunResult rb = run(program({bc}), cfg, in);
  rb.check();
  b.broadcast_cycles = dma_span(rb);

  std::vector<DmaDescriptor> dual;
  for (uint32_t e = 0; e < std::min<uint32_t>(2, cfg.ccb_dma_engines); ++e) {
    DmaDescriptor d;
    d.engine = e;
    d.src_space = AddressSpace::ddr();
    d.dsts.push_back({AddressSpace::sram(), e * bytes});
    d.bytes = bytes;
    dual.push_back(d);
  }
  const RunResult rd = run(program(dual), cfg, in);
  rd.check();
  b.dual_cycles = dma_span(rd);
  b.dual_peak_ddr = rd.trace.summary.peak_ddr_bytes;
  b.trace_hash = mix(trace_hash(rb.trace), trace_hash(rd.trace));
  return b;
}

PipelineBench bench_pipeline(const MachineConfig& cfg, const Graph& g, uint32_t tpbs,
                             int64_t chunks, uint64_t seed) {
  const TensorMap in = random_inputs(g, seed);
  CompileOptions o;
  o.tpbs = tpbs;
  o.chunks = chunks;
  const ScheduledProgram par = compile(g, cfg, o);
  o.tpbs = 1;
  const ScheduledProgram one = compile(g, cfg, o);
  const RunResult r = run(par, cfg, in);
  RunOptions so;
  so.serial = true;
  const RunResult s = run(one, cfg, in, so);

  PipelineBench b;
  b.ok = r.ok() && s.ok();
  b.makespan = r.makespan;
  b.serial_makespan = s.makespan;
  b.estimate = estimate_latency(par, cfg);
  b.ratio = s.makespan ? static_cast<double>(r.makespan) / static_cast<double>(s.makespan) : 0;
  b.concurrency = concurrency_fraction(r.trace, 2);
  const TensorMap want = oracle_run(g, in);
  for (const auto& [name, t] : want) {
    const auto it = r.outputs.find(name);
    b.error = std::max(b.error, it == r.outputs.end() ? 1.0 : relative_error(it->second, t));
    b.tolerance = std::max(b.tolerance, output_tolerance(g, name));
  }
  b.trace_hash = mix(trace_hash(r.trace), trace_hash(s.trace));
  return b;
}

std::vector<std::string> bench_suites() { return {"micro", "pipeline", "all"}; }

BenchTable run_bench(const std::string& suite, const MachineConfig& cfg) {
  const auto suites = bench_suites();
  if (std::find(suites.begin(), suites.end(), suite) == suites.end())
    fail(ErrorKind::ParseError, "unknown bench suite '" + suite + "'");
  BenchTable t;
  t.suite = suite;
  t.trace_hash = 1469598103934665603ull;
  auto note = [](auto... parts) {
    std::ostringstream s;
    s << std::setprecision(4);
    (s << ... << parts);
    return s.str();
  };

  if (suite != "pipeline") {
    const TcuBench tcu = bench_tcu_matmul(cfg);
    t.rows.push_back({"tcu_matmul_i8_32x32x64.mac", tcu.mac_cycles, "MAC phase"});
    t.rows.push_back({"tcu_matmul_i8_32x32x64.instr", tcu.instruction_cycles,
                      note("fill ", cfg.tcu_fill, " + mac + drain ", cfg.tcu_drain)});
    t.rows.push_back({"tcu_matmul_i8_32x32x64.run", tcu.makespan,
                      tcu.outputs_match ? "end to end, matches oracle" : "end to end, MISMATCH"});
    t.trace_hash = mix(t.trace_hash, tcu.trace_hash);

    const HbsmBench h = bench_hbsm(cfg, 10000);
    t.rows.push_back({"hbsm_stream_8port", h.cycles,
                      note(h.stream_bytes / h.cycles, " B/cycle, per-cycle min ", h.stream_min_cycle, " max ",
                           h.stream_max_cycle)});
    t.rows.push_back({"hbsm_one_bank_contention", h.cycles,
                      note(h.contention_grants, " grants, 8-grant window spread ", h.window_spread)});

    const DmaBench d = bench_dma(cfg, MiB);
    t.rows.push_back({"drb_broadcast_1MiB", d.broadcast_cycles, note(cfg.num_clusters, " clusters")});
    t.rows.push_back({"ddr_dual_engine_2x1MiB", d.dual_cycles, note("peak ", d.dual_peak_ddr, " B/cycle")});
    t.trace_hash = mix(t.trace_hash, d.trace_hash);
  }
  if (suite != "micro") {
    const PipelineBench p = bench_pipeline(cfg, pipeline_graph(), 4, 16, 3);
    t.rows.push_back({"pipeline_4op_4tpb_16chunk", p.makespan,
                      note("ratio ", p.ratio, ", >=2 busy ", p.concurrency, ", err ", p.error)});
    t.rows.push_back({"pipeline_4op_serial_1tpb", p.serial_makespan, "serialized baseline"});
    t.rows.push_back({"pipeline_4op_estimate", p.estimate, "lower-bound model"});
    t.trace_hash = mix(t.trace_hash, p.trace_hash);
  }
  return t;
}

std::string format_bench(const BenchTable& t) {
  size_t w = 4;
  for (const auto& r : t.rows) w = std::max(w, r.name.size());
  std::ostringstream s;
  s << "suite " << t.suite << "\n";
  s << std::left << std::setw(static_cast<int>(w)) << "name" << "  " << std::right << std::setw(10) << "cycles"
    << "  note\n";
  for (const auto& r : t.rows)
    s << std::left << std::setw(static_cast<int>(w)) << r.name << "  " << std::right << std::setw(10) << r.cycles
      << "  " << r.note << "\n";
  s << "trace_hash " << std::hex << std::setw(16) << std::setfill('0') << t.trace_hash << "\n";
  return s.str();
}

}  // namespace tpbsim
