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

// Acceptance run: one line per criterion, nonzero exit if any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "random_graph.hpp"
#include "tpbsim/bench.hpp"
#include "tpbsim/compiler.hpp"
#include "tpbsim/engine.hpp"
#include "tpbsim/oracle.hpp"
#include "tpbsim/tensor.hpp"
#include "tpbsim/walker.hpp"

namespace tpbsim {
namespace {

const MachineConfig kCfg;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string str(auto... parts) {
  std::ostringstream s;
  s << std::boolalpha;
  (s << ... << parts);
  return s.str();
}

// ---- 1. TCU --------------------------------------------------------------

Verdict tcu_cycles() {
  const TcuBench b = bench_tcu_matmul(kCfg);
  // 8x64 MACs, 4-element dot products: K=32 fits one pass, N=64 one column
  // block, one cycle per output row.
  const uint64_t want_mac = ((32 + 8 * 4 - 1) / (8 * 4)) * 32 * ((64 + 63) / 64);
  const uint64_t bound = want_mac + kCfg.tcu_fill + kCfg.tcu_drain;
  return {b.mac_cycles == 32 && want_mac == 32 && b.instruction_cycles <= bound && bound <= 48 &&
              b.outputs_match,
          str("mac ", b.mac_cycles, ", instruction ", b.instruction_cycles, " (bound ", bound,
              "), oracle match ", b.outputs_match)};
}

// ---- 2. HBSM -------------------------------------------------------------

Verdict hbsm_bandwidth() {
  const uint64_t cycles = 10000;
  const HbsmBench b = bench_hbsm(kCfg, cycles);
  const uint64_t want = 8 * 32;
  return {b.stream_bytes == want * cycles && b.stream_min_cycle == want && b.stream_max_cycle == want &&
              b.contention_grants == cycles && b.window_spread <= 1,
          str(b.stream_bytes / cycles, " B/cycle (min ", b.stream_min_cycle, ", max ", b.stream_max_cycle,
              "), one-bank window spread ", b.window_spread)};
}

// ---- 3. Walker -----------------------------------------------------------

void nested(const WalkerConfig& cfg, size_t level, int64_t sum, std::vector<int64_t>& out) {
  if (level == cfg.levels.size()) {
    out.push_back(sum);
    return;
  }
  const LoopLevel& l = cfg.levels[level];
  for (int64_t v = l.initial;; v += l.step) {
    nested(cfg, level + 1, sum + v, out);
    if (v == l.final) break;
  }
}

std::vector<int64_t> nested_loops(const WalkerConfig& cfg) {
  std::vector<int64_t> out;
  nested(cfg, 0, 0, out);
  return out;
}

Verdict walker_equivalence() {
  std::mt19937_64 rng(7);
  int bad = 0, negative = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    WalkerConfig cfg;
    const size_t levels = 1 + rng() % 5;
    for (size_t i = 0; i < levels; ++i) {
      LoopLevel l;
      l.initial = static_cast<int64_t>(rng() % 4096) - 2048;
      l.step = static_cast<int64_t>(rng() % 256) + 1;
      if (rng() % 2) l.step = -l.step;
      negative += l.step < 0;
      l.final = l.initial + l.step * static_cast<int64_t>(rng() % 6);
      cfg.levels.push_back(l);
    }
    bad += walk_all(cfg) != nested_loops(cfg);
  }
  // Three-level tile walk: 2 row blocks of 4 rows, 8 columns, 64-byte pitch.
  const WalkerConfig tile{{{0, 256, 256}, {0, 64, 192}, {0, 1, 7}}};
  std::vector<int64_t> tile_want;
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t r = 0; r < 4; ++r)
      for (int64_t c = 0; c < 8; ++c) tile_want.push_back(b * 256 + r * 64 + c);
  const bool tile_ok = walk_all(tile) == tile_want;
  // Double buffer: two 4 KiB slots, two elements each.
  const bool ping_ok = walk_all({{{0, 4096, 4096}, {0, 1, 1}}}) == std::vector<int64_t>{0, 1, 4096, 4097};
  return {bad == 0 && tile_ok && ping_ok && negative > 0,
          str("1000 random configs, ", bad, " mismatches; 3-level tile ", tile_ok ? "ok" : "FAIL", "; ping-pong ",
              ping_ok ? "ok" : "FAIL")};
}

// ---- 4. Sync safety and liveness -----------------------------------------

// A chain of `stages` ops over rows split into `chunks`, one op per TPB.
std::string pipeline_text(std::mt19937_64& rng, int stages, int64_t chunks) {
  const bool integer = rng() % 3 == 0;
  const std::string t = integer ? "i8" : "f16";
  const int64_t rows = chunks * (4 << (rng() % 3)), cols = 16 << (rng() % 3);
  std::ostringstream s;
  s << "input x0 " << t << "[" << rows << "," << cols << "]\n";
  for (int i = 0; i < stages; ++i) {
    const std::string a = "x" + std::to_string(i), b = "x" + std::to_string(i + 1);
    switch (rng() % (integer ? 3 : 5)) {
      case 0:
        s << "const w" << i << " " << t << "[" << cols << "," << cols << "] init=uniform lo=-2 hi=2 seed=" << rng() % 1000
          << "\n";
        s << b << " = matmul(" << a << ", w" << i << ") out=" << t << "\n";
        break;
      case 1: s << b << " = relu(" << a << ")\n"; break;
      case 2:
        s << "const c" << i << " " << t << "[" << cols << "] init=uniform lo=-3 hi=3 seed=" << rng() % 1000 << "\n";
        s << b << " = add(" << a << ", c" << i << ")\n";
        break;
      case 3: s << b << " = softmax(" << a << ") out=f16\n"; break;
      default: s << b << " = layernorm(" << a << ") out=f16\n"; break;
    }
  }
  s << "output x" << stages << "\n";
  return s.str();
}

bool matches_oracle(const Graph& g, const RunResult& r, const TensorMap& in) {
  for (const auto& [name, want] : oracle_run(g, in)) {
    const auto it = r.outputs.find(name);
    if (it == r.outputs.end() || relative_error(it->second, want) > output_tolerance(g, name)) return false;
  }
  return true;
}

Verdict dropped_monitor_fixture() {
  CompileOptions o;
  o.tpbs = 4;
  o.chunks = 4;
  const Graph g = pipeline_graph();
  ScheduledProgram p = compile(g, kCfg, o);
  for (auto& in : p.instructions) {
    if (in.mask.members() != std::vector<uint32_t>{1} || in.unit != Unit::CVU || in.seq != 0) continue;
    std::erase_if(in.syncs, [](const SyncAction& s) { return s.kind == SyncKind::Monitor; });
    in = finalize(in);
  }
  const RunResult r = run(p, kCfg, random_inputs(g, 1));
  return {!r.ok() && r.fault->kind == ErrorKind::RaceDetected, "dropped monitor"};
}

Verdict circular_wait_fixture() {
  auto fill_at = [](uint32_t tpb, CounterRef wait, CounterRef signal) {
    TpbInstruction in;
    in.mask = TpbMask::single(tpb);
    DtduOp op;
    op.kind = DtduOp::Kind::Fill;
    op.fill_pattern = {1};
    in.op = op;
    in.out_walker = strided_walk(0, {64}, {1});
    in.syncs = {SyncAction::monitor(wait, 1), SyncAction::update(signal)};
    return finalize(in);
  };
  ScheduledProgram p;
  p.tpbs = {0, 1};
  p.instructions = {fill_at(0, CounterRef::local(0), CounterRef::at(0, 1, 0)),
                    fill_at(1, CounterRef::local(0), CounterRef::at(0, 0, 0))};
  const RunResult r = run(p, kCfg, {});
  return {!r.ok() && r.fault->kind == ErrorKind::DeadlockDetected &&
              r.fault->message.find("wait-for cycle") != std::string::npos,
          "circular wait"};
}

Verdict sync_safety() {
  std::mt19937_64 rng(11);
  int completed = 0, races = 0, deadlocks = 0, other = 0, mismatches = 0, shallow = 0;
  std::map<size_t, int> by_stages;
  for (int trial = 0; trial < 200; ++trial) {
    const int stages = 1 + static_cast<int>(rng() % 4);
    const int64_t chunks = int64_t{2} << (rng() % 3);
    const Graph g = parse_graph(pipeline_text(rng, stages, chunks));
    CompileOptions o;
    o.tpbs = static_cast<uint32_t>(stages);
    o.chunks = chunks;
    o.passes.clear();
    const ScheduledProgram p = compile(g, kCfg, o);
    std::set<uint32_t> used;
    for (const auto& in : p.instructions)
      for (uint32_t t : in.mask.members()) used.insert(t);
    ++by_stages[used.size()];
    bool depth2 = false;
    for (const auto& b : p.buffers) depth2 = depth2 || b.slots == 2;
    shallow += !depth2;

    const TensorMap in = random_inputs(g, static_cast<uint64_t>(trial));
    const RunResult r = run(p, kCfg, in);
    races += static_cast<int>(r.races.size());
    if (!r.ok()) {
      (r.fault->kind == ErrorKind::DeadlockDetected ? deadlocks : other) += 1;
      continue;
    }
    ++completed;
    mismatches += !matches_oracle(g, r, in);
  }
  const Verdict a = dropped_monitor_fixture(), b = circular_wait_fixture();
  std::string dist;
  for (const auto& [s, n] : by_stages) dist += str(" ", s, "-TPB:", n);
  return {completed == 200 && races == 0 && deadlocks == 0 && other == 0 && mismatches == 0 && shallow == 0 &&
              a.pass && b.pass,
          str(completed, "/200 completed, ", races, " races, ", deadlocks, " deadlocks, ", mismatches,
              " mismatches, ", shallow, " without depth-2 buffers;", dist, "; fixtures: dropped monitor ",
              a.pass ? "caught" : "MISSED", ", circular wait ", b.pass ? "caught" : "MISSED")};
}

// ---- 5. Functional equivalence -------------------------------------------

Verdict functional_equivalence() {
  int bad = 0, ints = 0, f32s = 0, f16s = 0, faults = 0;
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    const Graph g = parse_graph(testing::random_graph(5000 + seed));
    const TensorMap in = random_inputs(g, seed);
    const RunResult r = run(compile(g, kCfg), kCfg, in);
    if (!r.ok()) {
      ++faults;
      continue;
    }
    for (const auto& [name, want] : oracle_run(g, in)) {
      const double tol = output_tolerance(g, name);
      (tol == 0 ? ints : tol == 1e-5 ? f32s : f16s) += 1;
      const auto it = r.outputs.find(name);
      bad += it == r.outputs.end() || relative_error(it->second, want) > tol;
    }
  }
  return {bad == 0 && faults == 0,
          str("100 graphs, all passes; outputs: ", ints, " integer (exact), ", f32s, " f32 (1e-5), ", f16s,
              " f16 (1e-3); ", bad, " mismatches, ", faults, " faults")};
}

// ---- 6. Pipeline overlap -------------------------------------------------

Verdict pipeline_overlap() {
  const Graph g = load_graph(std::string(TPBSIM_GRAPHS) + "/pipeline4.graph");
  const PipelineBench b = bench_pipeline(kCfg, g, 4, 16, 3);
  return {b.ok && b.ratio <= 0.6 && b.concurrency >= 0.5 && b.error <= b.tolerance && b.estimate <= b.makespan,
          str("makespan ", b.makespan, " vs serial ", b.serial_makespan, " (ratio ", b.ratio, " <= 0.6), >=2 units busy ",
              b.concurrency, " of makespan (>= 0.5), error ", b.error)};
}

// ---- 7. Determinism ------------------------------------------------------

std::pair<int, std::string> capture(const std::string& cmd) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, out};
  std::array<char, 4096> buf{};
  size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

Verdict determinism() {
  const BenchTable a = run_bench("micro", kCfg), b = run_bench("micro", kCfg);
  const bool lib = a.trace_hash == b.trace_hash && format_bench(a) == format_bench(b);
  const std::string cmd = std::string(TPBSIM_CLI) + " bench micro";
  const auto x = capture(cmd), y = capture(cmd);
  const bool cli = x.first == 0 && y.first == 0 && x.second == y.second && x.second == format_bench(a);
  return {lib && cli, str("bench micro twice: library ", lib ? "identical" : "DIFFERENT", ", CLI ",
                          cli ? "identical" : "DIFFERENT", ", trace hash ", std::hex, a.trace_hash)};
}

// ---- 8. DMA / DRB --------------------------------------------------------

Verdict dma_rates() {
  const uint64_t bytes = uint64_t{1} << 20;
  const DmaBench b = bench_dma(kCfg, bytes);
  const uint64_t want = (bytes + 255) / 256;
  return {b.broadcast_cycles == want && b.dual_peak_ddr <= 273,
          str("1 MiB broadcast ", b.broadcast_cycles, " cycles (want ", want, "), dual-engine DDR peak ",
              b.dual_peak_ddr, " B/cycle (<= 273)")};
}

}  // namespace
}  // namespace tpbsim

int main() {
  using namespace tpbsim;
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria = {
      {"1 TCU 32-cycle matmul", 1, tcu_cycles},
      {"2 HBSM bandwidth and fairness", 1, hbsm_bandwidth},
      {"3 walker oracle equivalence", 10, walker_equivalence},
      {"4 sync safety and liveness", 60, sync_safety},
      {"5 functional equivalence", 300, functional_equivalence},
      {"6 pipeline overlap", 30, pipeline_overlap},
      {"7 determinism", 60, determinism},
      {"8 DMA/DRB rates", 10, dma_rates},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = v.pass && s < c.budget_s;
    failed += !pass;
    std::printf("%s  %-32s %s [%.2fs, limit %.0fs]\n", pass ? "PASS" : "FAIL", c.name, v.detail.c_str(), s,
                c.budget_s);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
