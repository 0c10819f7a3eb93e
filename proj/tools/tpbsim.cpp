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

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "tpbsim/bench.hpp"
#include "tpbsim/compiler.hpp"
#include "tpbsim/engine.hpp"
#include "tpbsim/error.hpp"
#include "tpbsim/oracle.hpp"
#include "tpbsim/passes.hpp"
#include "tpbsim/program.hpp"
#include "tpbsim/tensor.hpp"

namespace tpbsim {
namespace {

enum Exit : int { kOk = 0, kUsage = 2, kCompile = 3, kFault = 4, kMismatch = 5 };

// Thrown for anything the user can fix on the command line: missing or
// unreadable files, bad config, inputs that do not match the program.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CompileFlags {
  std::string config;
  std::string passes = "default";
  uint32_t tpbs = 4;
  uint32_t first_tpb = 0;
  int64_t chunks = 0;
};

void add_compile_flags(CLI::App* app, CompileFlags& f) {
  app->add_option("--config", f.config, "machine config file (defaults built in)");
  app->add_option("--passes", f.passes,
                  "comma-separated passes (algebraic,layout,fusion,dce), 'default' or 'none'");
  app->add_option("--tpbs", f.tpbs, "TPB budget");
  app->add_option("--first-tpb", f.first_tpb, "global index of the first TPB");
  app->add_option("--chunks", f.chunks, "chunk count (0 picks the smallest that fits)");
}

template <class F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

MachineConfig load_cfg(const std::string& path) {
  if (path.empty()) return MachineConfig{};
  return as_usage([&] { return validate_config(load_config(path)); });
}

Graph read_graph(const std::string& path) {
  if (!std::filesystem::exists(path)) throw UsageError("no such graph file: " + path);
  return load_graph(path);  // parse errors are compile errors
}

CompileOptions options(const CompileFlags& f) {
  CompileOptions o;
  o.tpbs = f.tpbs;
  o.first_tpb = f.first_tpb;
  o.chunks = f.chunks;
  if (f.passes == "none")
    o.passes.clear();
  else if (f.passes != "default")
    o.passes = as_usage([&] { return parse_pass_list(f.passes); });
  return o;
}

TensorMap load_inputs(const ScheduledProgram& p, const std::string& dir) {
  TensorMap in;
  for (const auto& t : p.tensors) {
    if (t.role != TensorBinding::Role::Input) continue;
    in[t.name] = as_usage([&] { return load_tensor(dir, t.name); });
  }
  return in;
}

void print_fault(const Fault& f) {
  std::cerr << "fault at cycle " << f.cycle << ": " << to_string(f.kind) << ": " << f.message << "\n";
  for (const auto& d : f.details) std::cerr << "  " << d << "\n";
}

RunResult run_checked(const ScheduledProgram& p, const MachineConfig& cfg, const TensorMap& in,
                      const RunOptions& o) {
  try {
    return run(p, cfg, in, o);
  } catch (const Error& e) {
    // Rejected before the first cycle: the inputs do not fit the program.
    if (e.kind() == ErrorKind::ShapeMismatch) throw UsageError(e.what());
    throw;
  }
}

int do_compile(const std::string& graph, const std::string& out, const CompileFlags& f) {
  const MachineConfig cfg = load_cfg(f.config);
  const CompileOptions o = options(f);
  ScheduledProgram p;
  try {
    p = compile(read_graph(graph), cfg, o);
  } catch (const Error& e) {
    std::cerr << "compile error: " << e.what() << "\n";
    return kCompile;
  }
  as_usage([&] { save_program(out, p); return 0; });
  std::cout << "compiled " << graph << ": " << p.instructions.size() << " instructions, " << p.dma.size()
            << " DMA descriptors, " << p.chunks << " chunks on " << p.tpbs.size() << " TPBs, estimate "
            << estimate_latency(p, cfg) << " cycles\n";
  return kOk;
}

int do_run(const std::string& program, const std::string& config, const std::string& inputs,
           const std::string& trace, const std::string& outputs, bool serial, std::optional<uint64_t> watchdog) {
  const MachineConfig cfg = load_cfg(config);
  if (!std::filesystem::exists(program)) throw UsageError("no such program file: " + program);
  const ScheduledProgram p = as_usage([&] { return load_program(program); });
  const TensorMap in = load_inputs(p, inputs);
  RunOptions o;
  o.serial = serial;
  o.watchdog = watchdog;
  const RunResult r = run_checked(p, cfg, in, o);
  if (!trace.empty()) as_usage([&] { save_trace(trace, r.trace); return 0; });
  if (!r.ok()) {
    print_fault(*r.fault);
    return kFault;
  }
  if (!outputs.empty())
    for (const auto& [name, t] : r.outputs) as_usage([&] { save_tensor(outputs, name, t); return 0; });
  std::cout << "makespan " << r.makespan << " cycles, output hash " << std::hex << r.output_hash << std::dec << "\n";
  return kOk;
}

int do_check(const std::string& graph, const std::string& inputs, uint64_t seed, const std::string& trace,
             const CompileFlags& f) {
  const MachineConfig cfg = load_cfg(f.config);
  Graph g;
  ScheduledProgram p;
  try {
    g = read_graph(graph);
    p = compile(g, cfg, options(f));
  } catch (const Error& e) {
    std::cerr << "compile error: " << e.what() << "\n";
    return kCompile;
  }
  TensorMap in;
  if (inputs.empty())
    in = random_inputs(g, seed);
  else
    for (const auto& n : g.nodes)
      if (n.kind == OpKind::Input) in[n.name] = as_usage([&] { return load_tensor(inputs, n.name); });
  const RunResult r = run_checked(p, cfg, in, {});
  if (!trace.empty()) as_usage([&] { save_trace(trace, r.trace); return 0; });
  if (!r.ok()) {
    print_fault(*r.fault);
    return kFault;
  }
  const TensorMap want = oracle_run(g, in);
  bool same = true;
  for (const auto& [name, t] : want) {
    const auto it = r.outputs.find(name);
    const double err = it == r.outputs.end() ? 1.0 : relative_error(it->second, t);
    const double tol = output_tolerance(g, name);
    const bool ok = err <= tol;
    same = same && ok;
    std::cout << name << ": relative error " << err << " (tolerance " << tol << ") " << (ok ? "ok" : "MISMATCH")
              << "\n";
  }
  std::cout << "makespan " << r.makespan << " cycles\n";
  return same ? kOk : kMismatch;
}

int do_bench(const std::string& suite, const std::string& config) {
  const MachineConfig cfg = load_cfg(config);
  BenchTable t;
  try {
    t = run_bench(suite, cfg);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) throw UsageError(e.what());
    std::cerr << e.what() << "\n";
    return kFault;
  }
  std::cout << format_bench(t);
  return kOk;
}

int do_inputs(const std::string& graph, const std::string& dir, uint64_t seed) {
  Graph g;
  try {
    g = read_graph(graph);
  } catch (const Error& e) {
    std::cerr << "compile error: " << e.what() << "\n";
    return kCompile;
  }
  as_usage([&] {
    std::filesystem::create_directories(dir);
    for (const auto& [name, t] : random_inputs(g, seed)) save_tensor(dir, name, t);
    return 0;
  });
  return kOk;
}

int cli(int argc, char** argv) {
  CLI::App app{"Cycle-level simulator and graph compiler for a TPB-based NPU"};
  app.require_subcommand(1);

  std::string graph, program, out, config, inputs, trace, outputs, suite;
  uint64_t seed = 1;
  bool serial = false;
  std::optional<uint64_t> watchdog;
  CompileFlags cf;

  auto* compile_cmd = app.add_subcommand("compile", "compile a graph into a scheduled program");
  compile_cmd->add_option("graph", graph, "graph file")->required();
  compile_cmd->add_option("-o,--output", out, "program file to write")->required();
  add_compile_flags(compile_cmd, cf);

  auto* run_cmd = app.add_subcommand("run", "simulate a scheduled program");
  run_cmd->add_option("program", program, "program file")->required();
  run_cmd->add_option("--config", config, "machine config file (defaults built in)");
  run_cmd->add_option("--inputs", inputs, "directory of input tensors")->required();
  run_cmd->add_option("--trace", trace, "trace JSON to write");
  run_cmd->add_option("--outputs", outputs, "directory to write output tensors");
  run_cmd->add_flag("--serial", serial, "one instruction or DMA in flight at a time");
  run_cmd->add_option("--watchdog", watchdog, "cycle cap");

  auto* check_cmd = app.add_subcommand("check", "compile, simulate and compare against the reference");
  check_cmd->add_option("graph", graph, "graph file")->required();
  check_cmd->add_option("--inputs", inputs, "directory of input tensors (random when omitted)");
  check_cmd->add_option("--seed", seed, "seed for random inputs");
  check_cmd->add_option("--trace", trace, "trace JSON to write");
  add_compile_flags(check_cmd, cf);

  auto* bench_cmd = app.add_subcommand("bench", "run a benchmark suite and print its cycle table");
  bench_cmd->add_option("suite", suite, "micro, pipeline or all")->required();
  bench_cmd->add_option("--config", config, "machine config file (defaults built in)");

  auto* inputs_cmd = app.add_subcommand("inputs", "write random input tensors for a graph");
  inputs_cmd->add_option("graph", graph, "graph file")->required();
  inputs_cmd->add_option("-o,--output", out, "directory to write")->required();
  inputs_cmd->add_option("--seed", seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*compile_cmd) return do_compile(graph, out, cf);
    if (*run_cmd) return do_run(program, config, inputs, trace, outputs, serial, watchdog);
    if (*check_cmd) return do_check(graph, inputs, seed, trace, cf);
    if (*bench_cmd) return do_bench(suite, config);
    if (*inputs_cmd) return do_inputs(graph, out, seed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kFault;
  }
  return kUsage;
}

}  // namespace
}  // namespace tpbsim

int main(int argc, char** argv) { return tpbsim::cli(argc, argv); }
