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

#include "tpbsim/program.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "tpbsim/error.hpp"
#include "text.hpp"

namespace tpbsim {

namespace {

using text::parse_fail;

std::string_view role_name(TensorBinding::Role r) {
  switch (r) {
    case TensorBinding::Role::Input: return "input";
    case TensorBinding::Role::Output: return "output";
    case TensorBinding::Role::Constant: return "const";
  }
  return "?";
}

TensorBinding::Role parse_role(const std::string& s) {
  if (s == "input") return TensorBinding::Role::Input;
  if (s == "output") return TensorBinding::Role::Output;
  if (s == "const") return TensorBinding::Role::Constant;
  parse_fail("unknown tensor role '" + s + "'");
}

std::string shape_text(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

std::map<std::string, std::string> fields(const std::vector<std::string>& tok, size_t from) {
  std::map<std::string, std::string> kv;
  for (size_t i = from; i < tok.size(); ++i) {
    const auto eq = tok[i].find('=');
    if (eq == std::string::npos) parse_fail("expected key=value, got '" + tok[i] + "'");
    kv[tok[i].substr(0, eq)] = tok[i].substr(eq + 1);
  }
  return kv;
}

const std::string& field(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) parse_fail("missing field '" + key + "'");
  return it->second;
}

DmaWait parse_wait(const std::string& s) {
  const auto ge = s.find(">=");
  if (ge == std::string::npos) parse_fail("bad wait '" + s + "'");
  return {parse_counter(s.substr(0, ge)), text::to_u64(s.substr(ge + 2))};
}

[[noreturn]] void invalid(const std::string& what) { fail(ErrorKind::BadDescriptor, "program: " + what); }

}  // namespace

uint64_t TensorBinding::bytes() const {
  uint64_t n = byte_width(dtype);
  for (int64_t d : shape) n *= static_cast<uint64_t>(d);
  return n;
}

const TensorBinding* ScheduledProgram::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::string format_program(const ScheduledProgram& p) {
  std::ostringstream o;
  o << "program v1\n";
  o << "chunks " << p.chunks << "\n";
  o << "dispatcher " << p.dispatcher << "\n";
  o << "tpbs";
  for (uint32_t t : p.tpbs) o << " " << t;
  o << "\n";
  for (const auto& t : p.tensors) {
    o << "tensor " << role_name(t.role) << " " << t.name << " " << dtype_name(t.dtype) << shape_text(t.shape)
      << " ddr=" << t.ddr_addr;
    if (t.role == TensorBinding::Role::Constant) o << " data=" << text::to_hex(t.data);
    o << "\n";
  }
  for (const auto& r : p.routines)
    o << "routine " << r.id << " " << r.name << " behavior=" << routine_behavior_name(r.behavior) << " cost=" << r.cost
      << "\n";
  for (const auto& b : p.buffers)
    o << "buffer " << b.name << " tensor=" << b.tensor << " tpb=" << b.tpb << " base=" << b.base
      << " slot=" << b.slot_bytes << " slots=" << b.slots << "\n";
  for (const auto& c : p.counters) o << "counter " << c.name << " " << format_counter(c.ref) << "\n";
  for (const auto& d : p.dma) o << format_descriptor(d) << "\n";
  for (const auto& w : p.done) o << "done " << format_counter(w.counter) << ">=" << w.expected << "\n";
  for (const auto& i : p.instructions) o << format_instruction(i) << "\n";
  return o.str();
}

ScheduledProgram parse_program(const std::string& text_in) {
  ScheduledProgram p;
  p.tpbs.clear();
  std::istringstream in(text_in);
  std::string line;
  int line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = text::words(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    try {
      const std::string& kw = tok[0];
      if (!header) {
        if (kw != "program" || tok.size() != 2 || tok[1] != "v1") parse_fail("expected 'program v1'");
        header = true;
      } else if (kw == "chunks" && tok.size() == 2) {
        p.chunks = text::to_int(tok[1]);
      } else if (kw == "dispatcher" && tok.size() == 2) {
        p.dispatcher = static_cast<uint32_t>(text::to_u64(tok[1]));
      } else if (kw == "tpbs") {
        for (size_t i = 1; i < tok.size(); ++i) p.tpbs.push_back(static_cast<uint32_t>(text::to_u64(tok[i])));
      } else if (kw == "tensor" && tok.size() >= 5) {
        TensorBinding t;
        t.role = parse_role(tok[1]);
        t.name = tok[2];
        const auto open = tok[3].find('[');
        if (open == std::string::npos) parse_fail("expected dtype[shape]");
        t.dtype = text::to_dtype(tok[3].substr(0, open));
        t.shape = text::to_int_list(tok[3].substr(open));
        const auto kv = fields(tok, 4);
        t.ddr_addr = text::to_u64(field(kv, "ddr"));
        if (t.role == TensorBinding::Role::Constant) t.data = text::from_hex(field(kv, "data"));
        p.tensors.push_back(std::move(t));
      } else if (kw == "routine" && tok.size() >= 3) {
        Routine r;
        r.id = static_cast<uint32_t>(text::to_u64(tok[1]));
        r.name = tok[2];
        const auto kv = fields(tok, 3);
        const auto b = parse_routine_behavior(field(kv, "behavior"));
        if (!b) parse_fail("unknown routine behavior");
        r.behavior = *b;
        r.cost = text::to_u64(field(kv, "cost"));
        p.routines.push_back(r);
      } else if (kw == "buffer" && tok.size() >= 2) {
        BufferRegion b;
        b.name = tok[1];
        const auto kv = fields(tok, 2);
        b.tensor = field(kv, "tensor");
        b.tpb = static_cast<uint32_t>(text::to_u64(field(kv, "tpb")));
        b.base = text::to_u64(field(kv, "base"));
        b.slot_bytes = text::to_u64(field(kv, "slot"));
        b.slots = static_cast<uint32_t>(text::to_u64(field(kv, "slots")));
        p.buffers.push_back(b);
      } else if (kw == "counter" && tok.size() == 3) {
        p.counters.push_back({tok[1], parse_counter(tok[2])});
      } else if (kw == "dma") {
        p.dma.push_back(parse_descriptor(line));
      } else if (kw == "done" && tok.size() == 2) {
        p.done.push_back(parse_wait(tok[1]));
      } else if (kw == "instr") {
        p.instructions.push_back(parse_instruction(line));
      } else {
        parse_fail("unrecognized record '" + kw + "'");
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ParseError) throw;
      fail(ErrorKind::ParseError, "program line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) parse_fail("empty program");
  return p;
}

void save_program(const std::string& path, const ScheduledProgram& p) {
  std::ofstream f(path);
  f << format_program(p);
  if (!f) fail(ErrorKind::IoError, "cannot write program " + path);
}

ScheduledProgram load_program(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::IoError, "cannot open program " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_program(ss.str());
}

void validate_program(const ScheduledProgram& p, const MachineConfig& cfg) {
  if (p.chunks < 1) invalid("chunk count must be positive");
  if (p.dispatcher >= cfg.dispatcher_contexts) invalid("dispatcher context out of range");
  for (uint32_t t : p.tpbs)
    if (t >= cfg.total_tpbs()) invalid("TPB " + std::to_string(t) + " outside the machine");

  std::vector<std::pair<uint64_t, uint64_t>> ddr;
  for (const auto& t : p.tensors) {
    if (t.role == TensorBinding::Role::Constant && t.data.size() != t.bytes())
      invalid("constant " + t.name + " data size does not match its shape");
    if (t.ddr_addr + t.bytes() > cfg.ddr_bytes) invalid("tensor " + t.name + " outside DDR");
    ddr.emplace_back(t.ddr_addr, t.ddr_addr + t.bytes());
  }
  std::sort(ddr.begin(), ddr.end());
  for (size_t i = 1; i < ddr.size(); ++i)
    if (ddr[i].first < ddr[i - 1].second) invalid("tensors overlap in DDR");

  std::map<uint32_t, std::vector<std::pair<uint64_t, uint64_t>>> regions;
  for (const auto& b : p.buffers) {
    const uint64_t end = b.base + b.slot_bytes * b.slots;
    if (b.tpb >= cfg.total_tpbs() || end > cfg.hbsm_bytes) invalid("buffer " + b.name + " does not fit its HBSM");
    regions[b.tpb].emplace_back(b.base, end);
  }
  for (auto& [tpb, r] : regions) {
    std::sort(r.begin(), r.end());
    for (size_t i = 1; i < r.size(); ++i)
      if (r[i].first < r[i - 1].second) invalid("buffers overlap on TPB " + std::to_string(tpb));
  }

  for (const auto& d : p.dma) validate_descriptor(d, cfg);
  std::map<std::pair<uint32_t, Unit>, uint64_t> next_seq;
  for (const auto& i : p.instructions) {
    validate_instruction(i, cfg);
    for (uint32_t g : i.mask.members()) {
      uint64_t& want = next_seq[{g, i.unit}];
      if (i.seq != want) invalid("sequence gap on TPB " + std::to_string(g) + " " + std::string(unit_name(i.unit)));
      ++want;
    }
    if (i.unit == Unit::CSU) {
      const auto& op = std::get<CsuOp>(i.op);
      if (std::none_of(p.routines.begin(), p.routines.end(), [&](const Routine& r) { return r.id == op.routine; }))
        fail(ErrorKind::UnknownRoutine, "routine " + std::to_string(op.routine) + " is not registered");
    }
  }
}

}  // namespace tpbsim
