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

#include "tpbsim/sync.hpp"

#include <algorithm>
#include <limits>

#include "tpbsim/error.hpp"

namespace tpbsim {

CounterRef CounterRef::resolve(uint32_t c, uint32_t t) const {
  if (scope != Scope::Local) return *this;
  return at(c, t, index);
}

std::string format_counter(const CounterRef& ref) {
  switch (ref.scope) {
    case CounterRef::Scope::Local: return "L" + std::to_string(ref.index);
    case CounterRef::Scope::Tpb:
      return std::to_string(ref.cluster) + "." + std::to_string(ref.tpb) + "." +
             std::to_string(ref.index);
    case CounterRef::Scope::Ccb: return "ccb." + std::to_string(ref.index);
  }
  return "?";
}

CounterRef parse_counter(const std::string& text) {
  auto number = [&](const std::string& s) -> uint32_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      fail(ErrorKind::ParseError, "bad counter '" + text + "'");
    return static_cast<uint32_t>(std::stoul(s));
  };
  if (!text.empty() && text[0] == 'L') return CounterRef::local(number(text.substr(1)));
  if (text.rfind("ccb.", 0) == 0) return CounterRef::ccb(number(text.substr(4)));
  const auto a = text.find('.');
  const auto b = a == std::string::npos ? a : text.find('.', a + 1);
  if (b == std::string::npos) fail(ErrorKind::ParseError, "bad counter '" + text + "'");
  return CounterRef::at(number(text.substr(0, a)), number(text.substr(a + 1, b - a - 1)),
                        number(text.substr(b + 1)));
}

Endpoint endpoint_of(const CounterRef& ref) {
  if (ref.scope == CounterRef::Scope::Ccb) return Endpoint::of_ccb();
  return Endpoint::of_tpb(ref.cluster, ref.tpb);
}

void VectorClock::set(uint32_t agent, uint32_t value) {
  if (agent >= v_.size()) v_.resize(agent + 1, 0);
  v_[agent] = value;
}

void VectorClock::join(const VectorClock& other) {
  if (other.v_.size() > v_.size()) v_.resize(other.v_.size(), 0);
  for (size_t i = 0; i < other.v_.size(); ++i) v_[i] = std::max(v_[i], other.v_[i]);
}

SyncCounterFile::SyncCounterFile(uint32_t size, bool track_clocks)
    : values_(size, 0), track_(track_clocks), history_(track_clocks ? size : 0) {}

uint64_t SyncCounterFile::value(uint32_t index) const {
  if (index >= values_.size()) fail(ErrorKind::IndexOutOfRange, "counter index out of range");
  return values_[index];
}

void SyncCounterFile::preset(uint32_t index, uint64_t value) {
  if (index >= values_.size()) fail(ErrorKind::IndexOutOfRange, "counter index out of range");
  values_[index] = value;
  if (track_) history_[index].assign(std::min<uint64_t>(value, 1), VectorClock{});
}

uint64_t SyncCounterFile::update(uint32_t index, const VectorClock* clock) {
  if (index >= values_.size())
    fail(ErrorKind::IndexOutOfRange, "counter index " + std::to_string(index) + " out of range");
  if (values_[index] == std::numeric_limits<uint64_t>::max())
    fail(ErrorKind::OverflowFault, "counter " + std::to_string(index) + " overflow");
  ++values_[index];
  if (track_) {
    auto& h = history_[index];
    VectorClock next = h.empty() ? VectorClock{} : h.back();
    if (clock) next.join(*clock);
    h.push_back(std::move(next));
  }
  return values_[index];
}

VectorClock SyncCounterFile::clock_at(uint32_t index, uint64_t value) const {
  if (!track_ || value == 0 || index >= history_.size()) return {};
  const auto& h = history_[index];
  if (h.empty()) return {};
  return h[std::min<uint64_t>(value, h.size()) - 1];
}

SyncNetwork::SyncNetwork(const MachineConfig& cfg, bool track_clocks)
    : cfg_(cfg), track_(track_clocks), ccb_file_(cfg.sync_counters, track_clocks) {
  tpb_files_.reserve(cfg.total_tpbs());
  for (uint32_t i = 0; i < cfg.total_tpbs(); ++i) tpb_files_.emplace_back(cfg.sync_counters, track_clocks);
  latency_ = [](const Endpoint&, const Endpoint&) { return uint64_t{0}; };
}

void SyncNetwork::check_ref(const CounterRef& ref) const {
  switch (ref.scope) {
    case CounterRef::Scope::Local:
      fail(ErrorKind::Internal, "unresolved local counter reference");
    case CounterRef::Scope::Tpb:
      if (ref.cluster >= cfg_.num_clusters || ref.tpb >= cfg_.tpbs_per_cluster)
        fail(ErrorKind::UnroutableTarget, "no TPB for counter " + format_counter(ref));
      break;
    case CounterRef::Scope::Ccb: break;
  }
  if (ref.index >= cfg_.sync_counters)
    fail(ErrorKind::IndexOutOfRange, "counter " + format_counter(ref) + " out of range");
}

SyncCounterFile& SyncNetwork::file(const CounterRef& ref) {
  check_ref(ref);
  if (ref.scope == CounterRef::Scope::Ccb) return ccb_file_;
  return tpb_files_[ref.cluster * cfg_.tpbs_per_cluster + ref.tpb];
}

const SyncCounterFile& SyncNetwork::file(const CounterRef& ref) const {
  check_ref(ref);
  if (ref.scope == CounterRef::Scope::Ccb) return ccb_file_;
  return tpb_files_[ref.cluster * cfg_.tpbs_per_cluster + ref.tpb];
}

uint64_t SyncNetwork::value(const CounterRef& ref) const { return file(ref).value(ref.index); }

void SyncNetwork::log(SyncEvent ev) {
  if (log_events_) events_.push_back(ev);
}

uint64_t SyncNetwork::sc_update(const CounterRef& ref, uint64_t cycle, const VectorClock* clock) {
  const uint64_t v = file(ref).update(ref.index, clock);
  log({SyncEvent::Kind::Update, cycle, ref, v});
  return v;
}

MonitorResult SyncNetwork::sc_monitor(uint32_t waiter, const CounterRef& ref, uint64_t expected) {
  if (value(ref) >= expected) return MonitorResult::Proceed;
  pending_[waiter] = {ref, expected};
  return MonitorResult::Blocked;
}

void SyncNetwork::cancel(uint32_t waiter) { pending_.erase(waiter); }

void SyncNetwork::post_update(const CounterRef& ref, uint64_t deliver_cycle, uint64_t order_key,
                              const VectorClock* clock) {
  check_ref(ref);
  Posted p{deliver_cycle, order_key, post_seq_++, ref, std::nullopt};
  if (clock && track_) p.clock = *clock;
  posted_.insert(std::upper_bound(posted_.begin(), posted_.end(), p), std::move(p));
}

void SyncNetwork::multicast_update(const std::vector<CounterRef>& targets, const Endpoint& from,
                                   uint64_t cycle, uint64_t order_key, const VectorClock* clock) {
  for (const auto& t : targets) check_ref(t);
  for (const auto& t : targets)
    post_update(t, cycle + latency_(from, endpoint_of(t)), order_key, clock);
}

uint32_t SyncNetwork::add_barrier(BarrierSpec spec) {
  if (spec.group_size == 0) fail(ErrorKind::BadDescriptor, "barrier group must be nonempty");
  check_ref(CounterRef::ccb(spec.ccb_counter));
  for (const auto& t : spec.release_targets) check_ref(t);
  barriers_.push_back({std::move(spec), 0});
  return static_cast<uint32_t>(barriers_.size() - 1);
}

std::optional<uint64_t> SyncNetwork::next_delivery() const {
  if (posted_.empty()) return std::nullopt;
  return posted_.front().cycle;
}

std::vector<uint32_t> SyncNetwork::settle(uint64_t cycle) {
  // Barrier releases may post zero-latency updates, so iterate to a fixed point.
  bool progress = true;
  while (progress) {
    progress = false;
    while (!posted_.empty() && posted_.front().cycle <= cycle) {
      Posted p = std::move(posted_.front());
      posted_.erase(posted_.begin());
      sc_update(p.ref, cycle, p.clock ? &*p.clock : nullptr);
      progress = true;
    }
    for (uint32_t b = 0; b < barriers_.size(); ++b) {
      auto& bar = barriers_[b];
      const CounterRef ref = CounterRef::ccb(bar.spec.ccb_counter);
      const uint64_t need = (bar.generation + 1) * bar.spec.group_size;
      if (value(ref) < need) continue;
      ++bar.generation;
      log({SyncEvent::Kind::BarrierRelease, cycle, ref, value(ref)});
      VectorClock clk = ccb_file_.clock_at(bar.spec.ccb_counter, need);
      multicast_update(bar.spec.release_targets, Endpoint::of_ccb(), cycle, b, track_ ? &clk : nullptr);
      progress = true;
    }
  }
  std::vector<uint32_t> released;
  for (auto it = pending_.begin(); it != pending_.end();) {
    const uint64_t v = value(it->second.counter);
    if (v >= it->second.expected) {
      log({SyncEvent::Kind::MonitorSatisfied, cycle, it->second.counter, v, it->first});
      released.push_back(it->first);
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
  return released;
}

}  // namespace tpbsim
