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

#include "tpbsim/hbsm.hpp"

#include <algorithm>
#include <cstring>

#include "tpbsim/error.hpp"

namespace tpbsim {

BankedMemoryConfig BankedMemoryConfig::hbsm(const MachineConfig& cfg) {
  return {cfg.hbsm_bytes, cfg.hbsm_banks, cfg.hbsm_bank_width, cfg.hbsm_ports, cfg.hbsm_latency};
}

BankedMemory::BankedMemory(BankedMemoryConfig cfg)
    : cfg_(cfg), storage_(cfg.bytes, 0), queues_(cfg.ports), rr_(cfg.banks, 0) {
  if (cfg.banks == 0 || cfg.line_bytes == 0 || cfg.ports == 0)
    fail(ErrorKind::ConfigInvalid, "banked memory needs banks, line size and ports");
}

uint32_t BankedMemory::bank_of(uint64_t addr) const {
  if (addr >= cfg_.bytes) fail(ErrorKind::OutOfRange, "address beyond memory");
  return static_cast<uint32_t>((addr / cfg_.line_bytes) % cfg_.banks);
}

void BankedMemory::submit(MemRequest req) {
  if (req.requester >= cfg_.ports) fail(ErrorKind::OutOfRange, "no such requester port");
  if (req.len == 0) fail(ErrorKind::MalformedRequest, "zero-length request");
  if (req.len > cfg_.line_bytes) fail(ErrorKind::MalformedRequest, "request wider than a bank line");
  if (req.addr + req.len > cfg_.bytes) fail(ErrorKind::MalformedRequest, "request beyond memory");
  if (req.addr / cfg_.line_bytes != (req.addr + req.len - 1) / cfg_.line_bytes)
    fail(ErrorKind::MalformedRequest, "request crosses a bank line");
  if (req.rw == MemOp::Write && req.payload.size() != req.len)
    fail(ErrorKind::MalformedRequest, "write payload size mismatch");
  queues_[req.requester].push_back(std::move(req));
}

bool BankedMemory::idle() const {
  if (!inflight_.empty()) return false;
  return std::all_of(queues_.begin(), queues_.end(), [](const auto& q) { return q.empty(); });
}

std::optional<uint64_t> BankedMemory::next_completion() const {
  if (inflight_.empty()) return std::nullopt;
  return inflight_.front().ready;
}

MemCycleResult BankedMemory::cycle(uint64_t now) {
  MemCycleResult out;
  while (!inflight_.empty() && inflight_.front().ready <= now) {
    auto& f = inflight_.front();
    out.completions.push_back({f.requester, f.tag, f.rw, std::move(f.data)});
    inflight_.pop_front();
  }

  // contenders per bank, listed by port index
  std::vector<int32_t> winner(cfg_.banks, -1);
  for (uint32_t bank = 0; bank < cfg_.banks; ++bank) {
    for (uint32_t k = 0; k < cfg_.ports; ++k) {
      const uint32_t p = (rr_[bank] + k) % cfg_.ports;
      if (queues_[p].empty()) continue;
      if ((queues_[p].front().addr / cfg_.line_bytes) % cfg_.banks != bank) continue;
      winner[bank] = static_cast<int32_t>(p);
      break;
    }
  }
  for (uint32_t bank = 0; bank < cfg_.banks; ++bank) {
    if (winner[bank] < 0) continue;
    const uint32_t p = static_cast<uint32_t>(winner[bank]);
    rr_[bank] = (p + 1) % cfg_.ports;
    MemRequest req = std::move(queues_[p].front());
    queues_[p].pop_front();
    out.grants.push_back({req.requester, req.tag, req.addr, req.len, req.rw, bank, req.sync_on_grant});
    granted_bytes_ += req.len;
    ++grants_;
    std::vector<uint8_t> data;
    if (req.rw == MemOp::Write) {
      std::memcpy(storage_.data() + req.addr, req.payload.data(), req.len);
    } else {
      data.assign(storage_.begin() + static_cast<std::ptrdiff_t>(req.addr),
                  storage_.begin() + static_cast<std::ptrdiff_t>(req.addr + req.len));
    }
    // Write acknowledgements share the read pipeline so that one port's
    // responses stay in submission order.
    if (cfg_.read_latency == 0) {
      out.completions.push_back({req.requester, req.tag, req.rw, std::move(data)});
    } else {
      inflight_.push_back({now + cfg_.read_latency, req.requester, req.tag, req.rw, std::move(data)});
    }
  }
  return out;
}

void BankedMemory::write_direct(uint64_t addr, std::span<const uint8_t> data) {
  if (addr + data.size() > cfg_.bytes) fail(ErrorKind::OutOfRange, "direct write beyond memory");
  std::memcpy(storage_.data() + addr, data.data(), data.size());
}

std::vector<uint8_t> BankedMemory::read_direct(uint64_t addr, uint64_t len) const {
  if (addr + len > cfg_.bytes) fail(ErrorKind::OutOfRange, "direct read beyond memory");
  return {storage_.begin() + static_cast<std::ptrdiff_t>(addr),
          storage_.begin() + static_cast<std::ptrdiff_t>(addr + len)};
}

void BankedMemory::load_image(std::span<const uint8_t> image) {
  if (image.size() > cfg_.bytes) fail(ErrorKind::OutOfRange, "image larger than memory");
  std::fill(storage_.begin(), storage_.end(), 0);
  std::memcpy(storage_.data(), image.data(), image.size());
}

}  // namespace tpbsim
