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

#include "tpbsim/walker.hpp"

#include <charconv>
#include <sstream>

#include "tpbsim/error.hpp"

namespace tpbsim {

uint64_t LoopLevel::trip_count() const {
  return static_cast<uint64_t>((final - initial) / step) + 1;
}

void validate_walker(const WalkerConfig& cfg, size_t max_levels, uint64_t max_iterations) {
  if (cfg.levels.empty()) fail(ErrorKind::InvalidLevel, "walker needs at least one level");
  if (cfg.levels.size() > max_levels)
    fail(ErrorKind::InvalidLevel, "walker has more than " + std::to_string(max_levels) + " levels");
  uint64_t total = 1;
  for (size_t l = 0; l < cfg.levels.size(); ++l) {
    const auto& lv = cfg.levels[l];
    const std::string where = "level " + std::to_string(l);
    if (lv.step == 0) fail(ErrorKind::InvalidLevel, where + ": step is zero");
    const int64_t span = lv.final - lv.initial;
    if (span % lv.step != 0)
      fail(ErrorKind::InvalidLevel, where + ": range is not a multiple of step");
    if (span / lv.step < 0) fail(ErrorKind::InvalidLevel, where + ": step points away from final");
    const uint64_t trips = lv.trip_count();
    if (trips > max_iterations / total)
      fail(ErrorKind::InvalidLevel, "walker exceeds the iteration limit");
    total *= trips;
  }
}

uint64_t walker_total(const WalkerConfig& cfg) {
  uint64_t total = 1;
  for (const auto& lv : cfg.levels) total *= lv.trip_count();
  return total;
}

Walker::Walker(WalkerConfig cfg) : cfg_(std::move(cfg)) {
  validate_walker(cfg_);
  values_.reserve(cfg_.levels.size());
  for (const auto& lv : cfg_.levels) values_.push_back(lv.initial);
  total_ = walker_total(cfg_);
}

std::optional<int64_t> Walker::next() {
  if (exhausted()) return std::nullopt;
  int64_t addr = 0;
  for (int64_t v : values_) addr += v;
  ++emitted_;
  // Carry from the innermost level outward.
  for (size_t l = cfg_.levels.size(); l-- > 0;) {
    const auto& lv = cfg_.levels[l];
    if (values_[l] == lv.final) {
      values_[l] = lv.initial;
      continue;
    }
    values_[l] += lv.step;
    break;
  }
  return addr;
}

std::vector<int64_t> walk_all(const WalkerConfig& cfg) {
  Walker w(cfg);
  std::vector<int64_t> out;
  out.reserve(w.total());
  while (auto a = w.next()) out.push_back(*a);
  return out;
}

WalkerConfig strided_walk(int64_t base, const std::vector<int64_t>& extents,
                          const std::vector<int64_t>& byte_strides) {
  WalkerConfig cfg;
  for (size_t d = 0; d < extents.size(); ++d) {
    if (extents[d] == 1 && extents.size() > 1) continue;
    int64_t step = byte_strides[d] == 0 ? 1 : byte_strides[d];
    if (extents[d] == 1) step = 1;
    cfg.levels.push_back({0, step, step * (extents[d] - 1)});
  }
  if (cfg.levels.empty()) cfg.levels.push_back({0, 1, 0});
  cfg.levels.front().initial += base;
  cfg.levels.front().final += base;
  return cfg;
}

std::string format_walker(const WalkerConfig& cfg) {
  std::ostringstream out;
  out << "w(";
  for (size_t l = 0; l < cfg.levels.size(); ++l) {
    if (l) out << ',';
    out << cfg.levels[l].initial << ':' << cfg.levels[l].step << ':' << cfg.levels[l].final;
  }
  out << ')';
  return out.str();
}

WalkerConfig parse_walker(const std::string& text) {
  if (text.size() < 3 || text.rfind("w(", 0) != 0 || text.back() != ')')
    fail(ErrorKind::ParseError, "bad walker '" + text + "'");
  WalkerConfig cfg;
  const std::string body = text.substr(2, text.size() - 3);
  std::istringstream in(body);
  std::string item;
  while (std::getline(in, item, ',')) {
    LoopLevel lv;
    int64_t* dst[3] = {&lv.initial, &lv.step, &lv.final};
    size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      const size_t end = k < 2 ? item.find(':', pos) : item.size();
      if (end == std::string::npos) fail(ErrorKind::ParseError, "bad walker level '" + item + "'");
      auto [p, ec] = std::from_chars(item.data() + pos, item.data() + end, *dst[k]);
      if (ec != std::errc() || p != item.data() + end)
        fail(ErrorKind::ParseError, "bad walker level '" + item + "'");
      pos = end + 1;
    }
    cfg.levels.push_back(lv);
  }
  validate_walker(cfg);
  return cfg;
}

}  // namespace tpbsim
