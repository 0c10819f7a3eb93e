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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tpbsim {

// One loop level of a tensor walker. The level visits
// initial, initial + step, ..., final, so (final - initial) must be a
// nonnegative multiple of step.
struct LoopLevel {
  int64_t initial = 0;
  int64_t step = 1;
  int64_t final = 0;

  uint64_t trip_count() const;
  bool operator==(const LoopLevel&) const = default;
};

// Levels are stored outermost first.
struct WalkerConfig {
  std::vector<LoopLevel> levels;

  bool operator==(const WalkerConfig&) const = default;
};

inline constexpr size_t kMaxWalkerLevels = 8;
inline constexpr uint64_t kMaxWalkerIterations = uint64_t{1} << 32;

// Throws Error(InvalidLevel) on a zero step, a range that is not a whole
// number of steps, too many levels or too many iterations.
void validate_walker(const WalkerConfig& cfg, size_t max_levels = kMaxWalkerLevels,
                     uint64_t max_iterations = kMaxWalkerIterations);

uint64_t walker_total(const WalkerConfig& cfg);

// Live state of a tensor walker. Each call to next() emits the sum of the
// per-level value counters and then advances the innermost level; a level
// that already sits on its final value wraps to its initial value and carries
// into the next outer level.
class Walker {
 public:
  explicit Walker(WalkerConfig cfg);

  std::optional<int64_t> next();

  const std::vector<int64_t>& values() const { return values_; }
  uint64_t emitted() const { return emitted_; }
  uint64_t total() const { return total_; }
  bool exhausted() const { return emitted_ == total_; }

 private:
  WalkerConfig cfg_;
  std::vector<int64_t> values_;
  uint64_t emitted_ = 0;
  uint64_t total_ = 0;
};

// Emits every address of the walk.
std::vector<int64_t> walk_all(const WalkerConfig& cfg);

// Convenience: a walk over a dense row-major block. `extents` and
// `byte_strides` are outermost first; extent-1 dims collapse to a single
// level that still satisfies the nonzero-step rule.
WalkerConfig strided_walk(int64_t base, const std::vector<int64_t>& extents,
                          const std::vector<int64_t>& byte_strides);

std::string format_walker(const WalkerConfig& cfg);
// Parses the text produced by format_walker: "w(i:s:f,i:s:f,...)".
WalkerConfig parse_walker(const std::string& text);

}  // namespace tpbsim
