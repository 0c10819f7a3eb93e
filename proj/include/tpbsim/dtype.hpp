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
#include <span>
#include <string>
#include <string_view>

namespace tpbsim {

enum class DType : uint8_t { i8, u8, i32, f16, f32 };

constexpr uint32_t byte_width(DType t) {
  switch (t) {
    case DType::i8:
    case DType::u8: return 1;
    case DType::f16: return 2;
    case DType::i32:
    case DType::f32: return 4;
  }
  return 0;
}

constexpr bool is_float(DType t) { return t == DType::f16 || t == DType::f32; }
constexpr bool is_accumulator(DType t) { return t == DType::i32 || t == DType::f32; }

std::string_view dtype_name(DType t);
std::optional<DType> parse_dtype(std::string_view name);

// IEEE binary16 conversion, round-to-nearest-even, overflow to infinity.
uint16_t f32_to_f16_bits(float value);
float f16_bits_to_f32(uint16_t bits);

// Element codec used by every functional unit. Integer stores saturate and
// float-to-int conversion rounds to nearest even.
double load_element(DType t, std::span<const uint8_t> bytes);
void store_element(DType t, double value, std::span<uint8_t> bytes);
int64_t load_integer(DType t, std::span<const uint8_t> bytes);
void store_integer(DType t, int64_t value, std::span<uint8_t> bytes);

// Representable range used for saturation of integer types.
int64_t dtype_min(DType t);
int64_t dtype_max(DType t);

}  // namespace tpbsim
