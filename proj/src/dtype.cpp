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

#include "tpbsim/dtype.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace tpbsim {

std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::i8: return "i8";
    case DType::u8: return "u8";
    case DType::i32: return "i32";
    case DType::f16: return "f16";
    case DType::f32: return "f32";
  }
  return "?";
}

std::optional<DType> parse_dtype(std::string_view name) {
  if (name == "i8") return DType::i8;
  if (name == "u8") return DType::u8;
  if (name == "i32") return DType::i32;
  if (name == "f16") return DType::f16;
  if (name == "f32") return DType::f32;
  return std::nullopt;
}

uint16_t f32_to_f16_bits(float value) {
  const uint32_t x = std::bit_cast<uint32_t>(value);
  const uint16_t sign = static_cast<uint16_t>((x >> 16) & 0x8000u);
  const uint32_t exp = (x >> 23) & 0xffu;
  uint32_t mant = x & 0x7fffffu;

  if (exp == 0xffu) {
    // inf / nan; keep nan quiet
    return static_cast<uint16_t>(sign | 0x7c00u | (mant ? 0x200u | (mant >> 13) : 0u));
  }
  const int32_t e = static_cast<int32_t>(exp) - 127 + 15;
  if (e >= 0x1f) return static_cast<uint16_t>(sign | 0x7c00u);
  if (e <= 0) {
    // subnormal or zero in half precision
    if (e < -10) return sign;
    mant |= 0x800000u;
    const uint32_t shift = static_cast<uint32_t>(14 - e);
    uint32_t half = mant >> shift;
    const uint32_t rem = mant & ((1u << shift) - 1u);
    const uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half & 1u))) ++half;
    return static_cast<uint16_t>(sign | half);
  }
  uint32_t half = (static_cast<uint32_t>(e) << 10) | (mant >> 13);
  const uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into exponent
  return static_cast<uint16_t>(sign | half);
}

float f16_bits_to_f32(uint16_t bits) {
  const uint32_t sign = static_cast<uint32_t>(bits & 0x8000u) << 16;
  const uint32_t exp = (bits >> 10) & 0x1fu;
  uint32_t mant = bits & 0x3ffu;
  uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      int32_t e = -1;
      do {
        ++e;
        mant <<= 1;
      } while ((mant & 0x400u) == 0);
      out = sign | (static_cast<uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3ffu) << 13);
    }
  } else if (exp == 0x1f) {
    out = sign | 0x7f800000u | (mant << 13);
  } else {
    out = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(out);
}

int64_t dtype_min(DType t) {
  switch (t) {
    case DType::i8: return -128;
    case DType::u8: return 0;
    case DType::i32: return std::numeric_limits<int32_t>::min();
    default: return std::numeric_limits<int64_t>::min();
  }
}

int64_t dtype_max(DType t) {
  switch (t) {
    case DType::i8: return 127;
    case DType::u8: return 255;
    case DType::i32: return std::numeric_limits<int32_t>::max();
    default: return std::numeric_limits<int64_t>::max();
  }
}

int64_t load_integer(DType t, std::span<const uint8_t> b) {
  switch (t) {
    case DType::i8: return static_cast<int8_t>(b[0]);
    case DType::u8: return b[0];
    case DType::i32: {
      int32_t v;
      std::memcpy(&v, b.data(), 4);
      return v;
    }
    default: return static_cast<int64_t>(std::nearbyint(load_element(t, b)));
  }
}

void store_integer(DType t, int64_t value, std::span<uint8_t> b) {
  if (is_float(t)) {
    store_element(t, static_cast<double>(value), b);
    return;
  }
  const int64_t v = std::clamp(value, dtype_min(t), dtype_max(t));
  switch (t) {
    case DType::i8:
    case DType::u8: b[0] = static_cast<uint8_t>(v); break;
    case DType::i32: {
      const int32_t w = static_cast<int32_t>(v);
      std::memcpy(b.data(), &w, 4);
      break;
    }
    default: break;
  }
}

double load_element(DType t, std::span<const uint8_t> b) {
  switch (t) {
    case DType::f16: {
      uint16_t h;
      std::memcpy(&h, b.data(), 2);
      return f16_bits_to_f32(h);
    }
    case DType::f32: {
      float f;
      std::memcpy(&f, b.data(), 4);
      return f;
    }
    default: return static_cast<double>(load_integer(t, b));
  }
}

void store_element(DType t, double value, std::span<uint8_t> b) {
  switch (t) {
    case DType::f16: {
      // round through f32 first; the f32 step is exact for values already
      // computed in f32, which is the only producer of f16 streams
      const uint16_t h = f32_to_f16_bits(static_cast<float>(value));
      std::memcpy(b.data(), &h, 2);
      return;
    }
    case DType::f32: {
      const float f = static_cast<float>(value);
      std::memcpy(b.data(), &f, 4);
      return;
    }
    default: {
      if (std::isnan(value)) {
        store_integer(t, 0, b);
        return;
      }
      const double lo = static_cast<double>(dtype_min(t));
      const double hi = static_cast<double>(dtype_max(t));
      const double r = std::nearbyint(std::clamp(value, lo, hi));
      store_integer(t, static_cast<int64_t>(r), b);
      return;
    }
  }
}

}  // namespace tpbsim
