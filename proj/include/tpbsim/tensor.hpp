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
#include <string>
#include <vector>

#include "tpbsim/dtype.hpp"

namespace tpbsim {

// Dense row-major tensor image.
struct Tensor {
  DType dtype = DType::f32;
  std::vector<int64_t> shape;
  std::vector<uint8_t> bytes;

  static Tensor zeros(DType t, std::vector<int64_t> shape);
  static Tensor from_values(DType t, std::vector<int64_t> shape, const std::vector<double>& values);
  int64_t numel() const;
  double at(int64_t i) const;
  void set(int64_t i, double v);
  std::vector<double> values() const;
  bool operator==(const Tensor&) const = default;
};

// Values drawn uniformly from a small dtype-appropriate range: integers in
// [-8, 8] ([0, 15] for u8), floats in [-1, 1).
Tensor random_tensor(DType t, const std::vector<int64_t>& shape, uint64_t seed);

// <dir>/<name>.bin holds the raw bytes, <dir>/<name>.json the dtype and
// shape. Throws IoError.
void save_tensor(const std::string& dir, const std::string& name, const Tensor& t);
Tensor load_tensor(const std::string& dir, const std::string& name);

// Normwise relative difference ||got - want|| / max(||want||, tiny);
// infinity on a shape or dtype mismatch. Integer tensors compare exactly
// (0 or infinity).
double relative_error(const Tensor& got, const Tensor& want);

// 64-bit FNV-1a.
uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 1469598103934665603ull);
uint64_t tensor_hash(const Tensor& t);

}  // namespace tpbsim
