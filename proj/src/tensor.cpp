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

#include "tpbsim/tensor.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include <json.hpp>

#include "tpbsim/error.hpp"

namespace tpbsim {

namespace {
std::span<const uint8_t> element(const std::vector<uint8_t>& b, DType t, int64_t i) {
  const size_t w = byte_width(t);
  return std::span<const uint8_t>(b).subspan(static_cast<size_t>(i) * w, w);
}
}  // namespace

Tensor Tensor::zeros(DType t, std::vector<int64_t> shape) {
  Tensor x;
  x.dtype = t;
  x.shape = std::move(shape);
  x.bytes.assign(static_cast<size_t>(x.numel()) * byte_width(t), 0);
  return x;
}

Tensor Tensor::from_values(DType t, std::vector<int64_t> shape, const std::vector<double>& values) {
  Tensor x = zeros(t, std::move(shape));
  if (static_cast<int64_t>(values.size()) != x.numel()) fail(ErrorKind::ShapeMismatch, "value count does not match shape");
  for (int64_t i = 0; i < x.numel(); ++i) x.set(i, values[static_cast<size_t>(i)]);
  return x;
}

int64_t Tensor::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

double Tensor::at(int64_t i) const { return load_element(dtype, element(bytes, dtype, i)); }

void Tensor::set(int64_t i, double v) {
  const size_t w = byte_width(dtype);
  store_element(dtype, v, std::span<uint8_t>(bytes).subspan(static_cast<size_t>(i) * w, w));
}

std::vector<double> Tensor::values() const {
  std::vector<double> v(static_cast<size_t>(numel()));
  for (int64_t i = 0; i < numel(); ++i) v[static_cast<size_t>(i)] = at(i);
  return v;
}

Tensor random_tensor(DType t, const std::vector<int64_t>& shape, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor x = Tensor::zeros(t, shape);
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (is_float(t)) {
      x.set(i, static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0);
    } else if (t == DType::u8) {
      x.set(i, static_cast<double>(rng() % 16));
    } else {
      x.set(i, static_cast<double>(rng() % 17) - 8.0);
    }
  }
  return x;
}

void save_tensor(const std::string& dir, const std::string& name, const Tensor& t) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path base = fs::path(dir) / name;
  std::ofstream bin(base.string() + ".bin", std::ios::binary);
  bin.write(reinterpret_cast<const char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
  nlohmann::json meta = {{"dtype", std::string(dtype_name(t.dtype))}, {"shape", t.shape}};
  std::ofstream js(base.string() + ".json");
  js << meta.dump() << "\n";
  if (!bin || !js) fail(ErrorKind::IoError, "cannot write tensor " + base.string());
}

Tensor load_tensor(const std::string& dir, const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(dir) / name;
  std::ifstream js(base.string() + ".json");
  std::ifstream bin(base.string() + ".bin", std::ios::binary);
  if (!js || !bin) fail(ErrorKind::IoError, "missing tensor files for " + base.string());
  Tensor t;
  try {
    const auto meta = nlohmann::json::parse(js);
    const auto dt = parse_dtype(meta.at("dtype").get<std::string>());
    if (!dt) fail(ErrorKind::IoError, base.string() + ".json: unknown dtype");
    t.dtype = *dt;
    t.shape = meta.at("shape").get<std::vector<int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::IoError, base.string() + ".json: " + e.what());
  }
  t.bytes.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
  if (t.bytes.size() != static_cast<size_t>(t.numel()) * byte_width(t.dtype))
    fail(ErrorKind::IoError, base.string() + ".bin: size does not match the sidecar");
  return t;
}

double relative_error(const Tensor& got, const Tensor& want) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (got.dtype != want.dtype || got.shape != want.shape) return kInf;
  if (!is_float(want.dtype)) return got.bytes == want.bytes ? 0.0 : kInf;
  double diff = 0, norm = 0;
  for (int64_t i = 0; i < want.numel(); ++i) {
    const double a = got.at(i), b = want.at(i);
    if (std::isnan(a) != std::isnan(b)) return kInf;
    if (std::isnan(a)) continue;
    if (a == b) {
      if (std::isfinite(b)) norm += b * b;
      continue;
    }
    if (std::isinf(a) || std::isinf(b)) return kInf;
    diff += (a - b) * (a - b);
    norm += b * b;
  }
  if (diff == 0) return 0.0;
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-30);
}

uint64_t fnv1a(const void* data, size_t len, uint64_t seed) {
  auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t tensor_hash(const Tensor& t) {
  uint64_t h = fnv1a(&t.dtype, 1);
  h = fnv1a(t.shape.data(), t.shape.size() * sizeof(int64_t), h);
  return fnv1a(t.bytes.data(), t.bytes.size(), h);
}

}  // namespace tpbsim
