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

#include "tpbsim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "tpbsim/error.hpp"

namespace tpbsim {

namespace {

double round_f16(double v) {
  if (std::isnan(v) || std::isinf(v)) return v;
  const double a = std::fabs(v);
  if (a >= 65520.0) return std::copysign(std::numeric_limits<double>::infinity(), v);
  if (a == 0) return v;
  int e = 0;
  std::frexp(a, &e);  // a = m * 2^e, m in [0.5, 1)
  const int q = std::max(e, -13) - 11;  // quantum exponent, subnormals below 2^-14
  const double quantum = std::ldexp(1.0, q);
  return std::copysign(std::nearbyint(a / quantum) * quantum, v);
}

int64_t int_min(DType t) {
  switch (t) {
    case DType::i8: return -128;
    case DType::u8: return 0;
    default: return std::numeric_limits<int32_t>::min();
  }
}
int64_t int_max(DType t) {
  switch (t) {
    case DType::i8: return 127;
    case DType::u8: return 255;
    default: return std::numeric_limits<int32_t>::max();
  }
}

using Values = std::vector<double>;

struct Evaluator {
  const Graph& g;
  std::map<std::string, Values> vals;

  const Values& of(const std::string& name) { return vals.at(name); }

  // Element of `src` aligned with element i of a tensor of `n` elements.
  static double broadcast(const Values& src, size_t i) { return src.size() == 1 ? src[0] : src[i % src.size()]; }

  static double apply(OpKind op, double x, double y, DType t) {
    if (!is_float(t)) {
      const auto a = static_cast<int64_t>(x), b = static_cast<int64_t>(y);
      switch (op) {
        case OpKind::Add: return static_cast<double>(a + b);
        case OpKind::Sub: return static_cast<double>(a - b);
        case OpKind::Mul: {
          const __int128 p = static_cast<__int128>(a) * b;
          if (p > int_max(t)) return static_cast<double>(int_max(t));
          if (p < int_min(t)) return static_cast<double>(int_min(t));
          return static_cast<double>(static_cast<int64_t>(p));
        }
        default: break;
      }
    }
    switch (op) {
      case OpKind::Add: return x + y;
      case OpKind::Sub: return x - y;
      case OpKind::Mul: return x * y;
      case OpKind::Max: return std::max(x, y);
      case OpKind::Min: return std::min(x, y);
      case OpKind::Relu: return std::max(x, 0.0);
      default: return x;  // cast
    }
  }

  static double activation(const Node& n, double v) {
    switch (n.act) {
      case Activation::Identity: return v;
      case Activation::Relu: return std::max(v, 0.0);
      case Activation::Relu6: return std::clamp(v, 0.0, 6.0);
      case Activation::Clamp: return std::clamp(v, n.clamp_lo, n.clamp_hi);
    }
    return v;
  }

  Values matmul(const Node& n) {
    const Node& x = g.node(n.inputs[0]);
    const Node& w = g.node(n.inputs[1]);
    const Values &a = of(x.name), &b = of(w.name);
    const int64_t K = w.shape[0], N = w.shape[1], M = numel(x.shape) / K;
    Values out(static_cast<size_t>(M * N));
    for (int64_t r = 0; r < M; ++r)
      for (int64_t c = 0; c < N; ++c) {
        double v;
        if (is_float(x.dtype)) {
          v = 0;
          for (int64_t k = 0; k < K; ++k) v += a[r * K + k] * b[k * N + c];
        } else {
          int64_t acc = 0;
          for (int64_t k = 0; k < K; ++k)
            acc += static_cast<int64_t>(a[r * K + k]) * static_cast<int64_t>(b[k * N + c]);
          v = static_cast<double>(std::clamp<int64_t>(acc, int_min(DType::i32), int_max(DType::i32)));
        }
        out[r * N + c] = activation(n, v);
      }
    return out;
  }

  Values conv(const Node& n) {
    const Node& x = g.node(n.inputs[0]);
    const Node& w = g.node(n.inputs[1]);
    const Values &a = of(x.name), &b = of(w.name);
    const int64_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    const int64_t KH = w.shape[0], KW = w.shape[1], CO = w.shape[3];
    const int64_t OH = n.shape[1], OW = n.shape[2];
    Values out(static_cast<size_t>(numel(n.shape)));
    for (int64_t bi = 0; bi < B; ++bi)
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow)
          for (int64_t co = 0; co < CO; ++co) {
            double fsum = 0;
            int64_t isum = 0;
            for (int64_t i = 0; i < KH; ++i)
              for (int64_t j = 0; j < KW; ++j) {
                const int64_t ih = oh * n.stride + i - n.pad, iw = ow * n.stride + j - n.pad;
                if (ih < 0 || iw < 0 || ih >= H || iw >= W) continue;
                for (int64_t c = 0; c < C; ++c) {
                  const double xv = a[((bi * H + ih) * W + iw) * C + c];
                  const double wv = b[((i * KW + j) * C + c) * CO + co];
                  if (is_float(x.dtype)) fsum += xv * wv;
                  else isum += static_cast<int64_t>(xv) * static_cast<int64_t>(wv);
                }
              }
            const double v = is_float(x.dtype)
                                 ? fsum
                                 : static_cast<double>(std::clamp<int64_t>(isum, int_min(DType::i32), int_max(DType::i32)));
            out[((bi * OH + oh) * OW + ow) * CO + co] = activation(n, v);
          }
    return out;
  }

  Values rows_op(const Node& n) {
    const Values& a = of(n.inputs[0]);
    const int64_t len = n.shape.back(), rows = numel(n.shape) / len;
    Values out(a.size());
    for (int64_t r = 0; r < rows; ++r) {
      const double* x = &a[r * len];
      double* y = &out[r * len];
      if (n.kind == OpKind::Softmax) {
        const double mx = *std::max_element(x, x + len);
        double s = 0;
        for (int64_t i = 0; i < len; ++i) s += (y[i] = std::exp(x[i] - mx));
        for (int64_t i = 0; i < len; ++i) y[i] /= s;
      } else {
        double mean = 0, var = 0;
        for (int64_t i = 0; i < len; ++i) mean += x[i];
        mean /= static_cast<double>(len);
        for (int64_t i = 0; i < len; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= static_cast<double>(len);
        const double inv = 1.0 / std::sqrt(var + n.eps);
        for (int64_t i = 0; i < len; ++i) y[i] = (x[i] - mean) * inv;
      }
    }
    return out;
  }

  Values pool(const Node& n) {
    const Node& x = g.node(n.inputs[0]);
    const Values& a = of(x.name);
    const int64_t H = x.shape[1], W = x.shape[2], C = x.shape[3];
    const int64_t B = n.shape[0], OH = n.shape[1], OW = n.shape[2], k = n.window;
    Values out(static_cast<size_t>(numel(n.shape)));
    for (int64_t b = 0; b < B; ++b)
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow)
          for (int64_t c = 0; c < C; ++c) {
            double mx = -std::numeric_limits<double>::infinity(), sum = 0;
            for (int64_t i = 0; i < k; ++i)
              for (int64_t j = 0; j < k; ++j) {
                const double v = a[((b * H + oh * k + i) * W + ow * k + j) * C + c];
                mx = std::max(mx, v);
                sum += v;
              }
            out[((b * OH + oh) * OW + ow) * C + c] = n.pool == PoolKind::Max ? mx : sum / static_cast<double>(k * k);
          }
    return out;
  }

  Values fused(const Node& n) {
    Values cur = of(n.inputs[0]);
    for (const auto& s : n.steps) {
      const Values* other = s.operand >= 0 ? &of(n.inputs[s.operand]) : nullptr;
      for (size_t i = 0; i < cur.size(); ++i) {
        double y = other ? broadcast(*other, i) : s.imm;
        double x = cur[i];
        if (s.swapped) std::swap(x, y);
        cur[i] = oracle_round(s.dtype, apply(s.op, x, y, s.dtype));
      }
    }
    return cur;
  }

  Values eval(const Node& n, const TensorMap& inputs) {
    switch (n.kind) {
      case OpKind::Input: {
        auto it = inputs.find(n.name);
        if (it == inputs.end()) fail(ErrorKind::MalformedRequest, "missing input '" + n.name + "'");
        if (it->second.dtype != n.dtype || it->second.shape != n.shape)
          fail(ErrorKind::ShapeMismatch, "input '" + n.name + "' does not match its declaration");
        return it->second.values();
      }
      case OpKind::Constant: return constant_values(n);
      case OpKind::Matmul: return matmul(n);
      case OpKind::Conv2d: return conv(n);
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
      case OpKind::Max:
      case OpKind::Min: {
        const Values &a = of(n.inputs[0]), &b = of(n.inputs[1]);
        Values out(static_cast<size_t>(numel(n.shape)));
        for (size_t i = 0; i < out.size(); ++i) out[i] = apply(n.kind, broadcast(a, i), broadcast(b, i), n.dtype);
        return out;
      }
      case OpKind::Relu:
      case OpKind::Cast:
      case OpKind::Copy:
      case OpKind::Reshape: {
        Values out = of(n.inputs[0]);
        if (n.kind == OpKind::Relu)
          for (auto& v : out) v = std::max(v, 0.0);
        return out;
      }
      case OpKind::Softmax:
      case OpKind::Layernorm: return rows_op(n);
      case OpKind::Pool: return pool(n);
      case OpKind::Transpose: {
        const Values& a = of(n.inputs[0]);
        const int64_t R = n.shape[1], C = n.shape[0];
        Values out(a.size());
        for (int64_t i = 0; i < R; ++i)
          for (int64_t j = 0; j < C; ++j) out[j * R + i] = a[i * C + j];
        return out;
      }
      case OpKind::Gather: {
        const Node& table = g.node(n.inputs[0]);
        const Values &t = of(table.name), &idx = of(n.inputs[1]);
        const int64_t row = numel(table.shape) / table.shape[0];
        Values out;
        out.reserve(static_cast<size_t>(numel(n.shape)));
        for (double d : idx) {
          const auto r = static_cast<int64_t>(d);
          if (r < 0 || r >= table.shape[0])
            fail(ErrorKind::IndexOutOfRange, n.name + ": index " + std::to_string(r) + " outside the table");
          out.insert(out.end(), t.begin() + r * row, t.begin() + (r + 1) * row);
        }
        return out;
      }
      case OpKind::Fill: return Values(static_cast<size_t>(numel(n.shape)), n.value);
      case OpKind::Fused: return fused(n);
    }
    return {};
  }
};

}  // namespace

double oracle_round(DType t, double v) {
  switch (t) {
    case DType::f32: return static_cast<double>(static_cast<float>(v));
    case DType::f16: return round_f16(v);
    default:
      if (std::isnan(v)) return 0;
      return std::clamp(std::nearbyint(v), static_cast<double>(int_min(t)), static_cast<double>(int_max(t)));
  }
}

TensorMap oracle_run(const Graph& g, const TensorMap& inputs) {
  Evaluator ev{g, {}};
  for (const auto& n : g.nodes) {
    Values v = ev.eval(n, inputs);
    if (n.kind != OpKind::Fused)
      for (auto& x : v) x = oracle_round(n.dtype, x);
    ev.vals[n.name] = std::move(v);
  }
  TensorMap out;
  for (const auto& o : g.outputs) {
    const Node& n = g.node(o);
    out[o] = Tensor::from_values(n.dtype, n.shape, ev.vals.at(o));
  }
  return out;
}

TensorMap random_inputs(const Graph& g, uint64_t seed) {
  TensorMap out;
  for (const auto& n : g.nodes) {
    if (n.kind != OpKind::Input) continue;
    const uint64_t s = fnv1a(n.name.data(), n.name.size(), seed * 0x9e3779b97f4a7c15ull + 1);
    Tensor t = random_tensor(n.dtype, n.shape, s);
    for (const auto& c : g.nodes)
      if (c.kind == OpKind::Gather && c.inputs[1] == n.name) {
        const int64_t rows = g.node(c.inputs[0]).shape[0];
        for (int64_t i = 0; i < t.numel(); ++i) t.set(i, static_cast<double>(fnv1a(&i, sizeof i, s) % rows));
      }
    out[n.name] = std::move(t);
  }
  return out;
}

double output_tolerance(const Graph& g, const std::string& output) {
  const Node& out = g.node(output);
  if (!is_float(out.dtype)) return 0.0;
  std::set<std::string> seen{output};
  std::vector<std::string> stack{output};
  while (!stack.empty()) {
    const Node& n = g.node(stack.back());
    stack.pop_back();
    if (n.dtype == DType::f16) return 1e-3;
    for (const auto& s : n.steps)
      if (s.dtype == DType::f16) return 1e-3;
    for (const auto& in : n.inputs)
      if (seen.insert(in).second) stack.push_back(in);
  }
  return 1e-5;
}

}  // namespace tpbsim
