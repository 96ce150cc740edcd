/**
 * Copyright 2026 The SplitForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace splitforge {

// Dense row-major array. Activations are (batch, channels, height, width);
// conv kernels (out, in/groups, kh, kw); dense weights (out, in); biases (out).
template <class T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> dims, T fill = T(0)) : shape(std::move(dims)) {
    data.assign(static_cast<size_t>(Count(shape)), fill);
  }

  static int64_t Count(const std::vector<int64_t>& dims) {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return i < shape.size() ? shape[i] : 1; }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data[static_cast<size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }
  T at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data[static_cast<size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using TensorBuffer = Tensor<float>;

template <class T>
struct LayerWeights {
  Tensor<T> kernel;
  std::optional<Tensor<T>> bias;
  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

// Keyed by layer id.
template <class T>
using BasicWeightStore = std::map<std::string, LayerWeights<T>>;
using WeightStore = BasicWeightStore<float>;

template <class To, class From>
BasicWeightStore<To> CastWeights(const BasicWeightStore<From>& w) {
  BasicWeightStore<To> out;
  for (const auto& [id, lw] : w) {
    LayerWeights<To> c;
    c.kernel.shape = lw.kernel.shape;
    c.kernel.data.assign(lw.kernel.data.begin(), lw.kernel.data.end());
    if (lw.bias) {
      Tensor<To> b;
      b.shape = lw.bias->shape;
      b.data.assign(lw.bias->data.begin(), lw.bias->data.end());
      c.bias = std::move(b);
    }
    out.emplace(id, std::move(c));
  }
  return out;
}

// Flat binary container: "SFWS" magic, u32 version, u64 entry count, then per
// entry u64 id length, id bytes, u64 rank, u64 dims, f32 elements; all
// little-endian. Biases are stored as separate entries named "<id>#bias".
std::string EncodeWeights(const WeightStore& w);
WeightStore DecodeWeights(std::string_view bytes);
void SaveWeights(const WeightStore& w, const std::string& path);
WeightStore LoadWeights(const std::string& path);

}  // namespace splitforge
