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

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "splitforge/error.hpp"
#include "splitforge/tensor.hpp"

namespace splitforge {

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'F', 'W', 'S'};
constexpr uint32_t kVersion = 1;
constexpr const char* kBiasSuffix = "#bias";

template <class V>
void Put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

void PutTensor(std::string& out, const std::string& id, const Tensor<float>& t) {
  Put<uint64_t>(out, id.size());
  out += id;
  Put<uint64_t>(out, t.shape.size());
  for (int64_t d : t.shape) Put<uint64_t>(out, static_cast<uint64_t>(d));
  out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  template <class V>
  V Get() {
    Need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::string_view Take(size_t n) {
    Need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::kParse, "weight file truncated");
  }
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string EncodeWeights(const WeightStore& w) {
  std::string out(kMagic, 4);
  Put<uint32_t>(out, kVersion);
  uint64_t count = 0;
  for (const auto& [id, lw] : w) count += lw.bias ? 2 : 1;
  Put<uint64_t>(out, count);
  for (const auto& [id, lw] : w) {
    PutTensor(out, id, lw.kernel);
    if (lw.bias) PutTensor(out, id + kBiasSuffix, *lw.bias);
  }
  return out;
}

WeightStore DecodeWeights(std::string_view bytes) {
  Cursor c(bytes);
  if (c.Take(4) != std::string_view(kMagic, 4)) throw Error(ErrorCode::kParse, "bad weight file magic");
  const auto version = c.Get<uint32_t>();
  if (version != kVersion)
    throw Error(ErrorCode::kParse, "unsupported weight file version " + std::to_string(version));
  const auto count = c.Get<uint64_t>();
  WeightStore w;
  std::map<std::string, Tensor<float>> biases;
  for (uint64_t e = 0; e < count; ++e) {
    const auto id_len = c.Get<uint64_t>();
    std::string id(c.Take(id_len));
    Tensor<float> t;
    const auto rank = c.Get<uint64_t>();
    if (rank > 8) throw Error(ErrorCode::kParse, "tensor rank too large for '" + id + "'");
    for (uint64_t r = 0; r < rank; ++r) t.shape.push_back(static_cast<int64_t>(c.Get<uint64_t>()));
    const auto n = static_cast<size_t>(Tensor<float>::Count(t.shape));
    const std::string_view raw = c.Take(n * sizeof(float));
    t.data.resize(n);
    std::memcpy(t.data.data(), raw.data(), raw.size());
    const size_t suffix = std::strlen(kBiasSuffix);
    if (id.size() > suffix && id.compare(id.size() - suffix, suffix, kBiasSuffix) == 0) {
      biases[id.substr(0, id.size() - suffix)] = std::move(t);
    } else {
      w[id].kernel = std::move(t);
    }
  }
  if (!c.done()) throw Error(ErrorCode::kParse, "trailing bytes after weight entries");
  for (auto& [id, b] : biases) {
    auto it = w.find(id);
    if (it == w.end()) throw Error(ErrorCode::kParse, "bias without kernel for '" + id + "'");
    it->second.bias = std::move(b);
  }
  return w;
}

void SaveWeights(const WeightStore& w, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path);
  const std::string bytes = EncodeWeights(w);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path);
}

WeightStore LoadWeights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return DecodeWeights(bytes);
}

}  // namespace splitforge
