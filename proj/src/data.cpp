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

#include "splitforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>

#include "splitforge/error.hpp"

namespace splitforge {

namespace {

constexpr int kCifarSide = 32;
constexpr int kCifarPlane = kCifarSide * kCifarSide;

std::string ReadFile(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot read " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

Dataset DecodeCifar10(std::string_view bytes, std::optional<size_t> limit) {
  if (bytes.size() % kCifarRecordBytes != 0)
    throw Error(ErrorCode::kBadLength, std::to_string(bytes.size()) +
                                           " bytes is not a multiple of the 3073-byte record");
  size_t n = bytes.size() / kCifarRecordBytes;
  if (limit) n = std::min(n, *limit);
  Dataset ds;
  ds.class_count = 10;
  ds.images = TensorBuffer({static_cast<int64_t>(n), 3, kCifarSide, kCifarSide});
  ds.labels.resize(n);
  for (size_t r = 0; r < n; ++r) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data()) + r * kCifarRecordBytes;
    if (rec[0] > 9)
      throw Error(ErrorCode::kLabelOutOfRange,
                  "record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
    ds.labels[r] = rec[0];
    float* dst = ds.images.ptr() + r * 3 * kCifarPlane;
    for (int k = 0; k < 3 * kCifarPlane; ++k) dst[k] = static_cast<float>(rec[1 + k]) / 255.0f;
  }
  return ds;
}

std::string EncodeCifar10(const Dataset& ds) {
  if (ds.images.dim(1) != 3 || ds.images.dim(2) != kCifarSide || ds.images.dim(3) != kCifarSide)
    throw Error(ErrorCode::kShapeMismatch, "CIFAR records are 3x32x32");
  std::string out;
  out.reserve(ds.size() * kCifarRecordBytes);
  for (size_t r = 0; r < ds.size(); ++r) {
    out.push_back(static_cast<char>(ds.labels[r]));
    const float* src = ds.images.ptr() + r * 3 * kCifarPlane;
    for (int k = 0; k < 3 * kCifarPlane; ++k) {
      const long v = std::lround(std::clamp(src[k], 0.0f, 1.0f) * 255.0f);
      out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
  }
  return out;
}

Dataset LoadCifar10Binary(const std::string& path, std::optional<size_t> limit) {
  return DecodeCifar10(ReadFile(path), limit);
}

Dataset LoadCifar10Dir(const std::string& dir, bool train, std::optional<size_t> limit) {
  std::vector<std::string> files;
  if (train) {
    for (int i = 1; i <= 5; ++i) files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
  } else {
    files.push_back(dir + "/test_batch.bin");
  }
  std::string bytes;
  for (const auto& f : files) {
    bytes += ReadFile(f);
    if (limit && bytes.size() >= *limit * kCifarRecordBytes) break;
  }
  return DecodeCifar10(bytes, limit);
}

std::string DataDir() {
  const char* env = std::getenv("SPLITFORGE_DATA_DIR");
  return env && *env ? std::string(env) : std::string("./data");
}

Dataset SynthQuadrantDataset(uint64_t seed, size_t n, int size, int classes, int channels) {
  if (size < 8 || size % 2 != 0)
    throw Error(ErrorCode::kInvalidArgument, "image size must be even and at least 8");
  if (classes < 2 || classes > 4) throw Error(ErrorCode::kInvalidArgument, "classes must be in [2, 4]");
  if (channels < 1) throw Error(ErrorCode::kInvalidArgument, "channels must be positive");

  std::mt19937_64 rng(seed);
  std::vector<int> labels(n);
  for (size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::uniform_real_distribution<float> noise(0.0f, 0.1f);
  std::uniform_real_distribution<float> bright(0.6f, 1.0f);
  const int half = size / 2;
  const int radius = std::max(1, size / 8);
  std::uniform_int_distribution<int> pos(radius, half - 1 - radius);

  Dataset ds;
  ds.class_count = classes;
  ds.labels = labels;
  ds.images = TensorBuffer({static_cast<int64_t>(n), channels, size, size});
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) ds.images.at(i, c, y, x) = noise(rng);
    const int q = labels[i];
    const int cy = pos(rng) + (q / 2) * half;
    const int cx = pos(rng) + (q % 2) * half;
    for (int c = 0; c < channels; ++c) {
      const float amp = bright(rng);
      for (int y = cy - radius; y <= cy + radius; ++y)
        for (int x = cx - radius; x <= cx + radius; ++x) {
          float& v = ds.images.at(i, c, y, x);
          v = std::min(1.0f, v + amp);
        }
    }
  }
  return ds;
}

double QuadrantHeuristicAccuracy(const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  const int64_t ch = ds.images.dim(1), h = ds.images.dim(2), w = ds.images.dim(3);
  size_t correct = 0;
  std::vector<double> mean(static_cast<size_t>(h * w));
  for (size_t i = 0; i < ds.size(); ++i) {
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double s = 0;
        for (int64_t c = 0; c < ch; ++c) s += ds.images.at(i, c, y, x);
        mean[y * w + x] = s / ch;
      }
    double energy[4] = {0, 0, 0, 0};
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double s = 0;
        int cnt = 0;
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            const int64_t yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            s += mean[yy * w + xx];
            ++cnt;
          }
        const double f = s / cnt;
        energy[(y >= h / 2 ? 2 : 0) + (x >= w / 2 ? 1 : 0)] += f * f;
      }
    const int pred = static_cast<int>(std::max_element(energy, energy + ds.class_count) - energy);
    correct += pred == ds.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

Dataset Subset(const Dataset& ds, const std::vector<size_t>& indices) {
  Dataset out;
  out.class_count = ds.class_count;
  std::vector<int64_t> shape = ds.images.shape;
  if (shape.empty()) shape = {0, 1, 1, 1};
  shape[0] = static_cast<int64_t>(indices.size());
  out.images = TensorBuffer(shape);
  const int64_t stride = ds.images.dim(1) * ds.images.dim(2) * ds.images.dim(3);
  for (size_t k = 0; k < indices.size(); ++k) {
    const size_t i = indices[k];
    std::copy_n(ds.images.ptr() + i * stride, stride, out.images.ptr() + k * stride);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

std::pair<Dataset, Dataset> SplitTrainTest(const Dataset& ds, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "fraction must be in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(std::max(ds.class_count, 1)));
  for (size_t i = 0; i < ds.size(); ++i) by_class.at(static_cast<size_t>(ds.labels[i])).push_back(i);
  std::vector<size_t> first, second;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<size_t>(std::llround(fraction * static_cast<double>(members.size())));
    first.insert(first.end(), members.begin(), members.begin() + take);
    second.insert(second.end(), members.begin() + take, members.end());
  }
  if (first.empty() || second.empty())
    throw Error(ErrorCode::kEmptySplit, "split of " + std::to_string(ds.size()) +
                                            " samples leaves one side empty");
  std::shuffle(first.begin(), first.end(), rng);
  std::shuffle(second.begin(), second.end(), rng);
  return {Subset(ds, first), Subset(ds, second)};
}

}  // namespace splitforge
