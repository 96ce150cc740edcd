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
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "splitforge/tensor.hpp"

namespace splitforge {

struct Dataset {
  TensorBuffer images;  // (N, C, H, W), values in [0, 1]
  std::vector<int> labels;
  int class_count = 0;

  size_t size() const { return labels.size(); }
};

inline constexpr size_t kCifarRecordBytes = 3073;

// One label byte followed by 3x1024 channel-planar pixel bytes per record.
Dataset DecodeCifar10(std::string_view bytes, std::optional<size_t> limit = std::nullopt);
std::string EncodeCifar10(const Dataset& ds);
Dataset LoadCifar10Binary(const std::string& path, std::optional<size_t> limit = std::nullopt);
// Concatenates data_batch_1..5.bin (train) or test_batch.bin from `dir`.
Dataset LoadCifar10Dir(const std::string& dir, bool train, std::optional<size_t> limit = std::nullopt);

// $SPLITFORGE_DATA_DIR, or ./data when unset.
std::string DataDir();

// Low-amplitude noise plus one bright blob in the quadrant given by the
// label (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right).
Dataset SynthQuadrantDataset(uint64_t seed, size_t n, int size, int classes = 4, int channels = 3);

// 3x3 mean filter on the channel mean, then argmax of quadrant energy.
double QuadrantHeuristicAccuracy(const Dataset& ds);

Dataset Subset(const Dataset& ds, const std::vector<size_t>& indices);

// Stratified, deterministic shuffled split; `fraction` goes to the first set.
std::pair<Dataset, Dataset> SplitTrainTest(const Dataset& ds, double fraction, uint64_t seed);

}  // namespace splitforge
