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

#include <vector>

#include "splitforge/arch.hpp"

namespace splitforge {

enum class SplitMode { kProposed, kIdeal, kNaive, kShared };

const char* SplitModeName(SplitMode mode);

// Splitting factors per mode:
//   proposed: one factor per block
//   ideal:    (k1, k2)
//   naive:    single K
//   shared:   single K plus shared_depth conv layers left unsplit
struct SplitPlan {
  SplitMode mode = SplitMode::kProposed;
  std::vector<int> factors;
  int shared_depth = 0;
  bool fusion_relu = false;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

SplitPlan ParseSplitPlan(const nlohmann::json& doc);
SplitPlan ParseSplitPlanText(std::string_view text);
nlohmann::json SerializeSplitPlan(const SplitPlan& plan);

// Per-block split with a fusion block (per-branch pool, concat, 1x1 conv)
// after every block. Block 1 branches read the full input; later branches
// read contiguous channel slices of the previous fusion output.
Architecture SplitTransform(const Architecture& arch, const std::vector<int>& factors,
                            bool fusion_relu = false);

// SplitTransform with every factor equal to 1.
Architecture FusedBaseline(const Architecture& arch, bool fusion_relu = false);

// Fully disconnected split of a two-conv network; k2 must be a multiple of k1.
Architecture IdealSplit(const Architecture& arch, int k1, int k2);

// K full-depth slim copies joined by one concat before the classifier.
Architecture NaiveSplit(const Architecture& arch, int k);

// First `shared_depth` conv layers kept at full width, the rest split K ways.
Architecture SharedSplit(const Architecture& arch, int shared_depth, int k);

Architecture ApplyPlan(const Architecture& arch, const SplitPlan& plan);

// Rebuilds the untransformed architecture from a proposed or ideal split.
Architecture RecoverOriginal(const Architecture& split);

}  // namespace splitforge
