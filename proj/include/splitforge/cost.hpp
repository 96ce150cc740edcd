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
#include <vector>

#include "splitforge/arch.hpp"

namespace splitforge {

// ---------------------------------------------------------------------------
// Closed forms for a two-layer 3x3 network L0 -> L1 -> L2.

int64_t ParamsClosedFormOriginal(int64_t l0, int64_t l1, int64_t l2);
// Throws Error(kNonDivisible) unless k1 | L1 and k2 | L2.
int64_t ParamsClosedFormSplit(int64_t l0, int64_t l1, int64_t l2, int64_t k1, int64_t k2);

struct SweepCell {
  int k1 = 1;
  int k2 = 1;
  std::optional<int64_t> params_split;  // empty when k1 or k2 does not divide
  int64_t params_org = 0;
};

// Full grid ordered by (k1, k2).
std::vector<SweepCell> SweepParams(int l0, int l1, int l2, const std::vector<int>& factors);
// Columns k1,k2,params_split,params_org; non-divisible cells read "nondivisible".
std::string SweepCsv(const std::vector<SweepCell>& cells);

// ---------------------------------------------------------------------------
// Enumerated parameter and MAC counts.

struct LayerCost {
  std::string id;
  LayerKind kind = LayerKind::kConv;
  LayerRole role = LayerRole::kBody;
  int64_t params = 0;
  int64_t macs = 0;
  int64_t elem_ops = 0;  // non-MAC element work (pool, relu, add, concat)
  bool fusion = false;
};

struct CostTotals {
  int64_t params = 0;         // conv + dense
  int64_t conv_params = 0;    // "convolutional weights"
  int64_t dense_params = 0;
  int64_t params_fusion_only = 0;
  int64_t macs = 0;
};

struct CostReport {
  std::vector<LayerCost> per_layer;
  CostTotals totals;
};

int64_t ConvWeightCount(const ConvParams& p, int in_channels);

// Enumerates every layer, including block pools as zero-parameter entries.
CostReport CountCosts(const Architecture& arch);
inline CostReport CountParams(const Architecture& arch) { return CountCosts(arch); }
inline CostReport CountMacs(const Architecture& arch) { return CountCosts(arch); }

// ---------------------------------------------------------------------------
// Execution schedules and live-set memory.

enum class Schedule { kAllParallel, kBranchSequential };

const char* ScheduleName(Schedule s);
Schedule ParseSchedule(std::string_view name);

struct OpRef {
  enum class Kind { kLayer, kBlockPool, kClassifier };
  Kind kind = Kind::kLayer;
  int block = 0;
  int layer = 0;  // layer index (block or classifier); unused for pools
};

// Valid topological op order for the schedule. all_parallel interleaves
// branches level by level; branch_sequential runs each branch through its
// pool before starting the next. Throws Error(kScheduleInvalid).
std::vector<OpRef> ExecutionOrder(const Architecture& arch, Schedule schedule);
std::string OpName(const Architecture& arch, const OpRef& op);

struct MemoryOptions {
  bool concat_alias = false;
};

struct MemoryReport {
  Schedule schedule = Schedule::kAllParallel;
  int64_t peak_elements = 0;
  std::string peak_op;
  int64_t weight_elements = 0;          // static storage, excluded from the peak
  std::vector<std::string> ops;         // execution order
  std::vector<int64_t> live_elements;   // live set while each op runs
};

MemoryReport PeakMemory(const Architecture& arch, Schedule schedule, MemoryOptions options = {});

}  // namespace splitforge
