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

#include "splitforge/cost.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "splitforge/error.hpp"

namespace splitforge {

int64_t ParamsClosedFormOriginal(int64_t l0, int64_t l1, int64_t l2) {
  return (l0 * l1 + l1 * l2) * 9;
}

int64_t ParamsClosedFormSplit(int64_t l0, int64_t l1, int64_t l2, int64_t k1, int64_t k2) {
  if (k1 < 1 || k2 < 1) throw Error(ErrorCode::kInvalidArgument, "factors must be >= 1");
  if (l1 % k1 != 0 || l2 % k2 != 0)
    throw Error(ErrorCode::kNonDivisible, "k1=" + std::to_string(k1) + " must divide L1=" +
                                              std::to_string(l1) + " and k2=" + std::to_string(k2) +
                                              " must divide L2=" + std::to_string(l2));
  return ((l0 * (l1 / k1)) * k1 + ((l1 / k1) * (l2 / k2)) * k2) * 9;
}

std::vector<SweepCell> SweepParams(int l0, int l1, int l2, const std::vector<int>& factors) {
  std::vector<int> grid = factors;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::vector<SweepCell> cells;
  const int64_t org = ParamsClosedFormOriginal(l0, l1, l2);
  for (int k1 : grid) {
    for (int k2 : grid) {
      SweepCell c{k1, k2, std::nullopt, org};
      if (k1 >= 1 && k2 >= 1 && l1 % k1 == 0 && l2 % k2 == 0)
        c.params_split = ParamsClosedFormSplit(l0, l1, l2, k1, k2);
      cells.push_back(c);
    }
  }
  return cells;
}

std::string SweepCsv(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "k1,k2,params_split,params_org\n";
  for (const auto& c : cells) {
    os << c.k1 << "," << c.k2 << ",";
    if (c.params_split) {
      os << *c.params_split;
    } else {
      os << "nondivisible";
    }
    os << "," << c.params_org << "\n";
  }
  return os.str();
}

int64_t ConvWeightCount(const ConvParams& p, int in_channels) {
  return int64_t{p.out_channels} * (in_channels / p.groups) * p.kernel.h * p.kernel.w +
         (p.bias ? p.out_channels : 0);
}

namespace {

bool IsFusion(LayerRole r) {
  return r == LayerRole::kFusionPool || r == LayerRole::kFusionConcat ||
         r == LayerRole::kFusionConv || r == LayerRole::kFusionRelu;
}

LayerCost CostOf(const Layer& l, const LayerShapes& s) {
  LayerCost c;
  c.id = l.id;
  c.kind = l.kind();
  c.role = l.role;
  c.fusion = IsFusion(l.role);
  const Shape3& out = s.out;
  switch (l.kind()) {
    case LayerKind::kConv: {
      const auto& p = l.as<ConvParams>();
      c.params = ConvWeightCount(p, s.in[0].c);
      c.macs = int64_t{out.h} * out.w * out.c * (s.in[0].c / p.groups) * p.kernel.h * p.kernel.w;
      break;
    }
    case LayerKind::kDense: {
      const auto& p = l.as<DenseParams>();
      c.params = s.in[0].elements() * p.out_features + (p.bias ? p.out_features : 0);
      c.macs = s.in[0].elements() * p.out_features;
      break;
    }
    case LayerKind::kPool: {
      const auto& p = l.as<PoolSpec>();
      c.elem_ops = out.elements() * p.window.h * p.window.w;
      break;
    }
    case LayerKind::kChannelSlice:
      break;
    default:
      c.elem_ops = out.elements();
      break;
  }
  return c;
}

}  // namespace

CostReport CountCosts(const Architecture& arch) {
  const ShapeTable t = InferShapes(arch);
  CostReport r;
  for (size_t i = 0; i < arch.blocks.size(); ++i) {
    const Block& b = arch.blocks[i];
    for (size_t j = 0; j < b.layers.size(); ++j) r.per_layer.push_back(CostOf(b.layers[j], t.blocks[i].layers[j]));
    if (b.pool) {
      LayerCost c;
      c.id = "b" + std::to_string(i) + ".pool";
      c.kind = LayerKind::kPool;
      c.elem_ops = t.blocks[i].output.elements() * b.pool->window.h * b.pool->window.w;
      r.per_layer.push_back(c);
    }
  }
  for (size_t j = 0; j < arch.classifier.layers.size(); ++j)
    r.per_layer.push_back(CostOf(arch.classifier.layers[j], t.classifier[j]));

  for (const auto& c : r.per_layer) {
    r.totals.params += c.params;
    r.totals.macs += c.macs;
    if (c.kind == LayerKind::kConv) r.totals.conv_params += c.params;
    if (c.kind == LayerKind::kDense) r.totals.dense_params += c.params;
    if (c.fusion) r.totals.params_fusion_only += c.params;
  }
  return r;
}

// ---------------------------------------------------------------------------

const char* ScheduleName(Schedule s) {
  return s == Schedule::kAllParallel ? "all_parallel" : "branch_sequential";
}

Schedule ParseSchedule(std::string_view name) {
  if (name == "all_parallel") return Schedule::kAllParallel;
  if (name == "branch_sequential") return Schedule::kBranchSequential;
  throw Error(ErrorCode::kInvalidArgument, "unknown schedule '" + std::string(name) + "'");
}

namespace {

std::vector<int> BlockOrder(const Block& b, Schedule schedule, size_t block_index) {
  const int n = static_cast<int>(b.layers.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (schedule == Schedule::kAllParallel) {
    std::vector<int> depth(n, 0);
    for (int j = 0; j < n; ++j) {
      for (int src : b.layers[j].inputs)
        if (src >= 0 && src < j) depth[j] = std::max(depth[j], depth[src] + 1);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return depth[x] < depth[y]; });
  } else {
    // Phase 0: shared layers before any branch, 1: branches, 2: after.
    std::vector<int> phase(n, 0);
    for (int j = 0; j < n; ++j) {
      const Layer& l = b.layers[j];
      if (l.branch >= 0) {
        phase[j] = 1;
        continue;
      }
      for (int src : l.inputs)
        if (src >= 0 && src < j && phase[src] > 0) phase[j] = 2;
    }
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      if (phase[x] != phase[y]) return phase[x] < phase[y];
      if (phase[x] == 1 && b.layers[x].branch != b.layers[y].branch)
        return b.layers[x].branch < b.layers[y].branch;
      return x < y;
    });
  }
  std::vector<bool> done(n, false);
  for (int j : order) {
    for (int src : b.layers[j].inputs) {
      if (src >= 0 && (src >= n || !done[src]))
        throw Error(ErrorCode::kScheduleInvalid,
                    std::string(ScheduleName(schedule)) + " cannot order block " +
                        std::to_string(block_index) + ": layer '" + b.layers[j].id +
                        "' runs before its producer");
    }
    done[j] = true;
  }
  return order;
}

}  // namespace

std::vector<OpRef> ExecutionOrder(const Architecture& arch, Schedule schedule) {
  std::vector<OpRef> ops;
  for (size_t i = 0; i < arch.blocks.size(); ++i) {
    for (int j : BlockOrder(arch.blocks[i], schedule, i))
      ops.push_back({OpRef::Kind::kLayer, static_cast<int>(i), j});
    if (arch.blocks[i].pool) ops.push_back({OpRef::Kind::kBlockPool, static_cast<int>(i), 0});
  }
  for (size_t j = 0; j < arch.classifier.layers.size(); ++j)
    ops.push_back({OpRef::Kind::kClassifier, 0, static_cast<int>(j)});
  return ops;
}

std::string OpName(const Architecture& arch, const OpRef& op) {
  switch (op.kind) {
    case OpRef::Kind::kLayer: return arch.blocks[op.block].layers[op.layer].id;
    case OpRef::Kind::kBlockPool: return "b" + std::to_string(op.block) + ".pool";
    case OpRef::Kind::kClassifier: return arch.classifier.layers[op.layer].id;
  }
  return "?";
}

MemoryReport PeakMemory(const Architecture& arch, Schedule schedule, MemoryOptions options) {
  const ShapeTable t = InferShapes(arch);

  struct Buffer {
    int64_t size;
    int start;
    int end;
  };
  std::vector<Buffer> buffers;
  using Value = std::vector<int>;  // buffers backing a value

  int step = 0;
  auto fresh = [&](int64_t size) {
    buffers.push_back({size, step, step});
    return Value{static_cast<int>(buffers.size()) - 1};
  };
  auto use = [&](const Value& v) {
    for (int b : v) buffers[b].end = std::max(buffers[b].end, step);
  };

  MemoryReport report;
  report.schedule = schedule;
  report.weight_elements = CountCosts(arch).totals.params;

  Value current = fresh(arch.input_shape.elements());
  for (size_t i = 0; i < arch.blocks.size(); ++i) {
    const Block& b = arch.blocks[i];
    const Value block_input = current;
    std::vector<Value> values(b.layers.size());
    for (int j : BlockOrder(b, schedule, i)) {
      const Layer& l = b.layers[j];
      Value out;
      const bool alias = l.kind() == LayerKind::kRelu || l.kind() == LayerKind::kChannelSlice ||
                         (l.kind() == LayerKind::kConcat && options.concat_alias);
      for (int src : l.inputs) {
        const Value& v = src == kBlockInput ? block_input : values[src];
        use(v);
        if (alias) out.insert(out.end(), v.begin(), v.end());
      }
      if (!alias) out = fresh(t.blocks[i].layers[j].out.elements());
      values[j] = std::move(out);
      report.ops.push_back(l.id);
      ++step;
    }
    current = b.layers.empty() ? block_input : values.back();
    if (b.pool) {
      use(current);
      current = fresh(t.blocks[i].output.elements());
      report.ops.push_back("b" + std::to_string(i) + ".pool");
      ++step;
    }
  }
  for (size_t j = 0; j < arch.classifier.layers.size(); ++j) {
    const Layer& l = arch.classifier.layers[j];
    use(current);
    if (l.kind() != LayerKind::kRelu) current = fresh(t.classifier[j].out.elements());
    report.ops.push_back(l.id);
    ++step;
  }
  // The network output stays live through the last op.
  step = std::max(step - 1, 0);
  use(current);

  const int steps = std::max<int>(static_cast<int>(report.ops.size()), 1);
  report.live_elements.assign(steps, 0);
  for (const auto& b : buffers)
    for (int s = b.start; s <= b.end && s < steps; ++s) report.live_elements[s] += b.size;
  const auto peak = std::max_element(report.live_elements.begin(), report.live_elements.end());
  report.peak_elements = *peak;
  const size_t peak_step = static_cast<size_t>(peak - report.live_elements.begin());
  report.peak_op = peak_step < report.ops.size() ? report.ops[peak_step] : "input";
  return report;
}

}  // namespace splitforge
