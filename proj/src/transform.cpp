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

#include "splitforge/transform.hpp"

#include <algorithm>
#include <map>

#include "splitforge/error.hpp"

namespace splitforge {

using nlohmann::json;

const char* SplitModeName(SplitMode mode) {
  switch (mode) {
    case SplitMode::kProposed: return "proposed";
    case SplitMode::kIdeal: return "ideal";
    case SplitMode::kNaive: return "naive";
    case SplitMode::kShared: return "shared";
  }
  return "?";
}

SplitPlan ParseSplitPlan(const json& doc) {
  auto fail = [](const std::string& path, const std::string& what) -> void {
    throw Error(ErrorCode::kParse, path + ": " + what);
  };
  if (!doc.is_object()) fail("<root>", "expected an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    if (k != "mode" && k != "factors" && k != "shared_depth" && k != "fusion_relu")
      fail(k, "unknown field");
  }
  SplitPlan plan;
  if (!doc.contains("mode") || !doc["mode"].is_string()) fail("mode", "missing or not a string");
  const std::string mode = doc["mode"].get<std::string>();
  if (mode == "proposed") {
    plan.mode = SplitMode::kProposed;
  } else if (mode == "ideal") {
    plan.mode = SplitMode::kIdeal;
  } else if (mode == "naive") {
    plan.mode = SplitMode::kNaive;
  } else if (mode == "shared") {
    plan.mode = SplitMode::kShared;
  } else {
    fail("mode", "unknown mode '" + mode + "'");
  }
  if (!doc.contains("factors") || !doc["factors"].is_array()) fail("factors", "expected an array");
  for (size_t i = 0; i < doc["factors"].size(); ++i) {
    const json& f = doc["factors"][i];
    if (!f.is_number_integer() || f.get<int64_t>() < 1 || f.get<int64_t>() > 1 << 20)
      fail("factors[" + std::to_string(i) + "]", "expected a positive integer");
    plan.factors.push_back(f.get<int>());
  }
  const size_t expected = plan.mode == SplitMode::kIdeal ? 2 : 1;
  if (plan.mode != SplitMode::kProposed && plan.factors.size() != expected)
    fail("factors", std::string("mode ") + mode + " takes " + std::to_string(expected) +
                        " factor(s)");
  if (doc.contains("shared_depth")) {
    if (plan.mode != SplitMode::kShared) fail("shared_depth", "only valid for mode shared");
    if (!doc["shared_depth"].is_number_integer() || doc["shared_depth"].get<int64_t>() < 0)
      fail("shared_depth", "expected a non-negative integer");
    plan.shared_depth = doc["shared_depth"].get<int>();
  } else if (plan.mode == SplitMode::kShared) {
    fail("shared_depth", "missing required field");
  }
  if (doc.contains("fusion_relu")) {
    if (!doc["fusion_relu"].is_boolean()) fail("fusion_relu", "expected a boolean");
    plan.fusion_relu = doc["fusion_relu"].get<bool>();
  }
  return plan;
}

SplitPlan ParseSplitPlanText(std::string_view text) {
  try {
    return ParseSplitPlan(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("<root>: malformed JSON: ") + e.what());
  }
}

json SerializeSplitPlan(const SplitPlan& plan) {
  json j{{"mode", SplitModeName(plan.mode)}, {"factors", plan.factors}};
  if (plan.mode == SplitMode::kShared) j["shared_depth"] = plan.shared_depth;
  if (plan.fusion_relu) j["fusion_relu"] = true;
  return j;
}

namespace {

std::string CloneId(const std::string& id, int group) { return id + "@" + std::to_string(group); }

std::string BaseId(const std::string& id) { return id.substr(0, id.rfind('@')); }

void RequireUntransformed(const Architecture& arch) {
  if (arch.transform != TransformTag::kNone)
    throw Error(ErrorCode::kAlreadyTransformed,
                "architecture '" + arch.name + "' is already " + TransformTagName(arch.transform) +
                    "-split; nested splits are not supported");
  for (const auto& b : arch.blocks) {
    if (b.factor != 0)
      throw Error(ErrorCode::kAlreadyTransformed, "architecture contains fusion blocks");
  }
}

void RequireFactor(int k) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "splitting factor must be >= 1");
}

[[noreturn]] void NonDivisible(size_t block, const std::string& what, int channels, int k) {
  throw Error(ErrorCode::kNonDivisible, "block " + std::to_string(block + 1) + ", " + what + ": " +
                                            std::to_string(channels) + " channels not divisible by " +
                                            std::to_string(k));
}

// Checks that `layer` can be narrowed to 1/k of its width.
void CheckSplittable(const Layer& l, size_t block, int k) {
  switch (l.kind()) {
    case LayerKind::kConv: {
      const auto& p = l.as<ConvParams>();
      if (p.groups != 1)
        throw Error(ErrorCode::kUnsupported,
                    "layer '" + l.id + "': grouped convolutions cannot be split");
      if (p.out_channels % k != 0) NonDivisible(block, "layer '" + l.id + "'", p.out_channels, k);
      break;
    }
    case LayerKind::kChannelSlice:
      throw Error(ErrorCode::kUnsupported, "layer '" + l.id + "': channel slices cannot be split");
    case LayerKind::kDense:
      throw Error(ErrorCode::kUnsupported, "layer '" + l.id + "': dense layer inside a block");
    default:
      break;
  }
}

// Clone of an original layer as one of k narrow branches.
Layer NarrowClone(const Layer& l, int origin, int branch, int group, int k) {
  Layer c = l;
  c.id = CloneId(l.id, group);
  c.branch = branch;
  c.origin = origin;
  c.group = group;
  c.role = LayerRole::kBody;
  if (c.kind() == LayerKind::kConv) c.as<ConvParams>().out_channels /= k;
  return c;
}

int Push(std::vector<Layer>& layers, Layer l) {
  layers.push_back(std::move(l));
  return static_cast<int>(layers.size()) - 1;
}

Layer PoolLayer(std::string id, const PoolSpec& spec, int input) {
  return Layer{std::move(id), spec, {input}};
}

void CheckResult(const Architecture& out) {
  const ValidationReport r = Validate(out);
  if (!r.ok()) throw Error(ErrorCode::kUnsupported, "split result does not validate: " + r.Summary());
}

// Clones the layers [from, n) of `block` into `out` as branch `b` of k.
// `entry` maps kBlockInput, `prefix` maps indices < from (shared layers).
// Prefix values, and the entry when `entry_full`, carry every channel: convs
// read them whole, other layers read the branch's 1/k channel slice.
// Returns the index of the branch's last value (after the block pool).
int CloneBranchSegment(const Block& block, const BlockShapes& shapes, size_t block_index,
                       size_t from, int b, int k, int entry, bool entry_full,
                       const std::vector<int>& prefix, std::vector<Layer>& out,
                       bool pool_as_fusion) {
  const size_t n = block.layers.size();
  std::vector<int> map(n, -1);
  for (size_t j = 0; j < from; ++j) map[j] = prefix[j];
  std::map<int, int> slices;  // original source -> slice index
  auto slice_of = [&](int src) {
    auto it = slices.find(src);
    if (it != slices.end()) return it->second;
    const int c = src == kBlockInput ? shapes.input.c : shapes.layers[src].out.c;
    const std::string name = src == kBlockInput ? "b" + std::to_string(block_index) + ".slice"
                                                : block.layers[src].id + ".slice";
    if (c % k != 0) NonDivisible(block_index, name, c, k);
    Layer sl{CloneId(name, b), SliceParams{b * (c / k), c / k},
             {src == kBlockInput ? entry : map[src]}};
    sl.branch = b;
    sl.group = b;
    sl.role = LayerRole::kBranchInput;
    const int idx = Push(out, std::move(sl));
    slices.emplace(src, idx);
    return idx;
  };
  int last = from == 0 ? entry : map[from - 1];
  for (size_t j = from; j < n; ++j) {
    Layer c = NarrowClone(block.layers[j], static_cast<int>(j), b, b, k);
    const bool narrow_reader = k > 1 && c.kind() != LayerKind::kConv;
    for (int& src : c.inputs) {
      const bool full = src == kBlockInput ? entry_full : src < static_cast<int>(from);
      if (narrow_reader && full) src = slice_of(src);
      else src = src == kBlockInput ? entry : map[src];
    }
    map[j] = Push(out, std::move(c));
    last = map[j];
  }
  if (block.pool) {
    Layer p = PoolLayer(CloneId("b" + std::to_string(block_index) +
                                    (pool_as_fusion ? ".fuse.pool" : ".pool"),
                                b),
                        *block.pool, last);
    p.branch = b;
    p.group = b;
    p.role = pool_as_fusion ? LayerRole::kFusionPool : LayerRole::kBody;
    last = Push(out, std::move(p));
  }
  return last;
}

}  // namespace

Architecture SplitTransform(const Architecture& arch, const std::vector<int>& factors,
                            bool fusion_relu) {
  RequireUntransformed(arch);
  if (factors.size() != arch.blocks.size())
    throw Error(ErrorCode::kPlanLengthMismatch,
                "plan has " + std::to_string(factors.size()) + " factors for " +
                    std::to_string(arch.blocks.size()) + " blocks");
  const ShapeTable shapes = InferShapes(arch);

  Architecture out;
  out.name = arch.name + "/proposed";
  out.input_shape = arch.input_shape;
  out.classifier = arch.classifier;
  out.transform = TransformTag::kProposed;

  for (size_t i = 0; i < arch.blocks.size(); ++i) {
    const Block& ob = arch.blocks[i];
    const int k = factors[i];
    RequireFactor(k);
    for (const auto& l : ob.layers) CheckSplittable(l, i, k);
    const bool has_conv = std::any_of(ob.layers.begin(), ob.layers.end(), [](const Layer& l) {
      return l.kind() == LayerKind::kConv;
    });
    if (k > 1 && !has_conv)
      throw Error(ErrorCode::kUnsupported,
                  "block " + std::to_string(i + 1) + " has no conv layer to split");
    const int c_in = shapes.blocks[i].input.c;
    const int c_out = shapes.blocks[i].body_output.c;
    if (i > 0 && c_in % k != 0) NonDivisible(i, "block input", c_in, k);

    const std::string p = "b" + std::to_string(i);
    Block nb;
    nb.factor = k;
    std::vector<int> branch_out;
    for (int b = 0; b < k; ++b) {
      int entry = kBlockInput;
      if (i > 0 && k > 1) {
        Layer s{CloneId(p + ".slice", b), SliceParams{b * (c_in / k), c_in / k}, {kBlockInput}};
        s.branch = b;
        s.group = b;
        s.role = LayerRole::kBranchInput;
        entry = Push(nb.layers, std::move(s));
      }
      branch_out.push_back(CloneBranchSegment(ob, shapes.blocks[i], i, 0, b, k, entry, i == 0, {},
                                            nb.layers, true));
    }
    Layer concat{p + ".fuse.concat", ConcatParams{}, branch_out};
    concat.role = LayerRole::kFusionConcat;
    const int ci = Push(nb.layers, std::move(concat));
    Layer fuse = MakeConv(p + ".fuse.conv", c_out, 1);
    fuse.inputs = {ci};
    fuse.role = LayerRole::kFusionConv;
    const int fi = Push(nb.layers, std::move(fuse));
    if (fusion_relu) {
      Layer r = MakeRelu(p + ".fuse.relu");
      r.inputs = {fi};
      r.role = LayerRole::kFusionRelu;
      Push(nb.layers, std::move(r));
    }
    out.blocks.push_back(std::move(nb));
  }
  CheckResult(out);
  return out;
}

Architecture FusedBaseline(const Architecture& arch, bool fusion_relu) {
  return SplitTransform(arch, std::vector<int>(arch.blocks.size(), 1), fusion_relu);
}

Architecture IdealSplit(const Architecture& arch, int k1, int k2) {
  RequireUntransformed(arch);
  RequireFactor(k1);
  RequireFactor(k2);
  InferShapes(arch);
  if (arch.blocks.size() != 1 || CountConvLayers(arch) != 2)
    throw Error(ErrorCode::kInvalidArgument, "ideal split needs a single block with two conv layers");
  const Block& ob = arch.blocks[0];
  const size_t n = ob.layers.size();
  int second = -1;
  for (size_t j = 0; j < n; ++j) {
    const Layer& l = ob.layers[j];
    if (l.inputs != std::vector<int>{static_cast<int>(j) - 1})
      throw Error(ErrorCode::kInvalidArgument, "ideal split needs a sequential layer chain");
    if (l.kind() != LayerKind::kConv && l.kind() != LayerKind::kRelu &&
        l.kind() != LayerKind::kPool)
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("ideal split does not handle ") + LayerKindName(l.kind()) + " layers");
    if (l.kind() == LayerKind::kConv && j > 0) second = static_cast<int>(j);
  }
  if (ob.layers[0].kind() != LayerKind::kConv || second < 0)
    throw Error(ErrorCode::kInvalidArgument, "ideal split needs the first layer to be a conv");
  CheckSplittable(ob.layers[0], 0, k1);
  CheckSplittable(ob.layers[second], 0, k2);
  if (k1 == 1 && k2 == 1) return arch;
  if (k2 % k1 != 0)
    throw Error(ErrorCode::kUnresolvableWiring,
                "k2=" + std::to_string(k2) + " is not a multiple of k1=" + std::to_string(k1) +
                    "; a second-layer branch would read across first-layer branches");

  const int fan = k2 / k1;
  Block nb;
  nb.pool = ob.pool;
  nb.pool_free = ob.pool_free;
  nb.factor = k2;
  std::vector<int> merged;
  for (int a = 0; a < k1; ++a) {
    int last = kBlockInput;
    for (int j = 0; j < second; ++j) {
      Layer c = NarrowClone(ob.layers[j], j, a * fan, a, k1);
      c.inputs = {last};
      last = Push(nb.layers, std::move(c));
    }
    const int first_out = last;
    for (int b = a * fan; b < (a + 1) * fan; ++b) {
      last = first_out;
      for (size_t j = second; j < n; ++j) {
        Layer c = NarrowClone(ob.layers[j], static_cast<int>(j), b, b, k2);
        c.inputs = {last};
        last = Push(nb.layers, std::move(c));
      }
      merged.push_back(last);
    }
  }
  Layer m{"b0.merge", ConcatParams{}, merged};
  m.role = LayerRole::kMerge;
  Push(nb.layers, std::move(m));

  Architecture out;
  out.name = arch.name + "/ideal";
  out.input_shape = arch.input_shape;
  out.blocks.push_back(std::move(nb));
  out.classifier = arch.classifier;
  out.transform = TransformTag::kIdeal;
  CheckResult(out);
  return out;
}

namespace {

// Shared implementation of naive (cut at conv 0) and shared splits.
Architecture SplitFromConv(const Architecture& arch, int cut_conv, int k, TransformTag tag) {
  size_t cut_block = 0, cut_layer = 0;
  int seen = 0;
  bool found = false;
  for (size_t i = 0; i < arch.blocks.size() && !found; ++i) {
    for (size_t j = 0; j < arch.blocks[i].layers.size(); ++j) {
      if (arch.blocks[i].layers[j].kind() != LayerKind::kConv) continue;
      if (seen++ == cut_conv) {
        cut_block = i;
        cut_layer = j;
        found = true;
        break;
      }
    }
  }
  if (!found) throw Error(ErrorCode::kInvalidArgument, "no conv layer at split point");
  const ShapeTable shapes = InferShapes(arch);
  for (size_t i = cut_block; i < arch.blocks.size(); ++i) {
    const auto& layers = arch.blocks[i].layers;
    for (size_t j = i == cut_block ? cut_layer : 0; j < layers.size(); ++j)
      CheckSplittable(layers[j], i, k);
  }

  Architecture out;
  out.name = arch.name + "/" + TransformTagName(tag);
  out.input_shape = arch.input_shape;
  out.classifier = arch.classifier;
  out.transform = tag;
  for (size_t i = 0; i < cut_block; ++i) out.blocks.push_back(arch.blocks[i]);

  Block merged;
  merged.pool_free = true;
  merged.factor = k;
  const Block& first = arch.blocks[cut_block];
  std::vector<int> prefix;
  for (size_t j = 0; j < cut_layer; ++j) prefix.push_back(Push(merged.layers, first.layers[j]));

  std::vector<int> branch_out;
  for (int b = 0; b < k; ++b) {
    int last = CloneBranchSegment(first, shapes.blocks[cut_block], cut_block, cut_layer, b, k,
                                  kBlockInput, true, prefix, merged.layers, false);
    for (size_t i = cut_block + 1; i < arch.blocks.size(); ++i)
      last = CloneBranchSegment(arch.blocks[i], shapes.blocks[i], i, 0, b, k, last, false, {},
                                merged.layers, false);
    branch_out.push_back(last);
  }
  Layer m{"merge", ConcatParams{}, branch_out};
  m.role = LayerRole::kMerge;
  Push(merged.layers, std::move(m));
  out.blocks.push_back(std::move(merged));
  CheckResult(out);
  return out;
}

}  // namespace

Architecture NaiveSplit(const Architecture& arch, int k) {
  RequireUntransformed(arch);
  RequireFactor(k);
  InferShapes(arch);
  if (CountConvLayers(arch) == 0)
    throw Error(ErrorCode::kInvalidArgument, "architecture has no conv layers");
  return SplitFromConv(arch, 0, k, TransformTag::kNaive);
}

Architecture SharedSplit(const Architecture& arch, int shared_depth, int k) {
  RequireUntransformed(arch);
  RequireFactor(k);
  InferShapes(arch);
  const int total = CountConvLayers(arch);
  if (shared_depth < 0) throw Error(ErrorCode::kInvalidArgument, "shared depth must be >= 0");
  if (shared_depth > total)
    throw Error(ErrorCode::kSharedDepthTooLarge,
                "shared depth " + std::to_string(shared_depth) + " exceeds the " +
                    std::to_string(total) + " conv layers");
  if (shared_depth == total) return arch;
  return SplitFromConv(arch, shared_depth, k, TransformTag::kShared);
}

Architecture ApplyPlan(const Architecture& arch, const SplitPlan& plan) {
  switch (plan.mode) {
    case SplitMode::kProposed:
      return SplitTransform(arch, plan.factors, plan.fusion_relu);
    case SplitMode::kIdeal:
      if (plan.factors.size() != 2) throw Error(ErrorCode::kPlanLengthMismatch, "ideal takes (k1, k2)");
      return IdealSplit(arch, plan.factors[0], plan.factors[1]);
    case SplitMode::kNaive:
      if (plan.factors.size() != 1) throw Error(ErrorCode::kPlanLengthMismatch, "naive takes one K");
      return NaiveSplit(arch, plan.factors[0]);
    case SplitMode::kShared:
      if (plan.factors.size() != 1) throw Error(ErrorCode::kPlanLengthMismatch, "shared takes one K");
      return SharedSplit(arch, plan.shared_depth, plan.factors[0]);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown split mode");
}

Architecture RecoverOriginal(const Architecture& split) {
  if (split.transform != TransformTag::kProposed && split.transform != TransformTag::kIdeal)
    throw Error(ErrorCode::kNotASplitArchitecture,
                "expected a proposed or ideal split, got transform '" +
                    std::string(TransformTagName(split.transform)) + "'");
  Architecture out;
  const std::string suffix = std::string("/") + TransformTagName(split.transform);
  out.name = split.name;
  if (out.name.size() > suffix.size() &&
      out.name.compare(out.name.size() - suffix.size(), suffix.size(), suffix) == 0)
    out.name.resize(out.name.size() - suffix.size());
  out.input_shape = split.input_shape;
  out.classifier = split.classifier;

  for (const Block& sb : split.blocks) {
    if (sb.factor < 1) throw Error(ErrorCode::kNotASplitArchitecture, "block without split factor");
    // Copies per origin, and the lowest-group clone standing in for each origin.
    std::map<int, int> copies;
    std::map<int, int> representative;
    std::optional<PoolSpec> fusion_pool;
    for (size_t j = 0; j < sb.layers.size(); ++j) {
      const Layer& l = sb.layers[j];
      if (l.role == LayerRole::kFusionPool && !fusion_pool) fusion_pool = l.as<PoolSpec>();
      if (l.role != LayerRole::kBody) continue;
      if (l.origin < 0) throw Error(ErrorCode::kNotASplitArchitecture, "layer '" + l.id + "' has no origin");
      ++copies[l.origin];
      auto it = representative.find(l.origin);
      if (it == representative.end() || sb.layers[it->second].group > l.group)
        representative[l.origin] = static_cast<int>(j);
    }
    Block ob;
    int expect = 0;
    for (const auto& [origin, idx] : representative) {
      if (origin != expect++)
        throw Error(ErrorCode::kNotASplitArchitecture, "origin indices are not contiguous");
      const Layer& c = sb.layers[idx];
      Layer l = c;
      l.id = BaseId(c.id);
      l.branch = l.origin = l.group = -1;
      if (l.kind() == LayerKind::kConv) l.as<ConvParams>().out_channels *= copies[origin];
      for (int& src : l.inputs) {
        if (src == kBlockInput) continue;
        const Layer& producer = sb.layers[src];
        src = producer.role == LayerRole::kBody ? producer.origin : kBlockInput;
      }
      ob.layers.push_back(std::move(l));
    }
    if (split.transform == TransformTag::kProposed) {
      ob.pool = fusion_pool;
      ob.pool_free = !fusion_pool.has_value();
    } else {
      ob.pool = sb.pool;
      ob.pool_free = sb.pool_free;
    }
    out.blocks.push_back(std::move(ob));
  }
  const ValidationReport r = Validate(out);
  if (!r.ok()) throw Error(ErrorCode::kNotASplitArchitecture, "recovered architecture invalid: " + r.Summary());
  return out;
}

}  // namespace splitforge
