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

#include <set>

#include "splitforge/arch.hpp"
#include "splitforge/error.hpp"

namespace splitforge {

using nlohmann::json;

namespace {

// Walks a JSON object, tracking the path for error messages and rejecting
// fields that were never read.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) Fail(path_, "expected an object");
  }

  [[noreturn]] static void Fail(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::kParse, (path.empty() ? std::string("<root>") : path) + ": " + what);
  }

  std::string Path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool Has(const std::string& key) {
    known_.insert(key);
    return j_.contains(key);
  }

  const json& Get(const std::string& key) {
    if (!Has(key)) Fail(Path(key), "missing required field");
    return j_.at(key);
  }

  std::string String(const std::string& key) {
    const json& v = Get(key);
    if (!v.is_string()) Fail(Path(key), "expected a string");
    return v.get<std::string>();
  }

  std::string String(const std::string& key, const std::string& fallback) {
    return Has(key) ? String(key) : fallback;
  }

  int Int(const std::string& key) { return AsInt(Get(key), Path(key)); }
  int Int(const std::string& key, int fallback) { return Has(key) ? Int(key) : fallback; }

  bool Bool(const std::string& key, bool fallback) {
    if (!Has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) Fail(Path(key), "expected a boolean");
    return v.get<bool>();
  }

  // Accepts n or [h, w].
  Hw Pair(const std::string& key, Hw fallback) {
    if (!Has(key)) return fallback;
    return AsPair(j_.at(key), Path(key));
  }

  void Finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!known_.count(it.key())) Fail(Path(it.key()), "unknown field");
    }
  }

  static int AsInt(const json& v, const std::string& path) {
    if (!v.is_number_integer()) Fail(path, "expected an integer");
    const auto x = v.get<int64_t>();
    if (x < -(int64_t{1} << 30) || x > (int64_t{1} << 30)) Fail(path, "integer out of range");
    return static_cast<int>(x);
  }

  static Hw AsPair(const json& v, const std::string& path) {
    if (v.is_number_integer()) {
      int x = AsInt(v, path);
      return {x, x};
    }
    if (!v.is_array() || v.size() != 2) Fail(path, "expected an integer or [h, w]");
    return {AsInt(v[0], path + "[0]"), AsInt(v[1], path + "[1]")};
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

void RequirePositive(const Hw& v, const std::string& path) {
  if (v.h <= 0 || v.w <= 0) ObjectReader::Fail(path, "must be positive");
}

PoolSpec ReadPool(ObjectReader& r, const std::string& path) {
  PoolSpec p;
  const std::string mode = r.String("mode", "max");
  if (mode == "max") {
    p.mode = PoolMode::kMax;
  } else if (mode == "avg") {
    p.mode = PoolMode::kAvg;
  } else {
    ObjectReader::Fail(r.Path("mode"), "expected 'max' or 'avg'");
  }
  p.window = r.Pair("window", {2, 2});
  p.stride = r.Pair("stride", p.window);
  RequirePositive(p.window, path + ".window");
  RequirePositive(p.stride, path + ".stride");
  return p;
}

PoolSpec ParsePoolObject(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  PoolSpec p = ReadPool(r, path);
  r.Finish();
  return p;
}

LayerRole ParseRole(const std::string& s, const std::string& path) {
  for (LayerRole r : {LayerRole::kBody, LayerRole::kBranchInput, LayerRole::kFusionPool,
                      LayerRole::kFusionConcat, LayerRole::kFusionConv, LayerRole::kFusionRelu,
                      LayerRole::kMerge}) {
    if (s == LayerRoleName(r)) return r;
  }
  ObjectReader::Fail(path, "unknown role '" + s + "'");
}

Layer ParseLayer(const json& j, const std::string& path, const std::string& default_id,
                 int default_input, bool in_classifier) {
  ObjectReader r(j, path);
  Layer l;
  const std::string type = r.String("type");
  l.id = r.String("id", default_id);
  if (type == "conv") {
    ConvParams p;
    p.out_channels = r.Int("out_channels");
    if (p.out_channels <= 0) ObjectReader::Fail(r.Path("out_channels"), "must be positive");
    p.kernel = r.Pair("kernel", {3, 3});
    RequirePositive(p.kernel, r.Path("kernel"));
    p.stride = r.Pair("stride", {1, 1});
    RequirePositive(p.stride, r.Path("stride"));
    const Hw same{(p.kernel.h - 1) / 2, (p.kernel.w - 1) / 2};
    if (r.Has("padding") && j.at("padding").is_string()) {
      if (j.at("padding").get<std::string>() != "same" || p.kernel.h % 2 == 0 ||
          p.kernel.w % 2 == 0) {
        ObjectReader::Fail(r.Path("padding"), "string padding must be 'same' with an odd kernel");
      }
      p.padding = same;
    } else {
      p.padding = r.Pair("padding", same);
    }
    if (p.padding.h < 0 || p.padding.w < 0)
      ObjectReader::Fail(r.Path("padding"), "must be non-negative");
    p.groups = r.Int("groups", 1);
    if (p.groups < 1) ObjectReader::Fail(r.Path("groups"), "must be at least 1");
    p.bias = r.Bool("bias", false);
    l.params = p;
  } else if (type == "relu") {
    l.params = ReluParams{};
  } else if (type == "pool") {
    l.params = ReadPool(r, path);
  } else if (type == "concat") {
    l.params = ConcatParams{};
  } else if (type == "channel_slice") {
    SliceParams p;
    p.start = r.Int("start");
    if (p.start < 0) ObjectReader::Fail(r.Path("start"), "must be non-negative");
    p.length = r.Int("length");
    if (p.length <= 0) ObjectReader::Fail(r.Path("length"), "must be positive");
    l.params = p;
  } else if (type == "residual_add") {
    l.params = ResidualAddParams{};
  } else if (type == "dense") {
    DenseParams p;
    p.out_features = r.Int("out_features");
    if (p.out_features <= 0) ObjectReader::Fail(r.Path("out_features"), "must be positive");
    p.bias = r.Bool("bias", false);
    l.params = p;
  } else {
    ObjectReader::Fail(r.Path("type"), "unknown layer type '" + type + "'");
  }
  if (in_classifier) {
    if (l.kind() != LayerKind::kDense && l.kind() != LayerKind::kRelu)
      ObjectReader::Fail(r.Path("type"), "classifier accepts dense and relu layers only");
  } else {
    if (l.kind() == LayerKind::kDense)
      ObjectReader::Fail(r.Path("type"), "dense layers belong in the classifier");
    if (r.Has("inputs")) {
      const json& in = j.at("inputs");
      if (!in.is_array()) ObjectReader::Fail(r.Path("inputs"), "expected an array");
      for (size_t k = 0; k < in.size(); ++k)
        l.inputs.push_back(
            ObjectReader::AsInt(in[k], r.Path("inputs") + "[" + std::to_string(k) + "]"));
    } else {
      if (l.kind() == LayerKind::kConcat || l.kind() == LayerKind::kResidualAdd)
        ObjectReader::Fail(r.Path("inputs"), "required for multi-input layers");
      l.inputs = {default_input};
    }
    l.branch = r.Int("branch", -1);
    l.origin = r.Int("origin", -1);
    l.group = r.Int("group", -1);
    if (r.Has("role")) l.role = ParseRole(r.String("role"), r.Path("role"));
  }
  r.Finish();
  return l;
}

TransformTag ParseTransformTag(const std::string& s, const std::string& path) {
  for (TransformTag t : {TransformTag::kNone, TransformTag::kProposed, TransformTag::kIdeal,
                         TransformTag::kNaive, TransformTag::kShared}) {
    if (s == TransformTagName(t)) return t;
  }
  ObjectReader::Fail(path, "unknown transform '" + s + "'");
}

json PairJson(const Hw& v) { return json::array({v.h, v.w}); }

json PoolJson(const PoolSpec& p) {
  return json{{"mode", PoolModeName(p.mode)},
              {"window", PairJson(p.window)},
              {"stride", PairJson(p.stride)}};
}

json LayerJson(const Layer& l, bool in_classifier) {
  json j;
  j["type"] = LayerKindName(l.kind());
  j["id"] = l.id;
  switch (l.kind()) {
    case LayerKind::kConv: {
      const auto& p = l.as<ConvParams>();
      j["out_channels"] = p.out_channels;
      j["kernel"] = PairJson(p.kernel);
      j["stride"] = PairJson(p.stride);
      j["padding"] = PairJson(p.padding);
      j["groups"] = p.groups;
      j["bias"] = p.bias;
      break;
    }
    case LayerKind::kPool: {
      const auto pj = PoolJson(l.as<PoolSpec>());
      for (auto it = pj.begin(); it != pj.end(); ++it) j[it.key()] = it.value();
      break;
    }
    case LayerKind::kChannelSlice:
      j["start"] = l.as<SliceParams>().start;
      j["length"] = l.as<SliceParams>().length;
      break;
    case LayerKind::kDense:
      j["out_features"] = l.as<DenseParams>().out_features;
      j["bias"] = l.as<DenseParams>().bias;
      break;
    default:
      break;
  }
  if (!in_classifier) {
    j["inputs"] = l.inputs;
    if (l.branch != -1) j["branch"] = l.branch;
    if (l.origin != -1) j["origin"] = l.origin;
    if (l.group != -1) j["group"] = l.group;
    if (l.role != LayerRole::kBody) j["role"] = LayerRoleName(l.role);
  }
  return j;
}

}  // namespace

Architecture ParseArchitecture(const json& doc) {
  ObjectReader r(doc, "");
  Architecture arch;
  arch.name = r.String("name");

  const json& shape = r.Get("input_shape");
  if (!shape.is_array() || shape.size() != 3)
    ObjectReader::Fail("input_shape", "expected [c, h, w]");
  arch.input_shape = {ObjectReader::AsInt(shape[0], "input_shape[0]"),
                      ObjectReader::AsInt(shape[1], "input_shape[1]"),
                      ObjectReader::AsInt(shape[2], "input_shape[2]")};
  if (arch.input_shape.c <= 0 || arch.input_shape.h <= 0 || arch.input_shape.w <= 0)
    ObjectReader::Fail("input_shape", "must be positive");

  const json& blocks = r.Get("blocks");
  if (!blocks.is_array()) ObjectReader::Fail("blocks", "expected an array");
  for (size_t i = 0; i < blocks.size(); ++i) {
    const std::string bpath = "blocks[" + std::to_string(i) + "]";
    ObjectReader br(blocks[i], bpath);
    Block b;
    const json& layers = br.Get("layers");
    if (!layers.is_array()) ObjectReader::Fail(bpath + ".layers", "expected an array");
    for (size_t k = 0; k < layers.size(); ++k) {
      b.layers.push_back(ParseLayer(layers[k], bpath + ".layers[" + std::to_string(k) + "]",
                                    "b" + std::to_string(i) + ".l" + std::to_string(k),
                                    static_cast<int>(k) - 1, false));
    }
    if (br.Has("pool") && !blocks[i].at("pool").is_null())
      b.pool = ParsePoolObject(blocks[i].at("pool"), bpath + ".pool");
    b.pool_free = br.Bool("pool_free", false);
    b.factor = br.Int("factor", 0);
    if (b.factor < 0) ObjectReader::Fail(bpath + ".factor", "must be non-negative");
    if (!b.pool && !b.pool_free && b.factor == 0)
      ObjectReader::Fail(bpath, "block needs a pool or \"pool_free\": true");
    br.Finish();
    arch.blocks.push_back(std::move(b));
  }

  ObjectReader cr(r.Get("classifier"), "classifier");
  const json& cl = cr.Get("layers");
  if (!cl.is_array()) ObjectReader::Fail("classifier.layers", "expected an array");
  for (size_t k = 0; k < cl.size(); ++k) {
    arch.classifier.layers.push_back(ParseLayer(cl[k],
                                                "classifier.layers[" + std::to_string(k) + "]",
                                                "fc" + std::to_string(k), -1, true));
  }
  cr.Finish();

  if (r.Has("transform")) arch.transform = ParseTransformTag(r.String("transform"), "transform");
  r.Finish();

  const ValidationReport report = Validate(arch);
  if (!report.ok()) throw Error(ErrorCode::kValidation, report.Summary());
  return arch;
}

Architecture ParseArchitectureText(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("<root>: malformed JSON: ") + e.what());
  }
  return ParseArchitecture(doc);
}

json SerializeArchitecture(const Architecture& arch) {
  json j;
  j["name"] = arch.name;
  j["input_shape"] = json::array({arch.input_shape.c, arch.input_shape.h, arch.input_shape.w});
  json blocks = json::array();
  for (const auto& b : arch.blocks) {
    json bj;
    json layers = json::array();
    for (const auto& l : b.layers) layers.push_back(LayerJson(l, false));
    bj["layers"] = std::move(layers);
    if (b.pool) bj["pool"] = PoolJson(*b.pool);
    if (b.pool_free) bj["pool_free"] = true;
    if (b.factor != 0) bj["factor"] = b.factor;
    blocks.push_back(std::move(bj));
  }
  j["blocks"] = std::move(blocks);
  json cl = json::array();
  for (const auto& l : arch.classifier.layers) cl.push_back(LayerJson(l, true));
  j["classifier"] = json{{"layers", std::move(cl)}};
  if (arch.transform != TransformTag::kNone) j["transform"] = TransformTagName(arch.transform);
  return j;
}

std::string SerializeArchitectureText(const Architecture& arch) {
  return SerializeArchitecture(arch).dump(2) + "\n";
}

}  // namespace splitforge
