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

#include "splitforge/arch.hpp"

#include <set>
#include <sstream>

#include "splitforge/error.hpp"

namespace splitforge {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kValidation: return "ValidationError";
    case ErrorCode::kNonDivisible: return "NonDivisible";
    case ErrorCode::kPlanLengthMismatch: return "PlanLengthMismatch";
    case ErrorCode::kUnresolvableWiring: return "UnresolvableWiring";
    case ErrorCode::kSharedDepthTooLarge: return "SharedDepthTooLarge";
    case ErrorCode::kUnsupported: return "Unsupported";
    case ErrorCode::kAlreadyTransformed: return "AlreadyTransformed";
    case ErrorCode::kNotASplitArchitecture: return "NotASplitArchitecture";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kScheduleInvalid: return "ScheduleInvalid";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEvaluatorFailure: return "EvaluatorFailure";
    case ErrorCode::kMissingCell: return "MissingCell";
    case ErrorCode::kNonZeroExit: return "NonZeroExit";
    case ErrorCode::kUnparseableOutput: return "UnparseableOutput";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kBadLength: return "BadLength";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kIo: return "IoError";
  }
  return "Error";
}

std::string ToString(const Shape3& s) {
  std::ostringstream os;
  os << s.c << "x" << s.h << "x" << s.w;
  return os.str();
}

const char* LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kPool: return "pool";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kChannelSlice: return "channel_slice";
    case LayerKind::kResidualAdd: return "residual_add";
    case LayerKind::kDense: return "dense";
  }
  return "?";
}

const char* LayerRoleName(LayerRole role) {
  switch (role) {
    case LayerRole::kBody: return "body";
    case LayerRole::kBranchInput: return "branch_input";
    case LayerRole::kFusionPool: return "fusion_pool";
    case LayerRole::kFusionConcat: return "fusion_concat";
    case LayerRole::kFusionConv: return "fusion_conv";
    case LayerRole::kFusionRelu: return "fusion_relu";
    case LayerRole::kMerge: return "merge";
  }
  return "?";
}

const char* TransformTagName(TransformTag tag) {
  switch (tag) {
    case TransformTag::kNone: return "none";
    case TransformTag::kProposed: return "proposed";
    case TransformTag::kIdeal: return "ideal";
    case TransformTag::kNaive: return "naive";
    case TransformTag::kShared: return "shared";
  }
  return "?";
}

const char* PoolModeName(PoolMode mode) { return mode == PoolMode::kMax ? "max" : "avg"; }

Layer MakeConv(std::string id, int out_channels, int kernel, int stride, int groups, bool bias) {
  ConvParams p;
  p.out_channels = out_channels;
  p.kernel = {kernel, kernel};
  p.stride = {stride, stride};
  p.padding = {(kernel - 1) / 2, (kernel - 1) / 2};
  p.groups = groups;
  p.bias = bias;
  return Layer{std::move(id), p, {}};
}

Layer MakeRelu(std::string id) { return Layer{std::move(id), ReluParams{}, {}}; }

Layer MakePool(std::string id, PoolMode mode, int window, int stride) {
  return Layer{std::move(id), PoolSpec{mode, {window, window}, {stride, stride}}, {}};
}

Layer MakeDense(std::string id, int out_features, bool bias) {
  return Layer{std::move(id), DenseParams{out_features, bias}, {}};
}

Shape3 ConvOutput(const Shape3& in, const ConvParams& p) {
  return {p.out_channels, (in.h + 2 * p.padding.h - p.kernel.h) / p.stride.h + 1,
          (in.w + 2 * p.padding.w - p.kernel.w) / p.stride.w + 1};
}

Shape3 PoolOutput(const Shape3& in, const PoolSpec& p) {
  return {in.c, (in.h - p.window.h) / p.stride.h + 1, (in.w - p.window.w) / p.stride.w + 1};
}

std::string ValidationReport::Summary() const {
  std::ostringstream os;
  for (size_t i = 0; i < issues.size(); ++i) {
    if (i) os << "; ";
    os << issues[i].path << ": " << issues[i].message;
  }
  return os.str();
}

int CountConvLayers(const Architecture& arch) {
  int n = 0;
  for (const auto& b : arch.blocks)
    for (const auto& l : b.layers) n += l.kind() == LayerKind::kConv;
  return n;
}

namespace {

bool Positive(const Hw& v) { return v.h > 0 && v.w > 0; }

class Analyzer {
 public:
  explicit Analyzer(const Architecture& arch) : arch_(arch) {}

  ShapeTable Run() {
    if (arch_.input_shape.c <= 0 || arch_.input_shape.h <= 0 || arch_.input_shape.w <= 0)
      Report("input_shape", "input shape must be positive");
    if (arch_.blocks.empty()) Report("blocks", "architecture has no blocks");
    CheckIds();

    std::optional<Shape3> cur = arch_.input_shape;
    for (size_t i = 0; i < arch_.blocks.size(); ++i) {
      if (!cur) break;
      cur = RunBlock(i, *cur);
    }
    if (cur) RunClassifier(*cur);
    return table_;
  }

  std::vector<Issue> issues;

 private:
  void Report(std::string path, std::string message) {
    issues.push_back({std::move(path), std::move(message)});
  }

  static std::string LayerPath(size_t block, size_t layer, const Layer& l) {
    std::ostringstream os;
    os << "blocks[" << block << "].layers[" << layer << "] (" << l.id << ")";
    return os.str();
  }

  void CheckIds() {
    std::set<std::string> seen;
    auto check = [&](const Layer& l, const std::string& path) {
      if (l.id.empty()) {
        Report(path, "layer id is empty");
      } else if (!seen.insert(l.id).second) {
        Report(path, "duplicate layer id '" + l.id + "'");
      }
    };
    for (size_t i = 0; i < arch_.blocks.size(); ++i)
      for (size_t j = 0; j < arch_.blocks[i].layers.size(); ++j)
        check(arch_.blocks[i].layers[j],
              "blocks[" + std::to_string(i) + "].layers[" + std::to_string(j) + "]");
    for (size_t j = 0; j < arch_.classifier.layers.size(); ++j)
      check(arch_.classifier.layers[j], "classifier.layers[" + std::to_string(j) + "]");
  }

  std::optional<Shape3> RunBlock(size_t bi, const Shape3& input) {
    const Block& block = arch_.blocks[bi];
    const std::string bpath = "blocks[" + std::to_string(bi) + "]";
    BlockShapes bs;
    bs.input = input;
    const size_t n = block.layers.size();
    std::vector<std::optional<Shape3>> outs(n);
    std::vector<int> uses(n, 0);
    bool complete = true;

    for (size_t j = 0; j < n; ++j) {
      const Layer& l = block.layers[j];
      const std::string path = LayerPath(bi, j, l);
      LayerShapes ls;
      bool ok = true;
      if (l.inputs.empty()) {
        Report(path, "layer has no inputs");
        ok = false;
      }
      std::vector<std::string> producers;
      for (int src : l.inputs) {
        if (src < kBlockInput || src >= static_cast<int>(j)) {
          Report(path, "input index " + std::to_string(src) + " must refer to an earlier layer");
          ok = false;
          continue;
        }
        if (src == kBlockInput) {
          ls.in.push_back(input);
          producers.push_back("block input");
          continue;
        }
        ++uses[src];
        if (!outs[src]) {
          ok = false;
          continue;
        }
        ls.in.push_back(*outs[src]);
        producers.push_back(block.layers[src].id);
      }
      if (ok) {
        auto out = LayerOutput(l, ls.in, producers, path);
        if (out) {
          ls.out = *out;
          outs[j] = out;
        }
      }
      if (!outs[j]) complete = false;
      bs.layers.push_back(std::move(ls));
    }
    for (size_t j = 0; j + 1 < n; ++j) {
      if (uses[j] == 0) Report(LayerPath(bi, j, block.layers[j]), "layer output is never used");
    }
    if (!complete) {
      table_.blocks.push_back(std::move(bs));
      return std::nullopt;
    }
    bs.body_output = n ? *outs[n - 1] : input;
    bs.output = bs.body_output;
    if (block.pool && block.pool_free) Report(bpath, "block has a pool but is marked pool_free");
    if (block.pool) {
      if (!Positive(block.pool->window) || !Positive(block.pool->stride)) {
        Report(bpath + ".pool", "pool window and stride must be positive");
        table_.blocks.push_back(std::move(bs));
        return std::nullopt;
      }
      bs.output = PoolOutput(bs.body_output, *block.pool);
      if (bs.output.h < 1 || bs.output.w < 1) {
        Report(bpath + ".pool", "pool window larger than input " + ToString(bs.body_output));
        table_.blocks.push_back(std::move(bs));
        return std::nullopt;
      }
    } else if (!block.pool_free && block.factor == 0) {
      Report(bpath, "block must end with a pool or be marked pool_free");
    }
    if (block.factor < 0) Report(bpath, "factor must be non-negative");
    const Shape3 out = bs.output;
    table_.blocks.push_back(std::move(bs));
    return out;
  }

  std::optional<Shape3> LayerOutput(const Layer& l, const std::vector<Shape3>& in,
                                    const std::vector<std::string>& producers,
                                    const std::string& path) {
    auto arity = [&](size_t expected) {
      if (in.size() != expected) {
        Report(path, std::string(LayerKindName(l.kind())) + " expects " +
                         std::to_string(expected) + " input(s), got " +
                         std::to_string(in.size()));
        return false;
      }
      return true;
    };
    switch (l.kind()) {
      case LayerKind::kConv: {
        if (!arity(1)) return std::nullopt;
        const auto& p = l.as<ConvParams>();
        bool ok = true;
        if (p.out_channels <= 0) {
          Report(path, "out_channels must be positive");
          ok = false;
        }
        if (!Positive(p.kernel) || !Positive(p.stride) || p.padding.h < 0 || p.padding.w < 0) {
          Report(path, "kernel and stride must be positive, padding non-negative");
          ok = false;
        }
        if (p.groups < 1) {
          Report(path, "groups must be at least 1");
          ok = false;
        } else if (p.out_channels > 0 &&
                   (in[0].c % p.groups != 0 || p.out_channels % p.groups != 0)) {
          Report(path, "groups must divide channels (groups=" + std::to_string(p.groups) +
                           ", in=" + std::to_string(in[0].c) +
                           ", out=" + std::to_string(p.out_channels) + ")");
          ok = false;
        }
        if (!ok) return std::nullopt;
        Shape3 out = ConvOutput(in[0], p);
        if (out.h < 1 || out.w < 1) {
          Report(path, "conv output is empty for input " + ToString(in[0]));
          return std::nullopt;
        }
        return out;
      }
      case LayerKind::kRelu:
        if (!arity(1)) return std::nullopt;
        return in[0];
      case LayerKind::kPool: {
        if (!arity(1)) return std::nullopt;
        const auto& p = l.as<PoolSpec>();
        if (!Positive(p.window) || !Positive(p.stride)) {
          Report(path, "pool window and stride must be positive");
          return std::nullopt;
        }
        Shape3 out = PoolOutput(in[0], p);
        if (out.h < 1 || out.w < 1) {
          Report(path, "pool window larger than input " + ToString(in[0]));
          return std::nullopt;
        }
        return out;
      }
      case LayerKind::kConcat: {
        if (in.empty()) {
          Report(path, "concat needs at least one input");
          return std::nullopt;
        }
        Shape3 out = in[0];
        out.c = 0;
        for (size_t k = 0; k < in.size(); ++k) {
          if (in[k].h != in[0].h || in[k].w != in[0].w) {
            Report(path, "concat spatial mismatch between '" + producers[0] + "' (" +
                             ToString(in[0]) + ") and '" + producers[k] + "' (" +
                             ToString(in[k]) + ")");
            return std::nullopt;
          }
          out.c += in[k].c;
        }
        return out;
      }
      case LayerKind::kChannelSlice: {
        if (!arity(1)) return std::nullopt;
        const auto& p = l.as<SliceParams>();
        if (p.start < 0 || p.length <= 0 || p.start + p.length > in[0].c) {
          Report(path, "channel slice [" + std::to_string(p.start) + ", " +
                           std::to_string(p.start + p.length) + ") out of range for " +
                           ToString(in[0]));
          return std::nullopt;
        }
        return Shape3{p.length, in[0].h, in[0].w};
      }
      case LayerKind::kResidualAdd:
        if (!arity(2)) return std::nullopt;
        if (!(in[0] == in[1])) {
          Report(path, "shortcut shape mismatch: '" + producers[0] + "' is " + ToString(in[0]) +
                           " but '" + producers[1] + "' is " + ToString(in[1]));
          return std::nullopt;
        }
        return in[0];
      case LayerKind::kDense:
        Report(path, "dense layer inside a block");
        return std::nullopt;
    }
    return std::nullopt;
  }

  void RunClassifier(const Shape3& feature) {
    int64_t width = feature.elements();
    table_.classifier_input = width;
    Shape3 cur{static_cast<int>(width), 1, 1};
    for (size_t j = 0; j < arch_.classifier.layers.size(); ++j) {
      const Layer& l = arch_.classifier.layers[j];
      const std::string path = "classifier.layers[" + std::to_string(j) + "] (" + l.id + ")";
      LayerShapes ls;
      ls.in.push_back(cur);
      if (l.kind() == LayerKind::kDense) {
        const auto& p = l.as<DenseParams>();
        if (p.out_features <= 0) {
          Report(path, "out_features must be positive");
          return;
        }
        cur = Shape3{p.out_features, 1, 1};
      } else if (l.kind() != LayerKind::kRelu) {
        Report(path, std::string("classifier accepts dense and relu layers, got ") +
                         LayerKindName(l.kind()));
        return;
      }
      ls.out = cur;
      table_.classifier.push_back(ls);
    }
    table_.classes = cur.c;
  }

  const Architecture& arch_;
  ShapeTable table_;
};

}  // namespace

ShapeTable InferShapes(const Architecture& arch) {
  Analyzer a(arch);
  ShapeTable t = a.Run();
  if (!a.issues.empty()) {
    throw Error(ErrorCode::kValidation, a.issues.front().path + ": " + a.issues.front().message);
  }
  return t;
}

ValidationReport Validate(const Architecture& arch) {
  Analyzer a(arch);
  a.Run();
  return ValidationReport{std::move(a.issues)};
}

}  // namespace splitforge
