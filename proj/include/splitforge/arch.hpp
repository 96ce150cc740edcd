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
#include <variant>
#include <vector>

#include "json.hpp"

namespace splitforge {

struct Hw {
  int h = 1;
  int w = 1;
  friend bool operator==(const Hw&, const Hw&) = default;
};

// Per-sample feature-map shape (channels, height, width).
struct Shape3 {
  int c = 0;
  int h = 0;
  int w = 0;
  int64_t elements() const { return int64_t{c} * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string ToString(const Shape3& s);

enum class PoolMode { kMax, kAvg };

struct PoolSpec {
  PoolMode mode = PoolMode::kMax;
  Hw window{2, 2};
  Hw stride{2, 2};
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

struct ConvParams {
  int out_channels = 0;
  Hw kernel{3, 3};
  Hw stride{1, 1};
  Hw padding{1, 1};
  int groups = 1;
  bool bias = false;
  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct ReluParams {
  friend bool operator==(const ReluParams&, const ReluParams&) = default;
};
struct ConcatParams {
  friend bool operator==(const ConcatParams&, const ConcatParams&) = default;
};
struct SliceParams {
  int start = 0;
  int length = 0;
  friend bool operator==(const SliceParams&, const SliceParams&) = default;
};
struct ResidualAddParams {
  friend bool operator==(const ResidualAddParams&, const ResidualAddParams&) = default;
};
struct DenseParams {
  int out_features = 0;
  bool bias = false;
  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

enum class LayerKind { kConv, kRelu, kPool, kConcat, kChannelSlice, kResidualAdd, kDense };

// Where a layer sits in a transformed block. Untransformed layers are kBody.
enum class LayerRole {
  kBody,
  kBranchInput,   // channel slice feeding a branch
  kFusionPool,    // per-branch pooling of a fusion block
  kFusionConcat,
  kFusionConv,    // 1x1 conv restoring the block's channel count
  kFusionRelu,
  kMerge,         // final concat of naive/shared/ideal branches
};

using LayerParams = std::variant<ConvParams, ReluParams, PoolSpec, ConcatParams, SliceParams,
                                 ResidualAddParams, DenseParams>;

inline constexpr int kBlockInput = -1;

struct Layer {
  std::string id;
  LayerParams params;
  // Producers inside the block; kBlockInput refers to the block's input.
  std::vector<int> inputs;
  // Transform bookkeeping: branch index, index of the source layer in the
  // untransformed block, and which 1/K channel group of that layer's output
  // this layer produces.
  int branch = -1;
  int origin = -1;
  int group = -1;
  LayerRole role = LayerRole::kBody;

  LayerKind kind() const { return static_cast<LayerKind>(params.index()); }
  template <class P>
  const P& as() const { return std::get<P>(params); }
  template <class P>
  P& as() { return std::get<P>(params); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct Block {
  std::vector<Layer> layers;
  std::optional<PoolSpec> pool;
  bool pool_free = false;
  // Branch count after a split transform; 0 for untransformed blocks.
  int factor = 0;

  friend bool operator==(const Block&, const Block&) = default;
};

struct ClassifierSpec {
  // Dense and relu layers applied in order to the flattened block output.
  std::vector<Layer> layers;
  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

enum class TransformTag { kNone, kProposed, kIdeal, kNaive, kShared };

struct Architecture {
  std::string name;
  Shape3 input_shape;
  std::vector<Block> blocks;
  ClassifierSpec classifier;
  TransformTag transform = TransformTag::kNone;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

const char* LayerKindName(LayerKind kind);
const char* LayerRoleName(LayerRole role);
const char* TransformTagName(TransformTag tag);
const char* PoolModeName(PoolMode mode);

// Layer factories with the default ("same" padding) conventions.
Layer MakeConv(std::string id, int out_channels, int kernel = 3, int stride = 1, int groups = 1,
               bool bias = false);
Layer MakeRelu(std::string id);
Layer MakePool(std::string id, PoolMode mode, int window, int stride);
Layer MakeDense(std::string id, int out_features, bool bias = false);

// ---------------------------------------------------------------------------
// Shape inference and validation

struct LayerShapes {
  std::vector<Shape3> in;
  Shape3 out;
};

struct BlockShapes {
  Shape3 input;
  std::vector<LayerShapes> layers;
  Shape3 body_output;  // before the block pool
  Shape3 output;       // after the block pool
};

struct ShapeTable {
  std::vector<BlockShapes> blocks;
  std::vector<LayerShapes> classifier;
  int64_t classifier_input = 0;
  int classes = 0;
};

struct Issue {
  std::string path;
  std::string message;
};

struct ValidationReport {
  std::vector<Issue> issues;
  bool ok() const { return issues.empty(); }
  std::string Summary() const;
};

// Throws Error(kValidation) naming the offending layer(s).
ShapeTable InferShapes(const Architecture& arch);
ValidationReport Validate(const Architecture& arch);

Shape3 ConvOutput(const Shape3& in, const ConvParams& p);
Shape3 PoolOutput(const Shape3& in, const PoolSpec& p);

int CountConvLayers(const Architecture& arch);

// ---------------------------------------------------------------------------
// Config documents

// Throws Error(kParse) with a path to the offending field, or
// Error(kValidation) when the parsed architecture has shape issues.
Architecture ParseArchitecture(const nlohmann::json& doc);
Architecture ParseArchitectureText(std::string_view text);
nlohmann::json SerializeArchitecture(const Architecture& arch);
std::string SerializeArchitectureText(const Architecture& arch);

// ---------------------------------------------------------------------------
// Reference architectures

Architecture Vgg16Cifar();
Architecture Resnet18Cifar();
// Two 3x3 conv layers L0 -> L1 -> L2 on a 32x32 input, one 2x2 pool, 10-way head.
Architecture TwoLayerDemo(int l0, int l1, int l2);

struct NamedArchitecture {
  std::string name;
  Architecture arch;
};
std::vector<NamedArchitecture> BuiltinArchitectures();
// Accepts vgg16_cifar, resnet18_cifar, two_layer_demo or two_layer_demo(L0,L1,L2).
Architecture BuiltinByName(std::string_view name);

}  // namespace splitforge
