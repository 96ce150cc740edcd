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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "splitforge/oracle.hpp"
#include "test_support.hpp"

namespace splitforge {
namespace {

using testing::CodeOf;
using testing::GradSuiteArchitectures;
using testing::RandomIdealSplit;
using testing::RandomizeWeights;
using testing::RandomProposedSplit;
using testing::SingleConvPool;
using testing::ToyChain;
using testing::ToyResidual;

int64_t Zeros(const Tensor<float>& t) {
  int64_t n = 0;
  for (float v : t.data) n += v == 0.f;
  return n;
}

TEST(Embedding, TwoConvBlockZeroCount) {
  const Architecture s = SplitTransform(ToyChain(3, {{8, 8}}, 8), {2});
  const Embedding e = EmbedBlockDiagonal(s, RandomizeWeights<float>(s, 1));
  EXPECT_EQ(e.report.zero_elements, 288);
  EXPECT_EQ(Zeros(e.weights.at("b0.conv1@0").kernel), 288);
  EXPECT_EQ(Zeros(e.weights.at("b0.conv0@0").kernel), 0);
  EXPECT_EQ(e.report.kernel_elements, 3 * 8 * 9 + 8 * 8 * 9 + 8 * 8);
  EXPECT_DOUBLE_EQ(e.report.zero_fraction, 288.0 / e.report.kernel_elements);
  EXPECT_EQ(e.baseline, FusedBaseline(ToyChain(3, {{8, 8}}, 8)));
}

TEST(Embedding, SquareLayerZeroFraction) {
  for (int k : {2, 4, 8}) {
    const Architecture s = SplitTransform(ToyChain(8, {{16, 16}, {16}}, 8), {k, k});
    const Embedding e = EmbedBlockDiagonal(s, RandomizeWeights<float>(s, k));
    for (const char* id : {"b0.conv1@0", "b1.conv0@0"}) {
      const auto& kern = e.weights.at(id).kernel;
      EXPECT_DOUBLE_EQ(double(Zeros(kern)) / kern.size(), 1.0 - 1.0 / k) << id;
    }
  }
}

TEST(Embedding, PairsAreInjective) {
  const Architecture s = SplitTransform(ToyResidual(), {4, 2});
  const Embedding e = EmbedBlockDiagonal(s, RandomizeWeights<float>(s, 2));
  std::set<std::string> split_ids;
  std::set<std::tuple<std::string, int, int>> slots;
  for (const auto& p : e.report.pairs) {
    EXPECT_TRUE(split_ids.insert(p.split_id).second) << p.split_id;
    EXPECT_TRUE(slots.emplace(p.baseline_id, p.out_offset, p.in_offset).second) << p.split_id;
  }
}

TEST(Embedding, AllOnesIsVerbatimCopy) {
  const Architecture s = SplitTransform(ToyResidual(), {1, 1});
  const WeightStore w = RandomizeWeights<float>(s, 3);
  const Embedding e = EmbedBlockDiagonal(s, w);
  EXPECT_EQ(e.baseline, s);
  EXPECT_EQ(e.weights, w);
  EXPECT_EQ(e.report.zero_elements, 0);
  const auto r = CheckEquivalence<float>(s, w, e.baseline, e.weights, 5, 1, 0.0);
  EXPECT_EQ(r.max_abs_diff, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(Embedding, RejectsNonSplit) {
  const Architecture a = TwoLayerDemo(3, 8, 8);
  EXPECT_EQ(CodeOf([&] { EmbedBlockDiagonal(a, InitWeights(a, 1)); }), ErrorCode::kNotASplitArchitecture);
  const Architecture n = NaiveSplit(a, 2);
  EXPECT_EQ(CodeOf([&] { EmbedBlockDiagonal(n, InitWeights(n, 1)); }), ErrorCode::kNotASplitArchitecture);
}

TEST(Embedding, ProposedEquivalence) {
  std::mt19937 rng(21);
  for (int t = 0; t < 20; ++t) {
    const Architecture s = RandomProposedSplit(rng);
    const WeightStore w = RandomizeWeights<float>(s, t);
    const Embedding e = EmbedBlockDiagonal(s, w);
    const auto r32 = CheckEquivalence<float>(s, w, e.baseline, e.weights, 4, t, 1e-5);
    EXPECT_TRUE(r32.pass) << t << " " << r32.max_abs_diff;
    const auto r64 = CheckEquivalence<double>(s, w, e.baseline, e.weights, 4, t, 1e-10);
    EXPECT_TRUE(r64.pass) << t << " " << r64.max_abs_diff;
  }
}

TEST(Embedding, IdealEquivalence) {
  std::mt19937 rng(22);
  for (int t = 0; t < 20; ++t) {
    const Architecture s = RandomIdealSplit(rng);
    const WeightStore w = RandomizeWeights<float>(s, t);
    const Embedding e = EmbedBlockDiagonal(s, w);
    EXPECT_EQ(e.baseline, RecoverOriginal(s));
    EXPECT_TRUE(CheckEquivalence<float>(s, w, e.baseline, e.weights, 4, t, 1e-5).pass);
    EXPECT_TRUE(CheckEquivalence<double>(s, w, e.baseline, e.weights, 4, t, 1e-10).pass);
  }
}

TEST(CheckEquivalence, DetectsPerturbation) {
  const Architecture s = SplitTransform(ToyChain(3, {{8}, {8}}, 8), {2, 2});
  const WeightStore w = RandomizeWeights<float>(s, 4);
  const Embedding e = EmbedBlockDiagonal(s, w);
  WeightStore bad = e.weights;
  bad.at("b1.conv0@0").kernel.data[0] += 1.f;
  const auto r = CheckEquivalence<float>(s, w, e.baseline, bad, 4, 1, 1e-5);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.max_abs_diff, 1e-3);
  EXPECT_EQ(r.inputs, 4);
}

TEST(CheckEquivalence, DetectsPerturbationIn64Bit) {
  const Architecture s = SplitTransform(ToyChain(3, {{8}, {8}}, 8), {2, 2});
  const WeightStore w = RandomizeWeights<float>(s, 4);
  const Embedding e = EmbedBlockDiagonal(s, w);
  WeightStore bad = e.weights;
  bad.at("fc").kernel.data[3] += 1e-6f;
  EXPECT_FALSE(CheckEquivalence<double>(s, w, e.baseline, bad, 4, 1, 1e-10).pass);
}

TEST(Embedding, FirstBlockShortcut) {
  const Architecture a = ParseArchitectureText(R"({"name":"r0","input_shape":[4,8,8],
    "blocks":[{"layers":[{"type":"conv","id":"c","out_channels":4},
                         {"type":"residual_add","id":"add","inputs":[0,-1]}],
               "pool":{"mode":"max","window":2}}],
    "classifier":{"layers":[{"type":"dense","id":"fc","out_features":2}]}})");
  const Architecture s = SplitTransform(a, {2});
  const WeightStore w = RandomizeWeights<float>(s, 6);
  const Embedding e = EmbedBlockDiagonal(s, w);
  EXPECT_TRUE(CheckEquivalence<double>(s, w, e.baseline, e.weights, 4, 2, 1e-10).pass);
}

TEST(CheckEquivalence, ShapeMismatch) {
  const Architecture a = SingleConvPool(3, 4, 8), b = SingleConvPool(2, 4, 8);
  EXPECT_EQ(CodeOf([&] { CheckEquivalence<float>(a, InitWeights(a, 1), b, InitWeights(b, 1), 1, 1, 1e-5); }),
            ErrorCode::kShapeMismatch);
  Architecture c = a;
  c.classifier.layers[0].as<DenseParams>().out_features = 5;
  EXPECT_EQ(CodeOf([&] { CheckEquivalence<float>(a, InitWeights(a, 1), c, InitWeights(c, 1), 1, 1, 1e-5); }),
            ErrorCode::kShapeMismatch);
}

TEST(RandomInput, DeterministicAndBounded) {
  const auto a = RandomInput<double>({3, 4, 4}, 2, 5), b = RandomInput<double>({3, 4, 4}, 2, 5);
  EXPECT_EQ(a, b);
  for (double v : a.data) {
    EXPECT_GE(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
  const auto f = RandomInput<float>({3, 4, 4}, 2, 5);
  for (size_t i = 0; i < f.data.size(); ++i) EXPECT_EQ(f.data[i], static_cast<float>(a.data[i]));
}

TEST(FiniteDiff, RejectsNonPositivePerturbation) {
  const Architecture a = SingleConvPool(3, 4, 8);
  const auto w = RandomizeWeights<double>(a, 1);
  const auto x = RandomInput<double>(a.input_shape, 2, 1);
  EXPECT_EQ(CodeOf([&] { FiniteDiffCheck(a, w, x, {0, 1}, 0.0, 1e-4); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { FiniteDiffCheck(a, w, x, {0, 1}, -1e-5, 1e-4); }), ErrorCode::kInvalidArgument);
}

TEST(FiniteDiff, LinearNetworkIsExact) {
  const Architecture a = ParseArchitectureText(R"({
    "name": "linear", "input_shape": [2, 5, 5],
    "blocks": [{"layers": [{"type": "conv", "id": "c", "out_channels": 3, "bias": true}], "pool_free": true}],
    "classifier": {"layers": [{"type": "dense", "id": "fc", "out_features": 4, "bias": true}]}})");
  const auto w = RandomizeWeights<double>(a, 2);
  const auto x = RandomInput<double>(a.input_shape, 3, 2);
  const GradCheckReport r = FiniteDiffCheck(a, w, x, {0, 3, 1}, 1e-5, 1e-8);
  EXPECT_TRUE(r.pass) << r.offending_weight << " " << r.worst_relative_error;
  EXPECT_LE(r.worst_relative_error, 1e-8);
  EXPECT_GE(r.checked, 200);
}

TEST(FiniteDiff, EveryLayerKind) {
  std::set<LayerKind> kinds;
  std::set<PoolMode> modes;
  bool grouped = false, fusion = false;
  for (const Architecture& a : GradSuiteArchitectures()) {
    for (const auto& b : a.blocks) {
      if (b.pool) modes.insert(b.pool->mode);
      for (const auto& l : b.layers) {
        kinds.insert(l.kind());
        if (l.kind() == LayerKind::kPool) modes.insert(l.as<PoolSpec>().mode);
        if (l.kind() == LayerKind::kConv && l.as<ConvParams>().groups > 1) grouped = true;
        if (l.role == LayerRole::kFusionConv) fusion = true;
      }
    }
    for (const auto& l : a.classifier.layers) kinds.insert(l.kind());
    const auto w = RandomizeWeights<double>(a, 3);
    const SmoothInput in = SampleSmoothInput(a, w, 2, 4);
    EXPECT_GE(in.margin, 1e-4) << a.name;
    const GradCheckReport r = FiniteDiffCheck(a, w, in.x, {0, 1}, 1e-5, 1e-4);
    EXPECT_TRUE(r.pass) << a.name << " " << r.offending_weight << " " << r.worst_relative_error;
    size_t tensors = 0;
    for (const auto& [id, lw] : w) tensors += lw.bias ? 2 : 1;
    EXPECT_EQ(r.layers.size(), tensors);
    EXPECT_GT(r.max_abs_gradient, 1e-3);
  }
  EXPECT_EQ(kinds.size(), 7u);
  EXPECT_EQ(modes.size(), 2u);
  EXPECT_TRUE(grouped);
  EXPECT_TRUE(fusion);
}

TEST(FiniteDiff, DetectsWrongGradientScale) {
  // A perturbation far too large smears the relu kinks, so a tight tolerance fails.
  const Architecture a = GradSuiteArchitectures()[0];
  const auto w = RandomizeWeights<double>(a, 3);
  const SmoothInput in = SampleSmoothInput(a, w, 2, 4);
  EXPECT_FALSE(FiniteDiffCheck(a, w, in.x, {0, 1}, 0.5, 1e-6).pass);
}

TEST(KinkMargin, ReluAtZero) {
  const Architecture a = ParseArchitectureText(R"({
    "name": "k", "input_shape": [1, 2, 2],
    "blocks": [{"layers": [{"type": "relu", "id": "r"}], "pool_free": true}],
    "classifier": {"layers": [{"type": "dense", "id": "fc", "out_features": 2}]}})");
  const auto w = RandomizeWeights<double>(a, 1);
  Tensor<double> x({1, 1, 2, 2});
  x.data = {0.5, -0.25, 0.125, 0.75};
  EXPECT_DOUBLE_EQ(KinkMargin(a, w, x), 0.125);
  x.data[2] = 0.0;
  EXPECT_DOUBLE_EQ(KinkMargin(a, w, x), 0.0);
}

}  // namespace
}  // namespace splitforge
