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

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "splitforge/arch.hpp"
#include "splitforge/engine.hpp"
#include "splitforge/error.hpp"
#include "splitforge/transform.hpp"

namespace splitforge::fixtures {

// conv(cin -> cout, 3x3 same) + 2x2/2 pool on hw x hw, dense to 10.
inline Architecture SingleConvPool(int cin = 3, int cout = 64, int hw = 32) {
  Architecture a;
  a.name = "single_conv_pool";
  a.input_shape = {cin, hw, hw};
  Block b;
  b.layers.push_back(MakeConv("b0.conv0", cout));
  b.pool = PoolSpec{PoolMode::kMax, {2, 2}, {2, 2}};
  a.blocks.push_back(b);
  a.blocks[0].layers[0].inputs = {kBlockInput};
  Layer fc = MakeDense("fc", 10);
  a.classifier.layers.push_back(fc);
  return a;
}

// Sequential blocks of conv/relu pairs; every block but the last pools.
inline Architecture ToyChain(int cin, const std::vector<std::vector<int>>& widths, int hw,
                             int classes = 3, PoolMode mode = PoolMode::kMax) {
  Architecture a;
  a.name = "toy_chain";
  a.input_shape = {cin, hw, hw};
  for (size_t i = 0; i < widths.size(); ++i) {
    Block b;
    for (size_t k = 0; k < widths[i].size(); ++k) {
      const std::string p = "b" + std::to_string(i) + ".";
      Layer c = MakeConv(p + "conv" + std::to_string(k), widths[i][k]);
      c.inputs = {static_cast<int>(b.layers.size()) - 1};
      b.layers.push_back(c);
      Layer r = MakeRelu(p + "relu" + std::to_string(k));
      r.inputs = {static_cast<int>(b.layers.size()) - 1};
      b.layers.push_back(r);
    }
    if (i + 1 < widths.size()) {
      b.pool = PoolSpec{mode, {2, 2}, {2, 2}};
    } else {
      b.pool_free = true;
    }
    a.blocks.push_back(b);
  }
  a.classifier.layers.push_back(MakeDense("fc", classes));
  return a;
}

// Two pooled blocks, the second with an identity and a projection shortcut.
inline Architecture ToyResidual(int hw = 8) {
  const char* doc = R"({
    "name": "toy_residual",
    "input_shape": [3, 8, 8],
    "blocks": [
      {"layers": [{"type": "conv", "id": "stem", "out_channels": 4, "bias": true},
                  {"type": "relu", "id": "stem.relu"}],
       "pool": {"mode": "max", "window": 2}},
      {"layers": [{"type": "conv", "id": "u0.conv1", "out_channels": 4},
                  {"type": "relu", "id": "u0.relu1"},
                  {"type": "conv", "id": "u0.conv2", "out_channels": 4},
                  {"type": "residual_add", "id": "u0.add", "inputs": [2, -1]},
                  {"type": "relu", "id": "u0.relu2"},
                  {"type": "conv", "id": "u1.conv1", "out_channels": 8},
                  {"type": "relu", "id": "u1.relu1"},
                  {"type": "conv", "id": "u1.conv2", "out_channels": 8},
                  {"type": "conv", "id": "u1.proj", "out_channels": 8, "kernel": 1, "inputs": [4]},
                  {"type": "residual_add", "id": "u1.add", "inputs": [7, 8]},
                  {"type": "relu", "id": "u1.relu2"}],
       "pool": {"mode": "avg", "window": 2}}
    ],
    "classifier": {"layers": [{"type": "dense", "id": "fc0", "out_features": 6, "bias": true},
                              {"type": "relu", "id": "fc.relu"},
                              {"type": "dense", "id": "fc1", "out_features": 3}]}
  })";
  Architecture a = ParseArchitectureText(doc);
  a.input_shape.h = a.input_shape.w = hw;
  return a;
}

// Init followed by uniform [-0.5, 0.5) overwrite of every weight, biases included.
template <class T>
BasicWeightStore<T> RandomizeWeights(const Architecture& a, uint64_t seed) {
  BasicWeightStore<T> w = CastWeights<T>(InitWeights(a, seed));
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& [id, lw] : w) {
    for (auto& v : lw.kernel.data) v = static_cast<T>(u(rng));
    if (lw.bias)
      for (auto& v : lw.bias->data) v = static_cast<T>(u(rng));
  }
  return w;
}

// Random proposed split of a random chain or of the residual toy.
inline Architecture RandomProposedSplit(std::mt19937& rng) {
  const int ks[] = {1, 2, 4};
  if (rng() % 4 == 0) {
    return SplitTransform(ToyResidual(), {ks[rng() % 3], ks[rng() % 2]}, rng() % 2 == 0);
  }
  const int nblocks = 1 + rng() % 3;
  std::vector<std::vector<int>> widths(nblocks);
  std::vector<int> plan(nblocks);
  for (int i = 0; i < nblocks; ++i) {
    plan[i] = ks[rng() % 3];
    const int depth = 1 + rng() % 2;
    for (int d = 0; d < depth; ++d) widths[i].push_back(4 * (1 + rng() % 2));
  }
  const PoolMode mode = rng() % 2 ? PoolMode::kMax : PoolMode::kAvg;
  const Architecture a = ToyChain(1 + rng() % 3, widths, 8, 2 + rng() % 3, mode);
  return SplitTransform(a, plan, rng() % 2 == 0);
}

// Random ideal split of a small two-layer demo on an 8x8 input.
inline Architecture RandomIdealSplit(std::mt19937& rng) {
  const int k1 = 1 << (rng() % 3);
  const int k2 = std::max(2, k1 << (rng() % 2));
  Architecture a = TwoLayerDemo(1 + rng() % 3, k2 * (1 + rng() % 2), k2 * (1 + rng() % 2));
  a.input_shape.h = a.input_shape.w = 8;
  return IdealSplit(a, k1, k2);
}

// Together these exercise every layer kind and both pool modes.
inline std::vector<Architecture> GradSuiteArchitectures() {
  std::vector<Architecture> out;
  out.push_back(SplitTransform(ToyResidual(6), {2, 2}, true));
  out.push_back(ParseArchitectureText(R"({
    "name": "grad_misc",
    "input_shape": [4, 6, 6],
    "blocks": [
      {"layers": [{"type": "conv", "id": "g", "out_channels": 6, "groups": 2, "bias": true},
                  {"type": "relu", "id": "g.relu"},
                  {"type": "channel_slice", "id": "lo", "start": 0, "length": 2, "inputs": [1]},
                  {"type": "channel_slice", "id": "hi", "start": 2, "length": 4, "inputs": [1]},
                  {"type": "pool", "id": "lo.pool", "mode": "avg", "window": 2, "inputs": [2]},
                  {"type": "pool", "id": "hi.pool", "mode": "max", "window": 2, "inputs": [3]},
                  {"type": "concat", "id": "cat", "inputs": [4, 5]},
                  {"type": "conv", "id": "s2", "out_channels": 4, "kernel": 3, "stride": 2, "padding": 1}],
       "pool_free": true}
    ],
    "classifier": {"layers": [{"type": "dense", "id": "fc", "out_features": 3, "bias": true}]}
  })"));
  return out;
}

}  // namespace splitforge::fixtures
