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

#include <cstdio>

#include "splitforge/arch.hpp"
#include "splitforge/error.hpp"

namespace splitforge {

namespace {

// Chains layers whose inputs were left empty onto their predecessor.
Block Chain(std::vector<Layer> layers, std::optional<PoolSpec> pool) {
  Block b;
  for (size_t j = 0; j < layers.size(); ++j) {
    if (layers[j].inputs.empty()) layers[j].inputs = {static_cast<int>(j) - 1};
  }
  b.layers = std::move(layers);
  b.pool = pool;
  b.pool_free = !pool.has_value();
  return b;
}

Layer WithInputs(Layer l, std::vector<int> inputs) {
  l.inputs = std::move(inputs);
  return l;
}

PoolSpec MaxPool2() { return PoolSpec{PoolMode::kMax, {2, 2}, {2, 2}}; }

// Basic residual unit appended to `layers`; `in` is the index of the unit input.
void BasicUnit(std::vector<Layer>& layers, const std::string& prefix, int in, int channels,
               int stride) {
  const int base = static_cast<int>(layers.size());
  layers.push_back(WithInputs(MakeConv(prefix + ".conv1", channels, 3, stride), {in}));
  layers.push_back(WithInputs(MakeRelu(prefix + ".relu1"), {base}));
  layers.push_back(WithInputs(MakeConv(prefix + ".conv2", channels), {base + 1}));
  int shortcut = in;
  if (stride != 1) {
    layers.push_back(WithInputs(MakeConv(prefix + ".proj", channels, 1, stride), {in}));
    shortcut = base + 3;
  }
  const int add = static_cast<int>(layers.size());
  layers.push_back(WithInputs(Layer{prefix + ".add", ResidualAddParams{}, {}}, {base + 2, shortcut}));
  layers.push_back(WithInputs(MakeRelu(prefix + ".relu2"), {add}));
}

}  // namespace

Architecture Vgg16Cifar() {
  Architecture a;
  a.name = "vgg16_cifar";
  a.input_shape = {3, 32, 32};
  const std::vector<std::vector<int>> plan = {
      {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
  for (size_t i = 0; i < plan.size(); ++i) {
    std::vector<Layer> layers;
    for (size_t k = 0; k < plan[i].size(); ++k) {
      const std::string p = "b" + std::to_string(i);
      layers.push_back(MakeConv(p + ".conv" + std::to_string(k), plan[i][k]));
      layers.push_back(MakeRelu(p + ".relu" + std::to_string(k)));
    }
    a.blocks.push_back(Chain(std::move(layers), MaxPool2()));
  }
  a.classifier.layers = {MakeDense("fc0", 512), MakeRelu("fc0.relu"), MakeDense("fc1", 10)};
  return a;
}

Architecture Resnet18Cifar() {
  Architecture a;
  a.name = "resnet18_cifar";
  a.input_shape = {3, 32, 32};
  a.blocks.push_back(Chain({MakeConv("b0.stem", 64), MakeRelu("b0.stem.relu")}, std::nullopt));

  const int widths[] = {64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    std::vector<Layer> layers;
    const std::string p = "b" + std::to_string(s + 1);
    BasicUnit(layers, p + ".u0", kBlockInput, widths[s], s == 0 ? 1 : 2);
    BasicUnit(layers, p + ".u1", static_cast<int>(layers.size()) - 1, widths[s], 1);
    std::optional<PoolSpec> pool;
    if (s == 3) pool = PoolSpec{PoolMode::kAvg, {4, 4}, {4, 4}};
    a.blocks.push_back(Chain(std::move(layers), pool));
  }
  a.classifier.layers = {MakeDense("fc", 10)};
  return a;
}

Architecture TwoLayerDemo(int l0, int l1, int l2) {
  Architecture a;
  a.name = "two_layer_demo(" + std::to_string(l0) + "," + std::to_string(l1) + "," +
           std::to_string(l2) + ")";
  a.input_shape = {l0, 32, 32};
  a.blocks.push_back(Chain({MakeConv("b0.conv0", l1), MakeRelu("b0.relu0"),
                            MakeConv("b0.conv1", l2), MakeRelu("b0.relu1")},
                           MaxPool2()));
  a.classifier.layers = {MakeDense("fc", 10)};
  return a;
}

std::vector<NamedArchitecture> BuiltinArchitectures() {
  return {{"vgg16_cifar", Vgg16Cifar()},
          {"resnet18_cifar", Resnet18Cifar()},
          {"two_layer_demo", TwoLayerDemo(3, 64, 64)}};
}

Architecture BuiltinByName(std::string_view name) {
  if (name == "vgg16_cifar") return Vgg16Cifar();
  if (name == "resnet18_cifar") return Resnet18Cifar();
  if (name == "two_layer_demo") return TwoLayerDemo(3, 64, 64);
  int l0 = 0, l1 = 0, l2 = 0;
  char tail = 0;
  const std::string s(name);
  if (std::sscanf(s.c_str(), "two_layer_demo(%d,%d,%d%c", &l0, &l1, &l2, &tail) == 4 &&
      tail == ')' && l0 > 0 && l1 > 0 && l2 > 0) {
    return TwoLayerDemo(l0, l1, l2);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown builtin architecture '" + s + "'");
}

}  // namespace splitforge
