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
#include <vector>

#include "splitforge/arch.hpp"
#include "splitforge/cost.hpp"
#include "splitforge/data.hpp"
#include "splitforge/tensor.hpp"

namespace splitforge {

// Values produced by one forward pass, kept for the backward pass.
template <class T>
struct ActivationTrace {
  struct BlockTrace {
    Tensor<T> input;
    std::vector<Tensor<T>> values;        // per layer
    std::vector<std::vector<int32_t>> argmax;  // per layer, max pools only
    Tensor<T> pooled;                     // block pool output (if any)
    std::vector<int32_t> pool_argmax;
  };
  std::vector<BlockTrace> blocks;
  std::vector<Tensor<T>> classifier;  // classifier[0] is the flattened feature
};

template <class T>
struct ForwardResult {
  Tensor<T> logits;  // (N, classes, 1, 1)
  ActivationTrace<T> trace;
};

template <class T>
struct BackwardResult {
  double loss = 0;
  BasicWeightStore<T> grads;
  Tensor<T> logits;
};

// Throws Error(kShapeMismatch) when x or the weights do not fit the
// architecture. The schedule only changes execution order, never values.
template <class T>
ForwardResult<T> Forward(const Architecture& arch, const BasicWeightStore<T>& w, const Tensor<T>& x,
                         Schedule schedule = Schedule::kBranchSequential);

// Mean softmax cross-entropy over the batch and its weight gradients.
template <class T>
BackwardResult<T> Backward(const Architecture& arch, const BasicWeightStore<T>& w,
                           const Tensor<T>& x, const std::vector<int>& labels);

template <class T>
double SoftmaxCrossEntropy(const Tensor<T>& logits, const std::vector<int>& labels,
                           Tensor<T>* grad = nullptr);

// Fan-in scaled uniform init (He uniform). Fusion 1x1 convs start near the
// channel pass-through map with small noise.
WeightStore InitWeights(const Architecture& arch, uint64_t seed);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 0.05;
  uint64_t seed = 1;
  int fine_tune_epochs = 5;
};

void ValidateTrainConfig(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double train_acc = 0;
  std::optional<double> test_acc;
  double loss = 0;
};

struct TrainResult {
  WeightStore weights;
  std::vector<EpochStats> history;
};

struct TrainOptions {
  int epochs = -1;                       // overrides cfg.epochs when >= 0
  const WeightStore* warm_start = nullptr;
  std::optional<int> reinit_block;       // layers of this block never copy from warm_start
  const Dataset* test = nullptr;         // evaluated after every epoch when set
};

// Plain mini-batch SGD. Throws Error(kDivergedLoss) naming the epoch.
TrainResult Train(const Architecture& arch, const Dataset& train, const TrainConfig& cfg,
                  const TrainOptions& options = {});

// Top-1 accuracy in [0, 1]; ties resolve to the lowest class index.
double Evaluate(const Architecture& arch, const WeightStore& w, const Dataset& ds);

// Block index of every block layer id (classifier layers map to -1).
std::map<std::string, int> LayerBlocks(const Architecture& arch);

}  // namespace splitforge
