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
#include <string>
#include <vector>

#include "splitforge/arch.hpp"
#include "splitforge/engine.hpp"
#include "splitforge/tensor.hpp"

namespace splitforge {

struct EmbeddingPair {
  std::string split_id;
  std::string baseline_id;
  int out_offset = 0;  // first baseline output channel
  int in_offset = 0;   // first baseline input channel
};

struct EmbeddingReport {
  std::vector<EmbeddingPair> pairs;
  int64_t kernel_elements = 0;  // baseline conv kernel elements
  int64_t zero_elements = 0;    // of those, never written by a split weight
  double zero_fraction = 0;
};

struct Embedding {
  Architecture baseline;
  WeightStore weights;
  EmbeddingReport report;
};

// Full-width baseline computing exactly what the split network computes.
// Proposed splits embed into the fused baseline, ideal splits into the
// original. Throws Error(kNotASplitArchitecture).
Embedding EmbedBlockDiagonal(const Architecture& split, const WeightStore& split_w);

struct EquivalenceReport {
  double max_abs_diff = 0;
  int inputs = 0;
  bool pass = false;
};

// Compares logits on n_inputs uniform [-1, 1) inputs at precision T.
template <class T>
EquivalenceReport CheckEquivalence(const Architecture& a, const WeightStore& wa,
                                   const Architecture& b, const WeightStore& wb, int n_inputs,
                                   uint64_t seed, double tol);

struct GradCheckOptions {
  int min_weights = 200;
  uint64_t seed = 7;
  double abs_floor = 1e-8;
};

struct GradCheckReport {
  double worst_relative_error = 0;
  double max_abs_error = 0;
  double max_abs_gradient = 0;  // largest analytic magnitude checked
  std::string offending_weight;  // "id[index]"
  double analytic = 0;
  double numeric = 0;
  int checked = 0;
  std::vector<std::string> layers;  // weight tensors touched
  bool pass = false;
};

// Central differences over a random weight subset covering every weight
// tensor. Errors at or below abs_floor count as zero.
GradCheckReport FiniteDiffCheck(const Architecture& arch, const BasicWeightStore<double>& w,
                                const Tensor<double>& x, const std::vector<int>& labels,
                                double perturbation, double tol, const GradCheckOptions& opts = {});

// Smallest distance of any relu input from zero and of any max-pool winner
// from its runner-up.
double KinkMargin(const Architecture& arch, const BasicWeightStore<double>& w,
                  const Tensor<double>& x);

struct SmoothInput {
  Tensor<double> x;
  double margin = 0;  // KinkMargin of x
};

// Draws uniform [-1, 1) inputs until KinkMargin >= margin; after max_tries
// draws returns the draw with the largest margin.
SmoothInput SampleSmoothInput(const Architecture& arch, const BasicWeightStore<double>& w, int n,
                              uint64_t seed, double margin = 1e-3, int max_tries = 200);

template <class T>
Tensor<T> RandomInput(const Shape3& shape, int n, uint64_t seed);

}  // namespace splitforge
