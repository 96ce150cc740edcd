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

#include "splitforge/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "splitforge/error.hpp"
#include "splitforge/transform.hpp"

namespace splitforge {

namespace {

[[noreturn]] void NotSplit(const std::string& msg) {
  throw Error(ErrorCode::kNotASplitArchitecture, msg);
}

std::string BaseId(const std::string& id) { return id.substr(0, id.rfind('@')); }

bool HasFusionRelu(const Architecture& arch) {
  for (const auto& b : arch.blocks)
    for (const auto& l : b.layers)
      if (l.role == LayerRole::kFusionRelu) return true;
  return false;
}

std::vector<int> Iota(int n, int from = 0) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), from);
  return v;
}

struct Target {
  LayerWeights<float>* weights = nullptr;
  std::vector<char>* written = nullptr;
};

}  // namespace

Embedding EmbedBlockDiagonal(const Architecture& split, const WeightStore& split_w) {
  if (split.transform != TransformTag::kProposed && split.transform != TransformTag::kIdeal)
    NotSplit("embedding needs a proposed or ideal split, got '" +
             std::string(TransformTagName(split.transform)) + "'");
  const bool proposed = split.transform == TransformTag::kProposed;
  const Architecture original = RecoverOriginal(split);
  Embedding e;
  e.baseline = proposed ? FusedBaseline(original, HasFusionRelu(split)) : original;
  const ShapeTable bshapes = InferShapes(e.baseline);
  const ShapeTable sshapes = InferShapes(split);

  std::map<std::string, std::vector<char>> written;
  for (size_t b = 0; b < e.baseline.blocks.size(); ++b)
    for (size_t j = 0; j < e.baseline.blocks[b].layers.size(); ++j) {
      const Layer& l = e.baseline.blocks[b].layers[j];
      if (l.kind() != LayerKind::kConv) continue;
      const auto& p = l.as<ConvParams>();
      LayerWeights<float> lw;
      lw.kernel = Tensor<float>({p.out_channels, bshapes.blocks[b].layers[j].in[0].c / p.groups,
                                 p.kernel.h, p.kernel.w});
      if (p.bias) lw.bias = Tensor<float>({p.out_channels});
      written[l.id].assign(static_cast<size_t>(lw.kernel.size()), 0);
      e.weights.emplace(l.id, std::move(lw));
    }

  std::vector<int> current = Iota(split.input_shape.c);
  for (size_t b = 0; b < split.blocks.size(); ++b) {
    const Block& block = split.blocks[b];
    std::vector<std::vector<int>> maps(block.layers.size());
    auto source = [&](int src) -> const std::vector<int>& {
      return src == kBlockInput ? current : maps[src];
    };
    for (size_t j = 0; j < block.layers.size(); ++j) {
      const Layer& l = block.layers[j];
      switch (l.kind()) {
        case LayerKind::kConv: {
          const auto& p = l.as<ConvParams>();
          if (p.groups != 1) NotSplit("layer '" + l.id + "': grouped conv in a split network");
          const bool clone = l.role == LayerRole::kBody && l.group >= 0;
          const std::string base_id = clone ? BaseId(l.id) + (proposed ? "@0" : "") : l.id;
          auto bw = e.weights.find(base_id);
          if (bw == e.weights.end()) NotSplit("no baseline layer for '" + l.id + "'");
          auto sw = split_w.find(l.id);
          if (sw == split_w.end())
            throw Error(ErrorCode::kShapeMismatch, "no weights for layer '" + l.id + "'");
          const std::vector<int>& in_map = source(l.inputs[0]);
          const int out_off = clone ? l.group * p.out_channels : 0;
          const Tensor<float>& k = sw->second.kernel;
          Tensor<float>& dst = bw->second.kernel;
          const int64_t bo = dst.dim(0), bi = dst.dim(1), kh = dst.dim(2), kw = dst.dim(3);
          if (k.shape != std::vector<int64_t>{p.out_channels, static_cast<int64_t>(in_map.size()),
                                              kh, kw})
            throw Error(ErrorCode::kShapeMismatch, "kernel shape mismatch for layer '" + l.id + "'");
          if (out_off + p.out_channels > bo) NotSplit("layer '" + l.id + "' overflows '" + base_id + "'");
          auto& mark = written[base_id];
          for (int64_t o = 0; o < p.out_channels; ++o)
            for (size_t c = 0; c < in_map.size(); ++c) {
              if (in_map[c] < 0 || in_map[c] >= bi)
                NotSplit("layer '" + l.id + "' reads outside '" + base_id + "'");
              for (int64_t t = 0; t < kh * kw; ++t) {
                const int64_t at = ((out_off + o) * bi + in_map[c]) * kh * kw + t;
                if (mark[at]) NotSplit("two split weights map to one position of '" + base_id + "'");
                mark[at] = 1;
                dst.data[at] = k.data[(o * static_cast<int64_t>(in_map.size()) + c) * kh * kw + t];
              }
            }
          if (p.bias) {
            if (!sw->second.bias || !bw->second.bias)
              throw Error(ErrorCode::kShapeMismatch, "missing bias for layer '" + l.id + "'");
            for (int64_t o = 0; o < p.out_channels; ++o)
              bw->second.bias->data[out_off + o] = sw->second.bias->data[o];
          }
          e.report.pairs.push_back(
              {l.id, base_id, out_off,
               in_map.empty() ? 0 : *std::min_element(in_map.begin(), in_map.end())});
          maps[j] = Iota(p.out_channels, out_off);
          break;
        }
        case LayerKind::kRelu:
        case LayerKind::kPool:
          maps[j] = source(l.inputs[0]);
          break;
        case LayerKind::kConcat:
          for (int src : l.inputs) {
            const auto& m = source(src);
            maps[j].insert(maps[j].end(), m.begin(), m.end());
          }
          break;
        case LayerKind::kChannelSlice: {
          const auto& s = l.as<SliceParams>();
          const auto& m = source(l.inputs[0]);
          maps[j].assign(m.begin() + s.start, m.begin() + s.start + s.length);
          break;
        }
        case LayerKind::kResidualAdd:
          if (source(l.inputs[0]) != source(l.inputs[1]))
            NotSplit("layer '" + l.id + "' adds values from different channel groups");
          maps[j] = source(l.inputs[0]);
          break;
        case LayerKind::kDense:
          NotSplit("dense layer inside a block");
      }
    }
    if (!block.layers.empty()) current = maps.back();
  }

  // Classifier: the first dense layer absorbs any channel permutation.
  const int64_t c = static_cast<int64_t>(current.size());
  const int64_t plane = c ? sshapes.classifier_input / c : 0;
  {
    std::vector<int> sorted = current;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != Iota(static_cast<int>(c)) || bshapes.classifier_input != sshapes.classifier_input)
      NotSplit("split feature map is not a permutation of the baseline feature map");
  }
  bool first = true;
  for (const Layer& l : split.classifier.layers) {
    if (l.kind() != LayerKind::kDense) continue;
    auto it = split_w.find(l.id);
    if (it == split_w.end()) throw Error(ErrorCode::kShapeMismatch, "no weights for layer '" + l.id + "'");
    LayerWeights<float> lw = it->second;
    if (first) {
      const int64_t o = lw.kernel.dim(0), f = lw.kernel.dim(1);
      if (f != c * plane) throw Error(ErrorCode::kShapeMismatch, "classifier input mismatch");
      for (int64_t r = 0; r < o; ++r)
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t q = 0; q < plane; ++q)
            lw.kernel.data[r * f + current[ch] * plane + q] = it->second.kernel.data[r * f + ch * plane + q];
      first = false;
    }
    e.weights[l.id] = std::move(lw);
  }

  for (const auto& [id, mark] : written) {
    e.report.kernel_elements += static_cast<int64_t>(mark.size());
    e.report.zero_elements += std::count(mark.begin(), mark.end(), 0);
  }
  e.report.zero_fraction = e.report.kernel_elements
                               ? static_cast<double>(e.report.zero_elements) /
                                     static_cast<double>(e.report.kernel_elements)
                               : 0.0;
  return e;
}

template <class T>
Tensor<T> RandomInput(const Shape3& shape, int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor<T> x({n, shape.c, shape.h, shape.w});
  for (auto& v : x.data) v = static_cast<T>(dist(rng));
  return x;
}

template Tensor<float> RandomInput(const Shape3&, int, uint64_t);
template Tensor<double> RandomInput(const Shape3&, int, uint64_t);

template <class T>
EquivalenceReport CheckEquivalence(const Architecture& a, const WeightStore& wa,
                                   const Architecture& b, const WeightStore& wb, int n_inputs,
                                   uint64_t seed, double tol) {
  if (a.input_shape != b.input_shape)
    throw Error(ErrorCode::kShapeMismatch, "input shapes differ: " + ToString(a.input_shape) +
                                               " vs " + ToString(b.input_shape));
  if (InferShapes(a).classes != InferShapes(b).classes)
    throw Error(ErrorCode::kShapeMismatch, "class counts differ");
  EquivalenceReport r;
  r.inputs = n_inputs;
  if (n_inputs <= 0) {
    r.pass = true;
    return r;
  }
  const Tensor<T> x = RandomInput<T>(a.input_shape, n_inputs, seed);
  const auto la = Forward(a, CastWeights<T>(wa), x).logits;
  const auto lb = Forward(b, CastWeights<T>(wb), x).logits;
  bool finite = true;
  for (size_t k = 0; k < la.data.size(); ++k) {
    const double d = std::abs(static_cast<double>(la.data[k]) - static_cast<double>(lb.data[k]));
    if (!std::isfinite(d)) finite = false;
    r.max_abs_diff = std::max(r.max_abs_diff, d);
  }
  r.pass = finite && r.max_abs_diff <= tol;
  return r;
}

template EquivalenceReport CheckEquivalence<float>(const Architecture&, const WeightStore&,
                                                   const Architecture&, const WeightStore&, int,
                                                   uint64_t, double);
template EquivalenceReport CheckEquivalence<double>(const Architecture&, const WeightStore&,
                                                    const Architecture&, const WeightStore&, int,
                                                    uint64_t, double);

GradCheckReport FiniteDiffCheck(const Architecture& arch, const BasicWeightStore<double>& w,
                                const Tensor<double>& x, const std::vector<int>& labels,
                                double perturbation, double tol, const GradCheckOptions& opts) {
  if (!(perturbation > 0) || !std::isfinite(perturbation))
    throw Error(ErrorCode::kInvalidArgument, "perturbation must be a positive finite number");
  const BackwardResult<double> br = Backward(arch, w, x, labels);

  struct Slot {
    std::string name;
    std::string id;
    bool bias;
    std::vector<size_t> order;
  };
  std::mt19937_64 rng(opts.seed);
  std::vector<Slot> slots;
  for (const auto& [id, lw] : w) {
    Slot k{id, id, false, {}};
    k.order.resize(lw.kernel.data.size());
    std::iota(k.order.begin(), k.order.end(), size_t{0});
    std::shuffle(k.order.begin(), k.order.end(), rng);
    slots.push_back(k);
    if (lw.bias) {
      Slot s{id + "#bias", id, true, {}};
      s.order.resize(lw.bias->data.size());
      std::iota(s.order.begin(), s.order.end(), size_t{0});
      std::shuffle(s.order.begin(), s.order.end(), rng);
      slots.push_back(s);
    }
  }
  // Round robin over tensors so every layer is represented.
  std::vector<std::pair<size_t, size_t>> picks;
  for (size_t round = 0; static_cast<int>(picks.size()) < opts.min_weights; ++round) {
    bool any = false;
    for (size_t s = 0; s < slots.size(); ++s)
      if (round < slots[s].order.size()) {
        picks.emplace_back(s, slots[s].order[round]);
        any = true;
      }
    if (!any) break;
  }

  GradCheckReport r;
  for (const auto& s : slots) r.layers.push_back(s.name);
  BasicWeightStore<double> wp = w;
  auto loss = [&]() { return SoftmaxCrossEntropy(Forward(arch, wp, x).logits, labels); };
  for (const auto& [s, idx] : picks) {
    const Slot& slot = slots[s];
    auto& lw = wp.at(slot.id);
    double& v = slot.bias ? lw.bias->data[idx] : lw.kernel.data[idx];
    const auto& g = br.grads.at(slot.id);
    const double analytic = slot.bias ? g.bias->data[idx] : g.kernel.data[idx];
    const double orig = v;
    v = orig + perturbation;
    const double lp = loss();
    v = orig - perturbation;
    const double lm = loss();
    v = orig;
    const double numeric = (lp - lm) / (2 * perturbation);
    const double diff = std::abs(analytic - numeric);
    const double rel = diff <= opts.abs_floor ? 0.0 : diff / std::max(std::abs(analytic), std::abs(numeric));
    ++r.checked;
    r.max_abs_error = std::max(r.max_abs_error, diff);
    r.max_abs_gradient = std::max(r.max_abs_gradient, std::abs(analytic));
    if (r.offending_weight.empty() || rel > r.worst_relative_error) {
      r.worst_relative_error = rel;
      r.offending_weight = slot.name + "[" + std::to_string(idx) + "]";
      r.analytic = analytic;
      r.numeric = numeric;
    }
  }
  r.pass = r.worst_relative_error <= tol;
  return r;
}

namespace {

double MaxPoolGap(const Tensor<double>& x, const PoolSpec& p) {
  double gap = std::numeric_limits<double>::infinity();
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = (h - p.window.h) / p.stride.h + 1, ow = (w - p.window.w) / p.stride.w + 1;
  for (int64_t s = 0; s < n * c; ++s) {
    const double* plane = x.ptr() + s * h * w;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        double top = -std::numeric_limits<double>::infinity(), second = top;
        for (int64_t ky = 0; ky < p.window.h; ++ky)
          for (int64_t kx = 0; kx < p.window.w; ++kx) {
            const double v = plane[(oy * p.stride.h + ky) * w + ox * p.stride.w + kx];
            if (v > top) {
              second = top;
              top = v;
            } else if (v > second) {
              second = v;
            }
          }
        // A window of dead relu outputs has zero gradient on both sides.
        if (top == 0.0) continue;
        if (std::isfinite(second)) gap = std::min(gap, top - second);
      }
  }
  return gap;
}

}  // namespace

double KinkMargin(const Architecture& arch, const BasicWeightStore<double>& w,
                  const Tensor<double>& x) {
  const ForwardResult<double> fr = Forward(arch, w, x);
  double margin = std::numeric_limits<double>::infinity();
  for (size_t b = 0; b < arch.blocks.size(); ++b) {
    const Block& block = arch.blocks[b];
    const auto& bt = fr.trace.blocks[b];
    auto value = [&](int src) -> const Tensor<double>& {
      return src == kBlockInput ? bt.input : bt.values[src];
    };
    for (size_t j = 0; j < block.layers.size(); ++j) {
      const Layer& l = block.layers[j];
      if (l.kind() == LayerKind::kRelu) {
        for (double v : value(l.inputs[0]).data) margin = std::min(margin, std::abs(v));
      } else if (l.kind() == LayerKind::kPool && l.as<PoolSpec>().mode == PoolMode::kMax) {
        margin = std::min(margin, MaxPoolGap(value(l.inputs[0]), l.as<PoolSpec>()));
      }
    }
    if (block.pool && block.pool->mode == PoolMode::kMax)
      margin = std::min(margin, MaxPoolGap(block.layers.empty() ? bt.input : bt.values.back(),
                                           *block.pool));
  }
  for (size_t j = 0; j < arch.classifier.layers.size(); ++j)
    if (arch.classifier.layers[j].kind() == LayerKind::kRelu)
      for (double v : fr.trace.classifier[j].data) margin = std::min(margin, std::abs(v));
  return margin;
}

SmoothInput SampleSmoothInput(const Architecture& arch, const BasicWeightStore<double>& w, int n,
                              uint64_t seed, double margin, int max_tries) {
  SmoothInput best;
  best.margin = -1;
  for (int t = 0; t < std::max(max_tries, 1); ++t) {
    Tensor<double> x = RandomInput<double>(arch.input_shape, n, seed + 0x9E3779B97F4A7C15ULL * t);
    const double m = KinkMargin(arch, w, x);
    if (m > best.margin) {
      best.x = std::move(x);
      best.margin = m;
    }
    if (best.margin >= margin) break;
  }
  return best;
}

}  // namespace splitforge
