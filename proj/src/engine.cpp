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

#include "splitforge/engine.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "splitforge/error.hpp"

namespace splitforge {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int groups;
  int kh, kw, sh, sw, ph, pw;

  int in_per_group() const { return in_c / groups; }
  int out_per_group() const { return out_c / groups; }
  int patch() const { return in_per_group() * kh * kw; }
  bool pointwise() const { return kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw == 0; }
};

ConvGeometry Geometry(const ConvParams& p, const Shape3& in, const Shape3& out) {
  return {in.c,     in.h,      in.w,      out.c,     out.h,     out.w,    p.groups,
          p.kernel.h, p.kernel.w, p.stride.h, p.stride.w, p.padding.h, p.padding.w};
}

// Patch matrix of one group: rows (channel, ky, kx), columns (oy, ox).
template <class T>
void Im2Col(const T* img, const ConvGeometry& g, T* col) {
  const int cols = g.out_h * g.out_w;
  for (int c = 0; c < g.in_per_group(); ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = col + static_cast<int64_t>((c * g.kh + ky) * g.kw + kx) * cols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.sh - g.ph + ky;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = img + (static_cast<int64_t>(c) * g.in_h + iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.sw - g.pw + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
          }
        }
      }
}

template <class T>
void Col2ImAdd(const T* col, const ConvGeometry& g, T* img) {
  const int cols = g.out_h * g.out_w;
  for (int c = 0; c < g.in_per_group(); ++c)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = col + static_cast<int64_t>((c * g.kh + ky) * g.kw + kx) * cols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.sh - g.ph + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          T* dst = img + (static_cast<int64_t>(c) * g.in_h + iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.sw - g.pw + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += row[oy * g.out_w + ox];
          }
        }
      }
}

template <class T>
Tensor<T> ConvForward(const Tensor<T>& x, const LayerWeights<T>& w, const ConvGeometry& g) {
  const int64_t n = x.dim(0);
  Tensor<T> y({n, g.out_c, g.out_h, g.out_w});
  const int cols = g.out_h * g.out_w;
  std::vector<T> col(static_cast<size_t>(g.patch()) * cols);
  for (int64_t s = 0; s < n; ++s) {
    for (int gi = 0; gi < g.groups; ++gi) {
      const T* xg = x.ptr() + (s * g.in_c + static_cast<int64_t>(gi) * g.in_per_group()) * g.in_h * g.in_w;
      const T* cp = xg;
      if (!g.pointwise()) {
        Im2Col(xg, g, col.data());
        cp = col.data();
      }
      ConstMatMap<T> colm(cp, g.patch(), cols);
      ConstMatMap<T> wg(w.kernel.ptr() + static_cast<int64_t>(gi) * g.out_per_group() * g.patch(),
                        g.out_per_group(), g.patch());
      MatMap<T> yg(y.ptr() + (s * g.out_c + static_cast<int64_t>(gi) * g.out_per_group()) * cols,
                   g.out_per_group(), cols);
      yg.noalias() = wg * colm;
      if (w.bias) {
        for (int o = 0; o < g.out_per_group(); ++o)
          yg.row(o).array() += w.bias->data[gi * g.out_per_group() + o];
      }
    }
  }
  return y;
}

template <class T>
void ConvBackward(const Tensor<T>& x, const LayerWeights<T>& w, const ConvGeometry& g,
                  const Tensor<T>& dy, Tensor<T>* dx, LayerWeights<T>& dw) {
  const int64_t n = x.dim(0);
  const int cols = g.out_h * g.out_w;
  std::vector<T> col(static_cast<size_t>(g.patch()) * cols);
  std::vector<T> dcol(static_cast<size_t>(g.patch()) * cols);
  for (int64_t s = 0; s < n; ++s) {
    for (int gi = 0; gi < g.groups; ++gi) {
      const int64_t in_off = (s * g.in_c + static_cast<int64_t>(gi) * g.in_per_group()) * g.in_h * g.in_w;
      const T* cp = x.ptr() + in_off;
      if (!g.pointwise()) {
        Im2Col(x.ptr() + in_off, g, col.data());
        cp = col.data();
      }
      ConstMatMap<T> colm(cp, g.patch(), cols);
      const int64_t w_off = static_cast<int64_t>(gi) * g.out_per_group() * g.patch();
      ConstMatMap<T> wg(w.kernel.ptr() + w_off, g.out_per_group(), g.patch());
      ConstMatMap<T> dyg(dy.ptr() + (s * g.out_c + static_cast<int64_t>(gi) * g.out_per_group()) * cols,
                         g.out_per_group(), cols);
      MatMap<T> dwg(dw.kernel.ptr() + w_off, g.out_per_group(), g.patch());
      dwg.noalias() += dyg * colm.transpose();
      if (dw.bias) {
        for (int o = 0; o < g.out_per_group(); ++o)
          dw.bias->data[gi * g.out_per_group() + o] += dyg.row(o).sum();
      }
      if (dx) {
        if (g.pointwise()) {
          MatMap<T> dxg(dx->ptr() + in_off, g.patch(), cols);
          dxg.noalias() += wg.transpose() * dyg;
        } else {
          MatMap<T> dcm(dcol.data(), g.patch(), cols);
          dcm.noalias() = wg.transpose() * dyg;
          Col2ImAdd(dcol.data(), g, dx->ptr() + in_off);
        }
      }
    }
  }
}

template <class T>
Tensor<T> PoolForward(const Tensor<T>& x, const PoolSpec& p, std::vector<int32_t>* argmax) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = (h - p.window.h) / p.stride.h + 1, ow = (w - p.window.w) / p.stride.w + 1;
  Tensor<T> y({n, c, oh, ow});
  if (p.mode == PoolMode::kMax) argmax->assign(static_cast<size_t>(y.size()), 0);
  const T inv_area = T(1) / T(p.window.h * p.window.w);
  int64_t o = 0;
  for (int64_t s = 0; s < n; ++s)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* plane = x.ptr() + (s * c + ch) * h * w;
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox, ++o) {
          const int64_t y0 = oy * p.stride.h, x0 = ox * p.stride.w;
          if (p.mode == PoolMode::kMax) {
            int64_t best = y0 * w + x0;
            for (int64_t ky = 0; ky < p.window.h; ++ky)
              for (int64_t kx = 0; kx < p.window.w; ++kx) {
                const int64_t idx = (y0 + ky) * w + x0 + kx;
                if (plane[idx] > plane[best]) best = idx;
              }
            y.data[o] = plane[best];
            (*argmax)[o] = static_cast<int32_t>(best);
          } else {
            T sum = 0;
            for (int64_t ky = 0; ky < p.window.h; ++ky)
              for (int64_t kx = 0; kx < p.window.w; ++kx) sum += plane[(y0 + ky) * w + x0 + kx];
            y.data[o] = sum * inv_area;
          }
        }
    }
  return y;
}

template <class T>
void PoolBackward(const Tensor<T>& x, const PoolSpec& p, const std::vector<int32_t>& argmax,
                  const Tensor<T>& dy, Tensor<T>& dx) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = dy.dim(2), ow = dy.dim(3);
  const T inv_area = T(1) / T(p.window.h * p.window.w);
  int64_t o = 0;
  for (int64_t s = 0; s < n; ++s)
    for (int64_t ch = 0; ch < c; ++ch) {
      T* plane = dx.ptr() + (s * c + ch) * h * w;
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox, ++o) {
          if (p.mode == PoolMode::kMax) {
            plane[argmax[o]] += dy.data[o];
          } else {
            const T g = dy.data[o] * inv_area;
            const int64_t y0 = oy * p.stride.h, x0 = ox * p.stride.w;
            for (int64_t ky = 0; ky < p.window.h; ++ky)
              for (int64_t kx = 0; kx < p.window.w; ++kx) plane[(y0 + ky) * w + x0 + kx] += g;
          }
        }
    }
}

// Copies channels [from, from + count) of src into dst starting at channel `to`.
template <class T>
void CopyChannels(const Tensor<T>& src, int64_t from, int64_t count, Tensor<T>& dst, int64_t to,
                  bool accumulate) {
  const int64_t n = src.dim(0), plane = src.dim(2) * src.dim(3);
  for (int64_t s = 0; s < n; ++s) {
    const T* a = src.ptr() + (s * src.dim(1) + from) * plane;
    T* b = dst.ptr() + (s * dst.dim(1) + to) * plane;
    if (accumulate) {
      for (int64_t k = 0; k < count * plane; ++k) b[k] += a[k];
    } else {
      std::copy_n(a, count * plane, b);
    }
  }
}

template <class T>
Tensor<T> DenseForward(const Tensor<T>& x, const LayerWeights<T>& w) {
  const int64_t n = x.dim(0), f = x.size() / std::max<int64_t>(n, 1);
  const int64_t o = w.kernel.dim(0);
  Tensor<T> y({n, o, 1, 1});
  ConstMatMap<T> xm(x.ptr(), n, f);
  ConstMatMap<T> wm(w.kernel.ptr(), o, f);
  MatMap<T> ym(y.ptr(), n, o);
  ym.noalias() = xm * wm.transpose();
  if (w.bias)
    for (int64_t s = 0; s < n; ++s)
      for (int64_t k = 0; k < o; ++k) ym(s, k) += w.bias->data[k];
  return y;
}

template <class T>
void DenseBackward(const Tensor<T>& x, const LayerWeights<T>& w, const Tensor<T>& dy, Tensor<T>& dx,
                   LayerWeights<T>& dw) {
  const int64_t n = x.dim(0), f = x.size() / std::max<int64_t>(n, 1);
  const int64_t o = w.kernel.dim(0);
  ConstMatMap<T> xm(x.ptr(), n, f);
  ConstMatMap<T> wm(w.kernel.ptr(), o, f);
  ConstMatMap<T> dym(dy.ptr(), n, o);
  MatMap<T> dwm(dw.kernel.ptr(), o, f);
  dwm.noalias() += dym.transpose() * xm;
  if (dw.bias)
    for (int64_t k = 0; k < o; ++k) dw.bias->data[k] += dym.col(k).sum();
  MatMap<T> dxm(dx.ptr(), n, f);
  dxm.noalias() += dym * wm;
}

template <class T>
const LayerWeights<T>& WeightsFor(const BasicWeightStore<T>& w, const std::string& id,
                                  const std::vector<int64_t>& kernel_shape, bool bias) {
  auto it = w.find(id);
  if (it == w.end()) throw Error(ErrorCode::kShapeMismatch, "no weights for layer '" + id + "'");
  const LayerWeights<T>& lw = it->second;
  if (lw.kernel.shape != kernel_shape || lw.kernel.size() != Tensor<T>::Count(kernel_shape))
    throw Error(ErrorCode::kShapeMismatch, "kernel shape mismatch for layer '" + id + "'");
  if (bias != lw.bias.has_value() ||
      (bias && (lw.bias->shape != std::vector<int64_t>{kernel_shape[0]} ||
                lw.bias->size() != kernel_shape[0])))
    throw Error(ErrorCode::kShapeMismatch, "bias mismatch for layer '" + id + "'");
  return lw;
}

std::vector<int64_t> ConvKernelShape(const ConvParams& p, int in_c) {
  return {p.out_channels, in_c / p.groups, p.kernel.h, p.kernel.w};
}

template <class T>
void AddInto(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.data.empty()) {
    dst = src;
    return;
  }
  for (size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += src.data[k];
}

template <class T>
Tensor<T>& GradSlot(Tensor<T>& slot, const Tensor<T>& like) {
  if (slot.data.empty()) slot = Tensor<T>(like.shape);
  return slot;
}

// Runs the network and keeps every intermediate value.
template <class T>
ForwardResult<T> RunForward(const Architecture& arch, const ShapeTable& shapes,
                            const BasicWeightStore<T>& w, const Tensor<T>& x, Schedule schedule) {
  if (x.shape.size() != 4 || x.dim(1) != arch.input_shape.c || x.dim(2) != arch.input_shape.h ||
      x.dim(3) != arch.input_shape.w || x.size() != Tensor<T>::Count(x.shape))
    throw Error(ErrorCode::kShapeMismatch, "input does not match architecture input shape " +
                                               ToString(arch.input_shape));
  const std::vector<OpRef> ops = ExecutionOrder(arch, schedule);
  std::vector<std::vector<int>> order(arch.blocks.size());
  for (const auto& op : ops)
    if (op.kind == OpRef::Kind::kLayer) order[op.block].push_back(op.layer);

  ForwardResult<T> r;
  r.trace.blocks.resize(arch.blocks.size());
  Tensor<T> current = x;
  for (size_t b = 0; b < arch.blocks.size(); ++b) {
    const Block& block = arch.blocks[b];
    auto& bt = r.trace.blocks[b];
    bt.input = std::move(current);
    bt.values.resize(block.layers.size());
    bt.argmax.resize(block.layers.size());
    for (int j : order[b]) {
      const Layer& l = block.layers[j];
      const LayerShapes& ls = shapes.blocks[b].layers[j];
      auto in = [&](size_t k) -> const Tensor<T>& {
        const int src = l.inputs[k];
        return src == kBlockInput ? bt.input : bt.values[src];
      };
      Tensor<T> out;
      switch (l.kind()) {
        case LayerKind::kConv: {
          const auto& p = l.as<ConvParams>();
          const auto& lw = WeightsFor(w, l.id, ConvKernelShape(p, ls.in[0].c), p.bias);
          out = ConvForward(in(0), lw, Geometry(p, ls.in[0], ls.out));
          break;
        }
        case LayerKind::kRelu:
          out = in(0);
          for (auto& v : out.data) v = v > T(0) ? v : T(0);
          break;
        case LayerKind::kPool:
          out = PoolForward(in(0), l.as<PoolSpec>(), &bt.argmax[j]);
          break;
        case LayerKind::kConcat: {
          out = Tensor<T>({x.dim(0), ls.out.c, ls.out.h, ls.out.w});
          int64_t at = 0;
          for (size_t k = 0; k < l.inputs.size(); ++k) {
            CopyChannels(in(k), 0, in(k).dim(1), out, at, false);
            at += in(k).dim(1);
          }
          break;
        }
        case LayerKind::kChannelSlice: {
          const auto& p = l.as<SliceParams>();
          out = Tensor<T>({x.dim(0), p.length, ls.out.h, ls.out.w});
          CopyChannels(in(0), p.start, p.length, out, 0, false);
          break;
        }
        case LayerKind::kResidualAdd:
          out = in(0);
          for (size_t k = 0; k < out.data.size(); ++k) out.data[k] += in(1).data[k];
          break;
        case LayerKind::kDense:
          throw Error(ErrorCode::kShapeMismatch, "dense layer inside a block");
      }
      bt.values[j] = std::move(out);
    }
    current = block.layers.empty() ? bt.input : bt.values.back();
    if (block.pool) {
      bt.pooled = PoolForward(current, *block.pool, &bt.pool_argmax);
      current = bt.pooled;
    }
  }
  current.shape = {x.dim(0), static_cast<int64_t>(current.size() / std::max<int64_t>(x.dim(0), 1)), 1, 1};
  r.trace.classifier.push_back(current);
  for (const Layer& l : arch.classifier.layers) {
    if (l.kind() == LayerKind::kDense) {
      const auto& p = l.as<DenseParams>();
      const auto& lw = WeightsFor(w, l.id, {p.out_features, current.dim(1)}, p.bias);
      current = DenseForward(current, lw);
    } else {
      for (auto& v : current.data) v = v > T(0) ? v : T(0);
    }
    r.trace.classifier.push_back(current);
  }
  r.logits = std::move(current);
  return r;
}

template <class T>
LayerWeights<T> ZerosLike(const LayerWeights<T>& lw) {
  LayerWeights<T> z;
  z.kernel = Tensor<T>(lw.kernel.shape);
  if (lw.bias) z.bias = Tensor<T>(lw.bias->shape);
  return z;
}

}  // namespace

template <class T>
double SoftmaxCrossEntropy(const Tensor<T>& logits, const std::vector<int>& labels, Tensor<T>* grad) {
  const int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw Error(ErrorCode::kShapeMismatch, "label count does not match batch size");
  if (grad) *grad = Tensor<T>(logits.shape);
  double total = 0;
  for (int64_t s = 0; s < n; ++s) {
    const int y = labels[s];
    if (y < 0 || y >= c)
      throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(y) + " at sample " +
                                                   std::to_string(s) + " outside [0, " +
                                                   std::to_string(c) + ")");
    const T* z = logits.ptr() + s * c;
    const double m = *std::max_element(z, z + c);
    double sum = 0;
    for (int64_t k = 0; k < c; ++k) sum += std::exp(static_cast<double>(z[k]) - m);
    total += m + std::log(sum) - static_cast<double>(z[y]);
    if (grad) {
      T* g = grad->ptr() + s * c;
      for (int64_t k = 0; k < c; ++k) {
        const double p = std::exp(static_cast<double>(z[k]) - m) / sum;
        g[k] = static_cast<T>((p - (k == y ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

template <class T>
ForwardResult<T> Forward(const Architecture& arch, const BasicWeightStore<T>& w, const Tensor<T>& x,
                         Schedule schedule) {
  const ShapeTable shapes = InferShapes(arch);
  return RunForward(arch, shapes, w, x, schedule);
}

template <class T>
BackwardResult<T> Backward(const Architecture& arch, const BasicWeightStore<T>& w,
                           const Tensor<T>& x, const std::vector<int>& labels) {
  const ShapeTable shapes = InferShapes(arch);
  ForwardResult<T> fr = RunForward(arch, shapes, w, x, Schedule::kBranchSequential);
  BackwardResult<T> r;
  Tensor<T> d;
  r.loss = SoftmaxCrossEntropy(fr.logits, labels, &d);
  for (const auto& [id, lw] : w) r.grads.emplace(id, ZerosLike(lw));

  const auto& cls = fr.trace.classifier;
  for (int j = static_cast<int>(arch.classifier.layers.size()) - 1; j >= 0; --j) {
    const Layer& l = arch.classifier.layers[j];
    if (l.kind() == LayerKind::kDense) {
      Tensor<T> dx(cls[j].shape);
      DenseBackward(cls[j], w.at(l.id), d, dx, r.grads.at(l.id));
      d = std::move(dx);
    } else {
      for (size_t k = 0; k < d.data.size(); ++k)
        if (!(cls[j + 1].data[k] > T(0))) d.data[k] = T(0);
    }
  }

  for (int b = static_cast<int>(arch.blocks.size()) - 1; b >= 0; --b) {
    const Block& block = arch.blocks[b];
    auto& bt = fr.trace.blocks[b];
    const bool need_input_grad = b > 0;
    Tensor<T> body_grad;
    const Tensor<T>& body = block.layers.empty() ? bt.input : bt.values.back();
    if (block.pool) {
      body_grad = Tensor<T>(body.shape);
      d.shape = bt.pooled.shape;
      PoolBackward(body, *block.pool, bt.pool_argmax, d, body_grad);
    } else {
      body_grad = std::move(d);
      body_grad.shape = body.shape;
    }
    Tensor<T> input_grad;
    if (block.layers.empty()) {
      input_grad = std::move(body_grad);
    } else {
      std::vector<Tensor<T>> grads(block.layers.size());
      grads.back() = std::move(body_grad);
      auto slot = [&](int src) -> Tensor<T>* {
        if (src == kBlockInput) return need_input_grad ? &GradSlot(input_grad, bt.input) : nullptr;
        return &GradSlot(grads[src], bt.values[src]);
      };
      auto value = [&](int src) -> const Tensor<T>& {
        return src == kBlockInput ? bt.input : bt.values[src];
      };
      for (int j = static_cast<int>(block.layers.size()) - 1; j >= 0; --j) {
        if (grads[j].data.empty()) continue;
        const Layer& l = block.layers[j];
        const Tensor<T>& dy = grads[j];
        switch (l.kind()) {
          case LayerKind::kConv: {
            const auto& p = l.as<ConvParams>();
            const LayerShapes& ls = shapes.blocks[b].layers[j];
            ConvBackward(value(l.inputs[0]), w.at(l.id), Geometry(p, ls.in[0], ls.out), dy,
                         slot(l.inputs[0]), r.grads.at(l.id));
            break;
          }
          case LayerKind::kRelu: {
            Tensor<T>* dx = slot(l.inputs[0]);
            if (!dx) break;
            for (size_t k = 0; k < dy.data.size(); ++k)
              if (bt.values[j].data[k] > T(0)) dx->data[k] += dy.data[k];
            break;
          }
          case LayerKind::kPool: {
            Tensor<T>* dx = slot(l.inputs[0]);
            if (dx) PoolBackward(value(l.inputs[0]), l.as<PoolSpec>(), bt.argmax[j], dy, *dx);
            break;
          }
          case LayerKind::kConcat: {
            int64_t at = 0;
            for (int src : l.inputs) {
              const int64_t c = value(src).dim(1);
              if (Tensor<T>* dx = slot(src)) CopyChannels(dy, at, c, *dx, 0, true);
              at += c;
            }
            break;
          }
          case LayerKind::kChannelSlice: {
            const auto& p = l.as<SliceParams>();
            if (Tensor<T>* dx = slot(l.inputs[0])) CopyChannels(dy, 0, p.length, *dx, p.start, true);
            break;
          }
          case LayerKind::kResidualAdd:
            for (int src : l.inputs)
              if (Tensor<T>* dx = slot(src)) AddInto(*dx, dy);
            break;
          case LayerKind::kDense:
            break;
        }
        grads[j] = Tensor<T>();
      }
    }
    d = std::move(input_grad);
  }
  r.logits = std::move(fr.logits);
  return r;
}

template ForwardResult<float> Forward(const Architecture&, const BasicWeightStore<float>&,
                                      const Tensor<float>&, Schedule);
template ForwardResult<double> Forward(const Architecture&, const BasicWeightStore<double>&,
                                       const Tensor<double>&, Schedule);
template BackwardResult<float> Backward(const Architecture&, const BasicWeightStore<float>&,
                                        const Tensor<float>&, const std::vector<int>&);
template BackwardResult<double> Backward(const Architecture&, const BasicWeightStore<double>&,
                                         const Tensor<double>&, const std::vector<int>&);
template double SoftmaxCrossEntropy(const Tensor<float>&, const std::vector<int>&, Tensor<float>*);
template double SoftmaxCrossEntropy(const Tensor<double>&, const std::vector<int>&, Tensor<double>*);

WeightStore InitWeights(const Architecture& arch, uint64_t seed) {
  const ShapeTable shapes = InferShapes(arch);
  std::mt19937_64 rng(seed);
  WeightStore w;
  auto uniform = [&](Tensor<float>& t, double bound) {
    std::uniform_real_distribution<float> dist(static_cast<float>(-bound), static_cast<float>(bound));
    for (auto& v : t.data) v = dist(rng);
  };
  for (size_t b = 0; b < arch.blocks.size(); ++b) {
    for (size_t j = 0; j < arch.blocks[b].layers.size(); ++j) {
      const Layer& l = arch.blocks[b].layers[j];
      if (l.kind() != LayerKind::kConv) continue;
      const auto& p = l.as<ConvParams>();
      const int in_c = shapes.blocks[b].layers[j].in[0].c;
      LayerWeights<float> lw;
      lw.kernel = Tensor<float>(ConvKernelShape(p, in_c));
      const int fan_in = in_c / p.groups * p.kernel.h * p.kernel.w;
      if (l.role == LayerRole::kFusionConv && in_c == p.out_channels && p.groups == 1 &&
          p.kernel.h == 1 && p.kernel.w == 1) {
        uniform(lw.kernel, 0.01);
        for (int o = 0; o < p.out_channels; ++o) lw.kernel.data[o * in_c + o] += 1.0f;
      } else {
        uniform(lw.kernel, std::sqrt(6.0 / fan_in));
      }
      if (p.bias) lw.bias = Tensor<float>({p.out_channels});
      w.emplace(l.id, std::move(lw));
    }
  }
  int64_t features = shapes.classifier_input;
  for (const Layer& l : arch.classifier.layers) {
    if (l.kind() != LayerKind::kDense) continue;
    const auto& p = l.as<DenseParams>();
    LayerWeights<float> lw;
    lw.kernel = Tensor<float>({p.out_features, features});
    uniform(lw.kernel, std::sqrt(6.0 / static_cast<double>(features)));
    if (p.bias) lw.bias = Tensor<float>({p.out_features});
    w.emplace(l.id, std::move(lw));
    features = p.out_features;
  }
  return w;
}

void ValidateTrainConfig(const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0) || cfg.fine_tune_epochs < 0)
    throw Error(ErrorCode::kInvalidArgument,
                "train config needs epochs >= 0, batch_size >= 1, learning_rate > 0, "
                "fine_tune_epochs >= 0");
}

std::map<std::string, int> LayerBlocks(const Architecture& arch) {
  std::map<std::string, int> m;
  for (size_t b = 0; b < arch.blocks.size(); ++b)
    for (const auto& l : arch.blocks[b].layers) m[l.id] = static_cast<int>(b);
  for (const auto& l : arch.classifier.layers) m[l.id] = -1;
  return m;
}

namespace {

void CheckDataset(const Architecture& arch, const Dataset& ds) {
  const auto& s = ds.images.shape;
  if (s.size() != 4 || s[1] != arch.input_shape.c || s[2] != arch.input_shape.h ||
      s[3] != arch.input_shape.w || s[0] != static_cast<int64_t>(ds.size()))
    throw Error(ErrorCode::kShapeMismatch, "dataset images do not match input shape " +
                                               ToString(arch.input_shape));
}

TensorBuffer Gather(const Dataset& ds, const std::vector<size_t>& idx, size_t from, size_t count,
                    std::vector<int>& labels) {
  const int64_t stride = ds.images.dim(1) * ds.images.dim(2) * ds.images.dim(3);
  TensorBuffer x({static_cast<int64_t>(count), ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
  labels.resize(count);
  for (size_t k = 0; k < count; ++k) {
    const size_t i = idx[from + k];
    std::copy_n(ds.images.ptr() + i * stride, stride, x.ptr() + k * stride);
    labels[k] = ds.labels[i];
  }
  return x;
}

int64_t CountCorrect(const TensorBuffer& logits, const std::vector<int>& labels) {
  const int64_t n = logits.dim(0), c = logits.dim(1);
  int64_t correct = 0;
  for (int64_t s = 0; s < n; ++s) {
    const float* z = logits.ptr() + s * c;
    correct += (std::max_element(z, z + c) - z) == labels[s];
  }
  return correct;
}

}  // namespace

TrainResult Train(const Architecture& arch, const Dataset& train, const TrainConfig& cfg,
                  const TrainOptions& options) {
  ValidateTrainConfig(cfg);
  if (train.size() == 0) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  CheckDataset(arch, train);

  TrainResult r;
  r.weights = InitWeights(arch, cfg.seed);
  if (options.warm_start) {
    const auto blocks = LayerBlocks(arch);
    for (auto& [id, lw] : r.weights) {
      if (options.reinit_block && blocks.at(id) == *options.reinit_block) continue;
      auto it = options.warm_start->find(id);
      if (it == options.warm_start->end()) continue;
      const auto& src = it->second;
      const bool same_bias = src.bias.has_value() == lw.bias.has_value() &&
                             (!src.bias || src.bias->shape == lw.bias->shape);
      if (src.kernel.shape == lw.kernel.shape && same_bias) lw = src;
    }
  }

  const int epochs = options.epochs >= 0 ? options.epochs : cfg.epochs;
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<int> labels;
  const float lr = static_cast<float>(cfg.learning_rate);

  for (int e = 1; e <= epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    int64_t correct = 0;
    for (size_t from = 0; from < order.size(); from += cfg.batch_size) {
      const size_t count = std::min<size_t>(cfg.batch_size, order.size() - from);
      const TensorBuffer x = Gather(train, order, from, count, labels);
      BackwardResult<float> br = Backward(arch, r.weights, x, labels);
      if (!std::isfinite(br.loss))
        throw Error(ErrorCode::kDivergedLoss, "non-finite loss in epoch " + std::to_string(e));
      loss_sum += br.loss * static_cast<double>(count);
      correct += CountCorrect(br.logits, labels);
      for (auto& [id, lw] : r.weights) {
        const auto& g = br.grads.at(id);
        for (size_t k = 0; k < lw.kernel.data.size(); ++k) lw.kernel.data[k] -= lr * g.kernel.data[k];
        if (lw.bias)
          for (size_t k = 0; k < lw.bias->data.size(); ++k) lw.bias->data[k] -= lr * g.bias->data[k];
      }
    }
    EpochStats st;
    st.epoch = e;
    st.loss = loss_sum / static_cast<double>(train.size());
    st.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    if (options.test) st.test_acc = Evaluate(arch, r.weights, *options.test);
    r.history.push_back(st);
  }
  return r;
}

double Evaluate(const Architecture& arch, const WeightStore& w, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  CheckDataset(arch, ds);
  std::vector<size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::vector<int> labels;
  int64_t correct = 0;
  constexpr size_t kChunk = 128;
  for (size_t from = 0; from < ds.size(); from += kChunk) {
    const size_t count = std::min(kChunk, ds.size() - from);
    const TensorBuffer x = Gather(ds, idx, from, count, labels);
    correct += CountCorrect(Forward(arch, w, x).logits, labels);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace splitforge
