// Copyright 2026 The kfacsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kfacsim/errors.hpp"
#include "kfacsim/linalg/matrix.hpp"
#include "kfacsim/linalg/reduction.hpp"
#include "kfacsim/net/dataset.hpp"
#include "kfacsim/util/rng.hpp"

namespace kfacsim::net {

enum class LayerKind { dense, conv2d };

enum class Activation {
  relu,
  identity,
  // Marks the network head: forward emits raw logits and the loss applies
  // softmax + cross-entropy.  Only legal on the last layer.
  softmax_cross_entropy,
};

struct Conv2dDims {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_features = 0;   // dense
  std::size_t out_features = 0;  // dense
  Conv2dDims conv;               // conv2d
  bool has_bias = true;
  Activation activation = Activation::relu;

  // Columns of the input-side factor matrix: flattened receptive field plus
  // the homogeneous bias column.
  std::size_t fan_in() const {
    return kind == LayerKind::dense
               ? in_features
               : conv.in_channels * conv.kernel_h * conv.kernel_w;
  }
  std::size_t fan_out() const {
    return kind == LayerKind::dense ? out_features : conv.out_channels;
  }
  std::size_t weight_cols() const { return fan_in() + (has_bias ? 1 : 0); }
};

// One trainable layer.  Bias is folded into the weight matrix as a trailing
// column (inputs get a constant-1 column appended), so weight and bias share
// one gradient matrix and are preconditioned jointly.
struct Layer {
  LayerSpec spec;
  linalg::DenseMatrix weight;    // fan_out x weight_cols
  linalg::DenseMatrix velocity;  // momentum buffer, same shape
};

// Per-layer statistics captured during forward/backward for curvature
// estimation: `a` holds layer inputs (one row per sample, or per sample x
// output position for conv layers) with the bias column appended; `g` holds
// the gradient of the summed batch loss w.r.t. the layer pre-activations,
// one row per row of `a`.
struct LayerCapture {
  std::size_t layer_index = 0;
  linalg::DenseMatrix a;
  linalg::DenseMatrix g;
  std::size_t sample_count = 0;
};

struct Model {
  std::vector<Layer> layers;
  std::uint64_t rng_seed = 0;
  // Input geometry (flat data uses height = width = 1).
  std::size_t in_channels = 1;
  std::size_t in_height = 1;
  std::size_t in_width = 1;

  std::size_t input_features() const {
    return in_channels * in_height * in_width;
  }
  std::size_t output_features() const {
    return layers.empty() ? 0 : layers.back().spec.fan_out();
  }
  bool cross_entropy_head() const {
    return !layers.empty() &&
           layers.back().spec.activation == Activation::softmax_cross_entropy;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.weight.size();
    return n;
  }
  bool parameters_finite() const {
    for (const Layer& l : layers) {
      for (double v : l.weight.data()) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }
};

namespace detail {

struct LayerGeom {
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_c = 0, out_h = 0, out_w = 0;
};

inline LayerGeom conv_geometry(const Conv2dDims& c, std::size_t in_c,
                               std::size_t in_h, std::size_t in_w) {
  if (c.in_channels != in_c) {
    throw DimensionError("conv2d: expected " + std::to_string(c.in_channels) +
                         " input channels, got " + std::to_string(in_c));
  }
  if (c.stride == 0 || c.kernel_h == 0 || c.kernel_w == 0) {
    throw DimensionError("conv2d: kernel and stride must be positive");
  }
  if (in_h + 2 * c.padding < c.kernel_h || in_w + 2 * c.padding < c.kernel_w) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  LayerGeom g;
  g.in_c = in_c;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_c = c.out_channels;
  g.out_h = (in_h + 2 * c.padding - c.kernel_h) / c.stride + 1;
  g.out_w = (in_w + 2 * c.padding - c.kernel_w) / c.stride + 1;
  return g;
}

// im2col: one row per (sample, output position), columns are the flattened
// receptive field (channel-major), with a trailing 1 column when biased.
inline linalg::DenseMatrix extract_patches(const linalg::DenseMatrix& flat,
                                           const Conv2dDims& c,
                                           const LayerGeom& g, bool bias) {
  const std::size_t n = flat.rows();
  const std::size_t cols = c.in_channels * c.kernel_h * c.kernel_w;
  linalg::DenseMatrix out(n * g.out_h * g.out_w, cols + (bias ? 1 : 0), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const std::size_t row = (s * g.out_h + oy) * g.out_w + ox;
        for (std::size_t ch = 0; ch < c.in_channels; ++ch) {
          for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                static_cast<std::ptrdiff_t>(c.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * c.stride + kx) -
                  static_cast<std::ptrdiff_t>(c.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
                continue;
              }
              out(row, (ch * c.kernel_h + ky) * c.kernel_w + kx) =
                  flat(s, (ch * g.in_h + static_cast<std::size_t>(iy)) *
                              g.in_w +
                              static_cast<std::size_t>(ix));
            }
          }
        }
        if (bias) out(row, cols) = 1.0;
      }
    }
  }
  return out;
}

// Transpose of extract_patches: scatter patch-space gradients back onto the
// flat input layout.  Fixed loop order keeps the accumulation deterministic.
inline linalg::DenseMatrix scatter_patches(const linalg::DenseMatrix& dpatch,
                                           const Conv2dDims& c,
                                           const LayerGeom& g, std::size_t n) {
  linalg::DenseMatrix out(n, g.in_c * g.in_h * g.in_w, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const std::size_t row = (s * g.out_h + oy) * g.out_w + ox;
        for (std::size_t ch = 0; ch < c.in_channels; ++ch) {
          for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                static_cast<std::ptrdiff_t>(c.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * c.stride + kx) -
                  static_cast<std::ptrdiff_t>(c.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
                continue;
              }
              out(s, (ch * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                         static_cast<std::size_t>(ix)) +=
                  dpatch(row, (ch * c.kernel_h + ky) * c.kernel_w + kx);
            }
          }
        }
      }
    }
  }
  return out;
}

// (n*oh*ow) x out_c rows -> n x (out_c*oh*ow) flat features.
inline linalg::DenseMatrix rows_to_flat(const linalg::DenseMatrix& rows,
                                        std::size_t n, const LayerGeom& g) {
  linalg::DenseMatrix out(n, g.out_c * g.out_h * g.out_w);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const std::size_t row = (s * g.out_h + oy) * g.out_w + ox;
        for (std::size_t oc = 0; oc < g.out_c; ++oc) {
          out(s, (oc * g.out_h + oy) * g.out_w + ox) = rows(row, oc);
        }
      }
    }
  }
  return out;
}

inline linalg::DenseMatrix flat_to_rows(const linalg::DenseMatrix& flat,
                                        std::size_t n, const LayerGeom& g) {
  linalg::DenseMatrix out(n * g.out_h * g.out_w, g.out_c);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const std::size_t row = (s * g.out_h + oy) * g.out_w + ox;
        for (std::size_t oc = 0; oc < g.out_c; ++oc) {
          out(row, oc) = flat(s, (oc * g.out_h + oy) * g.out_w + ox);
        }
      }
    }
  }
  return out;
}

inline linalg::DenseMatrix append_ones_column(const linalg::DenseMatrix& m) {
  linalg::DenseMatrix out(m.rows(), m.cols() + 1);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
    out(r, m.cols()) = 1.0;
  }
  return out;
}

inline linalg::DenseMatrix strip_bias_column(const linalg::DenseMatrix& w,
                                             bool has_bias) {
  if (!has_bias) return w;
  linalg::DenseMatrix out(w.rows(), w.cols() - 1);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c + 1 < w.cols(); ++c) out(r, c) = w(r, c);
  }
  return out;
}

}  // namespace detail

// Everything forward computes that backward and the curvature estimator
// need: logits always; per-layer captures, pre-activations, and geometry
// only when `capture` was requested.
struct ForwardResult {
  linalg::DenseMatrix logits;
  std::vector<LayerCapture> captures;
  std::vector<linalg::DenseMatrix> pre;  // layer-native rows
  std::vector<detail::LayerGeom> geoms;
  bool captured = false;
};

inline void validate_model(const Model& model) {
  if (model.layers.empty()) {
    throw ConfigError("model: needs at least one layer");
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& s = model.layers[i].spec;
    if (s.activation == Activation::softmax_cross_entropy &&
        i + 1 != model.layers.size()) {
      throw ConfigError("model: softmax head only allowed on the last layer");
    }
    const linalg::DenseMatrix& w = model.layers[i].weight;
    if (w.rows() != s.fan_out() || w.cols() != s.weight_cols()) {
      throw DimensionError("model: layer " + std::to_string(i) +
                           " weight shape does not match its spec");
    }
  }
  if (model.layers.back().spec.kind != LayerKind::dense) {
    throw ConfigError("model: last layer must be dense");
  }
}

inline ForwardResult forward(const Model& model, const Batch& batch,
                             bool capture) {
  validate_model(model);
  if (batch.inputs.cols() != model.input_features()) {
    throw DimensionError("forward: batch has " +
                         std::to_string(batch.inputs.cols()) +
                         " features, model expects " +
                         std::to_string(model.input_features()));
  }
  const std::size_t n = batch.size();

  ForwardResult fr;
  fr.captured = capture;
  if (capture) {
    fr.captures.resize(model.layers.size());
    fr.pre.resize(model.layers.size());
  }
  fr.geoms.resize(model.layers.size());

  linalg::DenseMatrix flat = batch.inputs;  // n x features, channel-major
  std::size_t cur_c = model.in_channels;
  std::size_t cur_h = model.in_height;
  std::size_t cur_w = model.in_width;

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& layer = model.layers[li];
    const LayerSpec& spec = layer.spec;

    linalg::DenseMatrix a_cap;
    detail::LayerGeom geom;
    if (spec.kind == LayerKind::dense) {
      if (flat.cols() != spec.in_features) {
        throw DimensionError("forward: layer " + std::to_string(li) +
                             " expects " + std::to_string(spec.in_features) +
                             " features, got " + std::to_string(flat.cols()));
      }
      a_cap = spec.has_bias ? detail::append_ones_column(flat) : flat;
    } else {
      geom = detail::conv_geometry(spec.conv, cur_c, cur_h, cur_w);
      a_cap = detail::extract_patches(flat, spec.conv, geom, spec.has_bias);
    }
    fr.geoms[li] = geom;

    linalg::DenseMatrix pre = linalg::matmul_nt(a_cap, layer.weight);

    linalg::DenseMatrix act = pre;
    if (spec.activation == Activation::relu) {
      for (double& v : act.data()) v = v > 0.0 ? v : 0.0;
    }

    if (capture) {
      fr.captures[li].layer_index = li;
      fr.captures[li].a = std::move(a_cap);
      fr.captures[li].sample_count = n;
      fr.pre[li] = std::move(pre);
    }

    if (spec.kind == LayerKind::dense) {
      flat = std::move(act);
      cur_c = spec.out_features;
      cur_h = 1;
      cur_w = 1;
    } else {
      flat = detail::rows_to_flat(act, n, geom);
      cur_c = geom.out_c;
      cur_h = geom.out_h;
      cur_w = geom.out_w;
    }
  }

  fr.logits = std::move(flat);
  return fr;
}

// Loss and gradients, kept as sums over samples.  Dividing by the global
// sample count exactly once (see mean_grads) is what lets sharded runs
// reproduce the single-process bytes.
struct BackwardResult {
  double loss_sum = 0.0;
  std::size_t sample_count = 0;
  std::vector<double> sample_losses;  // per-sample summed-head losses
  std::vector<linalg::DenseMatrix> grad_sums;

  double mean_loss() const {
    return loss_sum / static_cast<double>(sample_count);
  }
  std::vector<linalg::DenseMatrix> mean_grads() const {
    std::vector<linalg::DenseMatrix> out;
    out.reserve(grad_sums.size());
    for (const linalg::DenseMatrix& g : grad_sums) {
      out.push_back(linalg::scale(g, 1.0 / static_cast<double>(sample_count)));
    }
    return out;
  }
};

// Backpropagation.  Fills capture.g with per-row gradients of the *summed*
// loss w.r.t. pre-activations; grad_sums[l] = g^T a accumulated with the
// canonical pairwise order.
inline BackwardResult backward(const Model& model, const Batch& batch,
                               ForwardResult& fwd) {
  if (!fwd.captured) {
    throw StateError("backward: forward pass was run without capture");
  }
  const std::size_t n = batch.size();
  const std::size_t classes = model.output_features();
  if (fwd.logits.rows() != n || fwd.logits.cols() != classes) {
    throw DimensionError("backward: logits shape mismatch");
  }

  BackwardResult out;
  out.sample_count = n;
  out.grad_sums.resize(model.layers.size());

  // Head: per-sample loss and d(sum loss)/d(logits).
  std::vector<double> sample_loss(n, 0.0);
  linalg::DenseMatrix d(n, classes);
  if (model.cross_entropy_head()) {
    if (batch.labels.size() != n) {
      throw DimensionError("backward: cross-entropy head needs labels");
    }
    for (std::size_t s = 0; s < n; ++s) {
      const int y = batch.labels[s];
      if (y < 0 || static_cast<std::size_t>(y) >= classes) {
        throw DimensionError("backward: label out of range");
      }
      double zmax = fwd.logits(s, 0);
      for (std::size_t j = 1; j < classes; ++j) {
        zmax = std::max(zmax, fwd.logits(s, j));
      }
      double sumexp = 0.0;
      for (std::size_t j = 0; j < classes; ++j) {
        sumexp += std::exp(fwd.logits(s, j) - zmax);
      }
      sample_loss[s] = std::log(sumexp) + zmax -
                       fwd.logits(s, static_cast<std::size_t>(y));
      for (std::size_t j = 0; j < classes; ++j) {
        d(s, j) = std::exp(fwd.logits(s, j) - zmax) / sumexp -
                  (j == static_cast<std::size_t>(y) ? 1.0 : 0.0);
      }
    }
  } else {
    if (batch.targets.rows() != n || batch.targets.cols() != classes) {
      throw DimensionError("backward: squared-error head needs targets");
    }
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < classes; ++j) {
        const double r = fwd.logits(s, j) - batch.targets(s, j);
        sample_loss[s] += r * r;
        d(s, j) = 2.0 * r;
      }
    }
  }
  out.loss_sum = linalg::pairwise_sum(sample_loss);
  out.sample_losses = std::move(sample_loss);

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const Layer& layer = model.layers[li];
    const LayerSpec& spec = layer.spec;
    LayerCapture& cap = fwd.captures[li];

    cap.g = d;
    out.grad_sums[li] = linalg::pairwise_row_outer(d, cap.a);

    if (li == 0) break;

    // Gradient w.r.t. this layer's input, in flat feature layout.
    linalg::DenseMatrix dpatch =
        linalg::matmul(d, detail::strip_bias_column(layer.weight,
                                                    spec.has_bias));
    linalg::DenseMatrix dflat =
        spec.kind == LayerKind::dense
            ? std::move(dpatch)
            : detail::scatter_patches(dpatch, spec.conv, fwd.geoms[li], n);

    // Through the previous layer's activation.
    const Layer& prev = model.layers[li - 1];
    linalg::DenseMatrix dprev =
        prev.spec.kind == LayerKind::dense
            ? std::move(dflat)
            : detail::flat_to_rows(dflat, n, fwd.geoms[li - 1]);
    if (prev.spec.activation == Activation::relu) {
      const linalg::DenseMatrix& pre = fwd.pre[li - 1];
      linalg::require_same_shape(dprev, pre, "backward");
      for (std::size_t i = 0; i < dprev.size(); ++i) {
        if (pre.data()[i] <= 0.0) dprev.data()[i] = 0.0;
      }
    }
    d = std::move(dprev);
  }
  return out;
}

// Convenience wrapper returning (mean loss, mean grads).
inline std::pair<double, std::vector<linalg::DenseMatrix>> backward_mean(
    const Model& model, const Batch& batch, ForwardResult& fwd) {
  BackwardResult r = backward(model, batch, fwd);
  return {r.mean_loss(), r.mean_grads()};
}

// Momentum SGD with optional decoupled-style weight decay added to the raw
// gradient: v = mu*v + g + wd*w; w -= lr*v.
inline void sgd_step(Model& model,
                     const std::vector<linalg::DenseMatrix>& grads, double lr,
                     double momentum, double weight_decay) {
  if (grads.size() != model.layers.size()) {
    throw DimensionError("sgd_step: gradient count != layer count");
  }
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    Layer& layer = model.layers[li];
    linalg::require_same_shape(layer.weight, grads[li], "sgd_step");
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
      double v = momentum * layer.velocity.data()[i] + grads[li].data()[i] +
                 weight_decay * layer.weight.data()[i];
      layer.velocity.data()[i] = v;
      layer.weight.data()[i] -= lr * v;
    }
  }
  if (!model.parameters_finite()) {
    throw StateError("sgd_step: parameters became non-finite");
  }
}

// Fraction of correctly classified examples (argmax of logits; ties resolve
// to the lowest class index).
inline double accuracy(const Model& model, const Batch& batch) {
  if (batch.regression()) {
    throw StateError("accuracy: batch has no class labels");
  }
  ForwardResult fr = forward(model, batch, /*capture=*/false);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < fr.logits.cols(); ++j) {
      if (fr.logits(s, j) > fr.logits(s, best)) best = j;
    }
    if (static_cast<int>(best) == batch.labels[s]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

// --- Builders -------------------------------------------------------------

namespace detail {

inline void init_layer(Layer& layer, util::Rng& rng) {
  const LayerSpec& s = layer.spec;
  layer.weight = linalg::DenseMatrix(s.fan_out(), s.weight_cols(), 0.0);
  layer.velocity = layer.weight;
  const double gain = s.activation == Activation::relu ? 2.0 : 1.0;
  const double std = std::sqrt(gain / static_cast<double>(s.fan_in()));
  for (std::size_t r = 0; r < s.fan_out(); ++r) {
    for (std::size_t c = 0; c < s.fan_in(); ++c) {
      layer.weight(r, c) = std * rng.normal();
    }
    // bias column (if any) starts at zero
  }
}

}  // namespace detail

// Fully connected classifier: relu hidden layers, softmax head.
inline Model make_mlp(std::size_t in_features,
                      const std::vector<std::size_t>& hidden,
                      std::size_t classes, std::uint64_t seed) {
  if (in_features == 0 || classes == 0) {
    throw ConfigError("model: in_features and classes must be positive");
  }
  Model m;
  m.rng_seed = seed;
  m.in_channels = in_features;
  util::Rng rng(seed);
  std::size_t cur = in_features;
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("model.hidden: layer width must be positive");
    Layer l;
    l.spec = LayerSpec{LayerKind::dense, cur, h, Conv2dDims{}, true,
                       Activation::relu};
    detail::init_layer(l, rng);
    m.layers.push_back(std::move(l));
    cur = h;
  }
  Layer head;
  head.spec = LayerSpec{LayerKind::dense, cur, classes, Conv2dDims{}, true,
                        Activation::softmax_cross_entropy};
  detail::init_layer(head, rng);
  m.layers.push_back(std::move(head));
  validate_model(m);
  return m;
}

// Small convolutional classifier: two 3x3 conv layers (the second with
// stride 2) followed by a dense softmax head.
inline Model make_conv_net(std::size_t channels, std::size_t height,
                           std::size_t width, std::size_t classes,
                           std::uint64_t seed) {
  Model m;
  m.rng_seed = seed;
  m.in_channels = channels;
  m.in_height = height;
  m.in_width = width;
  util::Rng rng(seed);

  Layer c1;
  c1.spec.kind = LayerKind::conv2d;
  c1.spec.conv = Conv2dDims{channels, 8, 3, 3, 1, 1};
  c1.spec.activation = Activation::relu;
  detail::init_layer(c1, rng);
  m.layers.push_back(std::move(c1));

  Layer c2;
  c2.spec.kind = LayerKind::conv2d;
  c2.spec.conv = Conv2dDims{8, 8, 3, 3, 2, 1};
  c2.spec.activation = Activation::relu;
  detail::init_layer(c2, rng);
  m.layers.push_back(std::move(c2));

  const std::size_t oh = (height + 2 - 3) / 2 + 1;
  const std::size_t ow = (width + 2 - 3) / 2 + 1;
  Layer head;
  head.spec = LayerSpec{LayerKind::dense, 8 * oh * ow, classes, Conv2dDims{},
                        true, Activation::softmax_cross_entropy};
  detail::init_layer(head, rng);
  m.layers.push_back(std::move(head));
  validate_model(m);
  return m;
}

}  // namespace kfacsim::net
