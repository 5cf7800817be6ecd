// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dtnlab/core/matrix.hpp"
#include "dtnlab/core/rng.hpp"
#include "dtnlab/fim/param_store.hpp"
#include "dtnlab/kernels/kernels.hpp"

namespace dtnlab::fim {

template <typename T>
T stable_sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

// He-style fan-in uniform init for weight matrices; biases start at zero.
template <typename T>
void init_he_uniform(ParamBlock<T>& b, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in > 0 ? fan_in : 1));
  for (auto& v : b.value) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void init_normal(ParamBlock<T>& b, double stddev, Rng& rng) {
  for (auto& v : b.value) v = static_cast<T>(rng.normal(0.0, stddev));
}

// y[B x out] = x[B x in] * W[in x out] (+ bias row)
template <typename T>
struct Linear {
  std::size_t w = 0;
  std::size_t b = 0;
  std::size_t in = 0;
  std::size_t out = 0;
  bool has_bias = true;

  void build(ParamStore<T>& ps, const std::string& name, std::size_t in_dim, std::size_t out_dim,
             Rng& rng, bool bias = true, bool zero_init = false) {
    in = in_dim;
    out = out_dim;
    has_bias = bias;
    w = ps.add(name + ".w", {in_dim, out_dim});
    if (!zero_init) init_he_uniform(ps.block(w), in_dim, rng);
    if (bias) b = ps.add(name + ".b", {out_dim});
  }

  void forward(const ParamStore<T>& ps, const Matrix<T>& x, Matrix<T>& y) const {
    y.resize(x.rows(), out);
    kernels::gemm_nn(x.data(), ps.block(w).value.data(), y.data(), x.rows(), in, out, false);
    if (has_bias) {
      const T* bias = ps.block(b).value.data();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        kernels::add(y.row(r), bias, y.row(r), out);
      }
    }
  }

  // Accumulates parameter grads; dx (+)= dy * W^T when dx != nullptr.
  void backward(ParamStore<T>& ps, const Matrix<T>& x, const Matrix<T>& dy, Matrix<T>* dx,
                bool dx_accumulate = true) const {
    kernels::gemm_tn(x.data(), dy.data(), ps.block(w).grad.data(), x.rows(), in, out, true);
    if (has_bias) {
      T* bg = ps.block(b).grad.data();
      for (std::size_t r = 0; r < dy.rows(); ++r) kernels::add(bg, dy.row(r), bg, out);
    }
    if (dx != nullptr) {
      if (!dx_accumulate) dx->resize(dy.rows(), in);
      kernels::gemm_nt(dy.data(), ps.block(w).value.data(), dx->data(), dy.rows(), out, in,
                       dx_accumulate);
    }
  }

  std::vector<std::size_t> blocks() const {
    return has_bias ? std::vector<std::size_t>{w, b} : std::vector<std::size_t>{w};
  }
};

template <typename T>
struct MlpCache {
  std::vector<Matrix<T>> inputs;  // input of each linear
  std::vector<Matrix<T>> pre;     // pre-activation of each hidden layer
};

// ReLU-hidden feed-forward stack with a linear output layer.
template <typename T>
struct Mlp {
  std::vector<Linear<T>> layers;

  void build(ParamStore<T>& ps, const std::string& name, std::size_t in_dim,
             const std::vector<std::size_t>& hidden, std::size_t out_dim, Rng& rng) {
    std::size_t d = in_dim;
    layers.clear();
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      Linear<T> l;
      l.build(ps, name + ".h" + std::to_string(i), d, hidden[i], rng);
      layers.push_back(l);
      d = hidden[i];
    }
    Linear<T> head;
    head.build(ps, name + ".out", d, out_dim, rng);
    layers.push_back(head);
  }

  std::size_t out_dim() const { return layers.back().out; }
  std::size_t in_dim() const { return layers.front().in; }

  void forward(const ParamStore<T>& ps, const Matrix<T>& x, Matrix<T>& y,
               MlpCache<T>* cache) const {
    Matrix<T> cur = x;
    if (cache != nullptr) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
      Matrix<T> pre;
      layers[i].forward(ps, cur, pre);
      if (cache != nullptr) {
        cache->inputs.push_back(cur);
        cache->pre.push_back(pre);
      }
      Matrix<T> act(pre.rows(), pre.cols());
      kernels::relu(pre.data(), act.data(), pre.size());
      cur = std::move(act);
    }
    if (cache != nullptr) cache->inputs.push_back(cur);
    layers.back().forward(ps, cur, y);
  }

  void backward(ParamStore<T>& ps, const MlpCache<T>& cache, const Matrix<T>& dy, Matrix<T>* dx,
                bool dx_accumulate = true) const {
    Matrix<T> grad = dy;
    for (std::size_t i = layers.size(); i-- > 0;) {
      const bool first = i == 0;
      Matrix<T>* target = first ? dx : nullptr;
      Matrix<T> dinput;
      if (!first) {
        dinput.resize(grad.rows(), layers[i].in);
        target = &dinput;
      }
      layers[i].backward(ps, cache.inputs[i], grad, target, first ? dx_accumulate : false);
      if (!first) {
        // through the ReLU of layer i-1
        Matrix<T> masked(dinput.rows(), dinput.cols());
        kernels::relu_backward(cache.pre[i - 1].data(), dinput.data(), masked.data(),
                               dinput.size(), false);
        grad = std::move(masked);
      }
    }
  }

  void collect_relu_masks(const MlpCache<T>& cache, std::vector<std::uint8_t>& out) const {
    for (const auto& pre : cache.pre) {
      for (std::size_t i = 0; i < pre.size(); ++i) out.push_back(pre.data()[i] > T(0) ? 1 : 0);
    }
  }

  std::vector<std::size_t> blocks() const {
    std::vector<std::size_t> all;
    for (const auto& l : layers) {
      for (const std::size_t h : l.blocks()) all.push_back(h);
    }
    return all;
  }
};

template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  std::vector<T> inv_std;
};

// Row-wise layer normalization with learnable gain/bias.
template <typename T>
struct LayerNorm {
  std::size_t gain = 0;
  std::size_t bias = 0;
  std::size_t dim = 0;
  static constexpr double kEps = 1e-5;

  void build(ParamStore<T>& ps, const std::string& name, std::size_t d) {
    dim = d;
    gain = ps.add(name + ".gain", {d});
    bias = ps.add(name + ".bias", {d});
    auto& g = ps.block(gain).value;
    g.assign(g.size(), T(1));
  }

  void forward(const ParamStore<T>& ps, const Matrix<T>& x, Matrix<T>& y,
               LayerNormCache<T>* cache) const {
    y.resize(x.rows(), dim);
    if (cache != nullptr) {
      cache->xhat.resize(x.rows(), dim);
      cache->inv_std.assign(x.rows(), T(0));
    }
    const T* g = ps.block(gain).value.data();
    const T* b = ps.block(bias).value.data();
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const T* xr = x.row(r);
      T mean = kernels::sum(xr, dim) / static_cast<T>(dim);
      T var = T(0);
      for (std::size_t j = 0; j < dim; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<T>(dim);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(kEps));
      T* yr = y.row(r);
      for (std::size_t j = 0; j < dim; ++j) {
        const T xh = (xr[j] - mean) * inv;
        if (cache != nullptr) cache->xhat.at(r, j) = xh;
        yr[j] = g[j] * xh + b[j];
      }
      if (cache != nullptr) cache->inv_std[r] = inv;
    }
  }

  void backward(ParamStore<T>& ps, const LayerNormCache<T>& cache, const Matrix<T>& dy,
                Matrix<T>& dx) const {
    dx.resize(dy.rows(), dim);
    const T* g = ps.block(gain).value.data();
    T* dg = ps.block(gain).grad.data();
    T* db = ps.block(bias).grad.data();
    const T invd = T(1) / static_cast<T>(dim);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      const T* dyr = dy.row(r);
      const T* xh = cache.xhat.row(r);
      T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
      for (std::size_t j = 0; j < dim; ++j) {
        dg[j] += dyr[j] * xh[j];
        db[j] += dyr[j];
        const T dxh = dyr[j] * g[j];
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xh[j];
      }
      const T inv = cache.inv_std[r];
      T* dxr = dx.row(r);
      for (std::size_t j = 0; j < dim; ++j) {
        const T dxh = dyr[j] * g[j];
        dxr[j] = inv * (dxh - invd * sum_dxhat - invd * xh[j] * sum_dxhat_xhat);
      }
    }
  }

  std::vector<std::size_t> blocks() const { return {gain, bias}; }
};

// Softmax over each row, numerically shifted.
template <typename T>
inline void softmax_rows(const Matrix<T>& logits, Matrix<T>& out) {
  out.resize(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const T* z = logits.row(r);
    T mx = z[0];
    for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, z[j]);
    T denom = T(0);
    T* o = out.row(r);
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      o[j] = std::exp(z[j] - mx);
      denom += o[j];
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) o[j] /= denom;
  }
}

}  // namespace dtnlab::fim
