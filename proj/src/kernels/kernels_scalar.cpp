// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include <cmath>
#include <cstring>

#include "dtnlab/kernels/kernels.hpp"

namespace dtnlab::kernels::detail {

// Reference kernels. The AVX2 variants are equivalence-tested against these.

template <typename T>
void gemm_nn_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(T));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const T av = arow[l];
      if (av == T(0)) continue;
      const T* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = 0;
      for (std::size_t l = 0; l < k; ++l) s += arow[l] * brow[l];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

template <typename T>
void gemm_tn_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate) {
  if (!accumulate) std::memset(c, 0, k * n * sizeof(T));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const T av = arow[l];
      if (av == T(0)) continue;
      T* crow = c + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void adam_step_ref(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps,
                   T bc1, T bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template void gemm_nn_ref<float>(const float*, const float*, float*, std::size_t, std::size_t,
                                 std::size_t, bool);
template void gemm_nn_ref<double>(const double*, const double*, double*, std::size_t, std::size_t,
                                  std::size_t, bool);
template void gemm_nt_ref<float>(const float*, const float*, float*, std::size_t, std::size_t,
                                 std::size_t, bool);
template void gemm_nt_ref<double>(const double*, const double*, double*, std::size_t, std::size_t,
                                  std::size_t, bool);
template void gemm_tn_ref<float>(const float*, const float*, float*, std::size_t, std::size_t,
                                 std::size_t, bool);
template void gemm_tn_ref<double>(const double*, const double*, double*, std::size_t, std::size_t,
                                  std::size_t, bool);
template void adam_step_ref<float>(float*, const float*, float*, float*, std::size_t, float, float,
                                   float, float, float, float);
template void adam_step_ref<double>(double*, const double*, double*, double*, std::size_t, double,
                                    double, double, double, double, double);

namespace {

void add_f32(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
void scale_f32(float alpha, float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}
float dot_f32(const float* a, const float* b, std::size_t n) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
float sum_f32(const float* a, std::size_t n) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}
void relu_f32(const float* x, float* y, std::size_t n) {
  // written as (0 > x ? 0 : x) to match maxps semantics bit-for-bit: NaN
  // propagates instead of being silently flushed to zero
  for (std::size_t i = 0; i < n; ++i) y[i] = 0.0f > x[i] ? 0.0f : x[i];
}
void relu_backward_f32(const float* pre, const float* dy, float* dx, std::size_t n,
                       bool accumulate) {
  if (accumulate) {
    for (std::size_t i = 0; i < n; ++i) dx[i] += pre[i] > 0.0f ? dy[i] : 0.0f;
  } else {
    for (std::size_t i = 0; i < n; ++i) dx[i] = pre[i] > 0.0f ? dy[i] : 0.0f;
  }
}

}  // namespace

KernelTable scalar_table_f32() {
  KernelTable t;
  t.gemm_nn = &gemm_nn_ref<float>;
  t.gemm_nt = &gemm_nt_ref<float>;
  t.gemm_tn = &gemm_tn_ref<float>;
  t.add = &add_f32;
  t.mul = &mul_f32;
  t.axpy = &axpy_f32;
  t.scale = &scale_f32;
  t.dot = &dot_f32;
  t.sum = &sum_f32;
  t.relu = &relu_f32;
  t.relu_backward = &relu_backward_f32;
  t.adam_step = &adam_step_ref<float>;
  return t;
}

}  // namespace dtnlab::kernels::detail
