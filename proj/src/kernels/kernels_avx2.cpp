// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

// Compiled with -mavx2 -mfma. Only reached through the dispatch table after a
// cpuid check, so no runtime guards here.

#include "dtnlab/kernels/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace dtnlab::kernels::detail {
namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// c[m x n] (+)= a[m x k] * b[k x n]; broadcast-A over rows of B keeps the
// inner loop streaming on both B and C.
void gemm_nn_avx2(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  const std::size_t n8 = n & ~std::size_t{7};
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const float av = arow[l];
      if (av == 0.0f) continue;
      const float* brow = b + l * n;
      const __m256 avv = _mm256_set1_ps(av);
      std::size_t j = 0;
      for (; j < n8; j += 8) {
        __m256 cv = _mm256_loadu_ps(crow + j);
        cv = _mm256_fmadd_ps(avv, _mm256_loadu_ps(brow + j), cv);
        _mm256_storeu_ps(crow + j, cv);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] (+)= a[m x k] * b[n x k]^T; dot-product form over k.
void gemm_nt_avx2(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  const std::size_t k8 = k & ~std::size_t{7};
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      __m256 acc = _mm256_setzero_ps();
      std::size_t l = 0;
      for (; l < k8; l += 8) {
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + l), _mm256_loadu_ps(brow + l), acc);
      }
      float s = hsum256(acc);
      for (; l < k; ++l) s += arow[l] * brow[l];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

// c[k x n] (+)= a[m x k]^T * b[m x n]; rank-1 updates per row of a/b.
void gemm_tn_avx2(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, k * n * sizeof(float));
  const std::size_t n8 = n & ~std::size_t{7};
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    const float* brow = b + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const float av = arow[l];
      if (av == 0.0f) continue;
      float* crow = c + l * n;
      const __m256 avv = _mm256_set1_ps(av);
      std::size_t j = 0;
      for (; j < n8; j += 8) {
        __m256 cv = _mm256_loadu_ps(crow + j);
        cv = _mm256_fmadd_ps(avv, _mm256_loadu_ps(brow + j), cv);
        _mm256_storeu_ps(crow + j, cv);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void add_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_avx2(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) {
    __m256 yv = _mm256_loadu_ps(y + i);
    yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
    _mm256_storeu_ps(y + i, yv);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(float alpha, float* x, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) {
    _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) {
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  }
  float s = hsum256(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

float sum_avx2(const float* a, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
  float s = hsum256(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

void relu_avx2(const float* x, float* y, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(const float* pre, const float* dy, float* dx, std::size_t n,
                        bool accumulate) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(pre + i), zero, _CMP_GT_OQ);
    __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
    if (accumulate) g = _mm256_add_ps(g, _mm256_loadu_ps(dx + i));
    _mm256_storeu_ps(dx + i, g);
  }
  if (accumulate) {
    for (; i < n; ++i) dx[i] += pre[i] > 0.0f ? dy[i] : 0.0f;
  } else {
    for (; i < n; ++i) dx[i] = pre[i] > 0.0f ? dy[i] : 0.0f;
  }
}

void adam_step_avx2(float* p, const float* g, float* m, float* v, std::size_t n, float lr,
                    float beta1, float beta2, float eps, float bc1, float bc2) {
  const __m256 b1 = _mm256_set1_ps(beta1);
  const __m256 b1c = _mm256_set1_ps(1.0f - beta1);
  const __m256 b2 = _mm256_set1_ps(beta2);
  const __m256 b2c = _mm256_set1_ps(1.0f - beta2);
  const __m256 rbc1 = _mm256_set1_ps(1.0f / bc1);
  const __m256 rbc2 = _mm256_set1_ps(1.0f / bc2);
  const __m256 lrv = _mm256_set1_ps(lr);
  const __m256 epsv = _mm256_set1_ps(eps);
  std::size_t i = 0;
  const std::size_t n8 = n & ~std::size_t{7};
  for (; i < n8; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_add_ps(_mm256_mul_ps(b1, mv), _mm256_mul_ps(b1c, gv));
    vv = _mm256_add_ps(_mm256_mul_ps(b2, vv), _mm256_mul_ps(b2c, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_mul_ps(mv, rbc1);
    const __m256 vhat = _mm256_mul_ps(vv, rbc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
    __m256 pv = _mm256_loadu_ps(p + i);
    pv = _mm256_sub_ps(pv, _mm256_div_ps(_mm256_mul_ps(lrv, mhat), denom));
    _mm256_storeu_ps(p + i, pv);
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] / bc1;
    const float vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

KernelTable avx2_table_f32() {
  KernelTable t;
  t.gemm_nn = &gemm_nn_avx2;
  t.gemm_nt = &gemm_nt_avx2;
  t.gemm_tn = &gemm_tn_avx2;
  t.add = &add_avx2;
  t.mul = &mul_avx2;
  t.axpy = &axpy_avx2;
  t.scale = &scale_avx2;
  t.dot = &dot_avx2;
  t.sum = &sum_avx2;
  t.relu = &relu_avx2;
  t.relu_backward = &relu_backward_avx2;
  t.adam_step = &adam_step_avx2;
  return t;
}

}  // namespace dtnlab::kernels::detail

#else  // !__AVX2__

namespace dtnlab::kernels::detail {
KernelTable avx2_table_f32() { return scalar_table_f32(); }
}  // namespace dtnlab::kernels::detail

#endif
