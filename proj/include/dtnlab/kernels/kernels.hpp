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

#include <cstddef>

namespace dtnlab::kernels {

// Arithmetic inner loops behind the model code. Float entry points dispatch
// through a function-pointer table resolved at startup (scalar reference or
// AVX2+FMA, picked by cpuid or the DTNLAB_KERNELS env var: "scalar" | "avx2"
// | "auto"). Double entry points always run the scalar reference path; the
// 64-bit mode exists for gradient verification, not speed.
//
// All matrices are dense row-major.

enum class Backend { kScalar, kAvx2 };

Backend active_backend();
const char* backend_name(Backend b);
// Test hook. Throws if the requested backend is not usable on this CPU.
void force_backend(Backend b);
bool cpu_supports_avx2();

struct KernelTable {
  // c[m x n] (+)= a[m x k] * b[k x n]
  void (*gemm_nn)(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // c[m x n] (+)= a[m x k] * b[n x k]^T
  void (*gemm_nt)(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // c[k x n] (+)= a[m x k]^T * b[m x n]
  void (*gemm_tn)(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);

  void (*add)(const float* a, const float* b, float* out, std::size_t n);
  void (*mul)(const float* a, const float* b, float* out, std::size_t n);
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);  // y += alpha*x
  void (*scale)(float alpha, float* x, std::size_t n);
  float (*dot)(const float* a, const float* b, std::size_t n);
  float (*sum)(const float* a, std::size_t n);

  void (*relu)(const float* x, float* y, std::size_t n);
  // dx (+)= dy where pre > 0
  void (*relu_backward)(const float* pre, const float* dy, float* dx, std::size_t n,
                        bool accumulate);

  // One Adam step with bias correction folded into the scalar coefficients:
  //   m = beta1*m + (1-beta1)*g ; v = beta2*v + (1-beta2)*g^2
  //   p -= lr * (m/bc1) / (sqrt(v/bc2) + eps)
  void (*adam_step)(float* p, const float* g, float* m, float* v, std::size_t n, float lr,
                    float beta1, float beta2, float eps, float bc1, float bc2);
};

const KernelTable& table();

namespace detail {
KernelTable scalar_table_f32();
KernelTable avx2_table_f32();

// Scalar reference implementations, shared by the double path and the
// scalar float table.
template <typename T>
void gemm_nn_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate);
template <typename T>
void gemm_nt_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate);
template <typename T>
void gemm_tn_ref(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate);
template <typename T>
void adam_step_ref(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps,
                   T bc1, T bc2);
}  // namespace detail

// ---- typed front ends -------------------------------------------------

inline void gemm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  table().gemm_nn(a, b, c, m, k, n, accumulate);
}
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  detail::gemm_nn_ref(a, b, c, m, k, n, accumulate);
}
inline void gemm_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  table().gemm_nt(a, b, c, m, k, n, accumulate);
}
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  detail::gemm_nt_ref(a, b, c, m, k, n, accumulate);
}
inline void gemm_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  table().gemm_tn(a, b, c, m, k, n, accumulate);
}
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  detail::gemm_tn_ref(a, b, c, m, k, n, accumulate);
}

inline void add(const float* a, const float* b, float* out, std::size_t n) {
  table().add(a, b, out, n);
}
inline void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
inline void mul(const float* a, const float* b, float* out, std::size_t n) {
  table().mul(a, b, out, n);
}
inline void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
inline void axpy(float alpha, const float* x, float* y, std::size_t n) {
  table().axpy(alpha, x, y, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
inline void scale(float alpha, float* x, std::size_t n) { table().scale(alpha, x, n); }
inline void scale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}
inline float dot(const float* a, const float* b, std::size_t n) { return table().dot(a, b, n); }
inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
inline float sum(const float* a, std::size_t n) { return table().sum(a, n); }
inline double sum(const double* a, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}
inline void relu(const float* x, float* y, std::size_t n) { table().relu(x, y, n); }
inline void relu(const double* x, double* y, std::size_t n) {
  // NaN-propagating form (see the scalar float kernel)
  for (std::size_t i = 0; i < n; ++i) y[i] = 0 > x[i] ? 0 : x[i];
}
inline void relu_backward(const float* pre, const float* dy, float* dx, std::size_t n,
                          bool accumulate) {
  table().relu_backward(pre, dy, dx, n, accumulate);
}
inline void relu_backward(const double* pre, const double* dy, double* dx, std::size_t n,
                          bool accumulate) {
  if (accumulate) {
    for (std::size_t i = 0; i < n; ++i) dx[i] += pre[i] > 0 ? dy[i] : 0;
  } else {
    for (std::size_t i = 0; i < n; ++i) dx[i] = pre[i] > 0 ? dy[i] : 0;
  }
}
inline void adam_step(float* p, const float* g, float* m, float* v, std::size_t n, float lr,
                      float beta1, float beta2, float eps, float bc1, float bc2) {
  table().adam_step(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}
inline void adam_step(double* p, const double* g, double* m, double* v, std::size_t n, double lr,
                      double beta1, double beta2, double eps, double bc1, double bc2) {
  detail::adam_step_ref(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace dtnlab::kernels
