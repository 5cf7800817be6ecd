// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dtnlab/core/rng.hpp"
#include "dtnlab/kernels/kernels.hpp"

using dtnlab::Rng;
namespace kn = dtnlab::kernels;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, scale));
  return v;
}

void check_close(const std::vector<float>& a, const std::vector<float>& b, float tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float denom = std::max({std::abs(a[i]), std::abs(b[i]), 1.0f});
    CHECK(std::abs(a[i] - b[i]) / denom < tol);
  }
}

bool have_avx2() { return kn::cpu_supports_avx2(); }

// Runs fn under both backends and returns (scalar_result, avx2_result).
template <typename Fn>
auto both_backends(Fn&& fn) {
  kn::force_backend(kn::Backend::kScalar);
  auto scalar = fn();
  kn::force_backend(kn::Backend::kAvx2);
  auto simd = fn();
  kn::force_backend(kn::Backend::kScalar);
  return std::pair{scalar, simd};
}

}  // namespace

TEST_CASE("gemm_nn matches a hand example") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  std::vector<float> a{1, 2, 3, 4}, b{5, 6, 7, 8}, c(4, 0.0f);
  kn::gemm_nn(a.data(), b.data(), c.data(), 2, 2, 2, false);
  CHECK(c == std::vector<float>{19, 22, 43, 50});
  kn::gemm_nn(a.data(), b.data(), c.data(), 2, 2, 2, true);
  CHECK(c == std::vector<float>{38, 44, 86, 100});
}

TEST_CASE("gemm transpose variants agree with explicit transposition") {
  Rng rng(7);
  const std::size_t m = 5, k = 9, n = 4;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, n * k);   // for nt: b is [n x k]
  auto bt = std::vector<float>(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t l = 0; l < k; ++l) bt[l * n + j] = b[j * k + l];

  std::vector<float> via_nt(m * n, 0.0f), via_nn(m * n, 0.0f);
  kn::gemm_nt(a.data(), b.data(), via_nt.data(), m, k, n, false);
  kn::gemm_nn(a.data(), bt.data(), via_nn.data(), m, k, n, false);
  check_close(via_nt, via_nn, 1e-5f);

  // tn: c[k x n] = a^T [k x m] * b2 [m x n]
  auto b2 = random_vec(rng, m * n);
  auto at = std::vector<float>(k * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) at[l * m + i] = a[i * k + l];
  std::vector<float> via_tn(k * n, 0.0f), via_nn2(k * n, 0.0f);
  kn::gemm_tn(a.data(), b2.data(), via_tn.data(), m, k, n, false);
  kn::gemm_nn(at.data(), b2.data(), via_nn2.data(), k, m, n, false);
  check_close(via_tn, via_nn2, 1e-5f);
}

TEST_CASE("scalar and avx2 backends are equivalent") {
  if (!have_avx2()) return;
  Rng rng(42);
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                         {2, 3, 5},
                         {7, 16, 9},
                         {13, 33, 17},
                         {4, 640, 67},
                         {31, 127, 65}}) {
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    auto bt = random_vec(rng, n * k);
    auto b2 = random_vec(rng, m * n);

    auto [s_nn, v_nn] = both_backends([&] {
      std::vector<float> c(m * n, 1.0f);
      kn::gemm_nn(a.data(), b.data(), c.data(), m, k, n, true);
      return c;
    });
    check_close(s_nn, v_nn, 1e-4f);

    auto [s_nt, v_nt] = both_backends([&] {
      std::vector<float> c(m * n, 0.0f);
      kn::gemm_nt(a.data(), bt.data(), c.data(), m, k, n, false);
      return c;
    });
    check_close(s_nt, v_nt, 1e-4f);

    auto [s_tn, v_tn] = both_backends([&] {
      std::vector<float> c(k * n, 0.0f);
      kn::gemm_tn(a.data(), b2.data(), c.data(), m, k, n, false);
      return c;
    });
    check_close(s_tn, v_tn, 1e-4f);
  }

  for (std::size_t n : {1u, 7u, 8u, 9u, 64u, 1000u, 1037u}) {
    auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);

    auto [s_add, v_add] = both_backends([&] {
      std::vector<float> out(n);
      kn::add(x.data(), y.data(), out.data(), n);
      return out;
    });
    CHECK(s_add == v_add);  // no fma involved: bit-exact

    auto [s_mul, v_mul] = both_backends([&] {
      std::vector<float> out(n);
      kn::mul(x.data(), y.data(), out.data(), n);
      return out;
    });
    CHECK(s_mul == v_mul);

    auto [s_relu, v_relu] = both_backends([&] {
      std::vector<float> out(n);
      kn::relu(x.data(), out.data(), n);
      return out;
    });
    CHECK(s_relu == v_relu);

    auto [s_rb, v_rb] = both_backends([&] {
      std::vector<float> out = y;
      kn::relu_backward(x.data(), y.data(), out.data(), n, true);
      return out;
    });
    CHECK(s_rb == v_rb);

    auto [s_axpy, v_axpy] = both_backends([&] {
      std::vector<float> out = y;
      kn::axpy(0.37f, x.data(), out.data(), n);
      return out;
    });
    check_close(s_axpy, v_axpy, 1e-6f);

    auto [s_dot, v_dot] = both_backends([&] { return kn::dot(x.data(), y.data(), n); });
    {
      const float denom = std::max({std::abs(s_dot), std::abs(v_dot), 1.0f});
      CHECK(std::abs(s_dot - v_dot) / denom < 1e-4f);
    }

    auto [s_sum, v_sum] = both_backends([&] { return kn::sum(x.data(), n); });
    {
      const float denom = std::max({std::abs(s_sum), std::abs(v_sum), 1.0f});
      CHECK(std::abs(s_sum - v_sum) / denom < 1e-4f);
    }

    auto [s_adam, v_adam] = both_backends([&] {
      std::vector<float> p = x, g = y, m(n, 0.01f), v(n, 0.02f);
      kn::adam_step(p.data(), g.data(), m.data(), v.data(), n, 1e-3f, 0.9f, 0.999f, 1e-8f, 0.1f,
                    0.001999f);
      p.insert(p.end(), m.begin(), m.end());
      p.insert(p.end(), v.begin(), v.end());
      return p;
    });
    check_close(s_adam, v_adam, 1e-5f);
  }
}

TEST_CASE("adam_step matches the update formulas at t=1") {
  // Single parameter, fresh moments: delta must be -lr * g / (|g| + eps')
  // after bias correction, i.e. mhat = g, vhat = g^2.
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = -3.7;
  double p = 1.25, m = 0.0, v = 0.0;
  const double bc1 = 1.0 - b1;         // 1 - b1^1
  const double bc2 = 1.0 - b2;         // 1 - b2^1
  double gg = g;
  kn::adam_step(&p, &gg, &m, &v, 1, lr, b1, b2, eps, bc1, bc2);
  const double expected = 1.25 - lr * g / (std::sqrt(g * g) + eps);
  CHECK(p == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("relu reference semantics") {
  std::vector<float> x{-1.0f, 0.0f, 2.5f}, y(3);
  kn::relu(x.data(), y.data(), 3);
  CHECK(y == std::vector<float>{0.0f, 0.0f, 2.5f});

  std::vector<float> dy{10.0f, 10.0f, 10.0f}, dx(3, 0.0f);
  kn::relu_backward(x.data(), dy.data(), dx.data(), 3, false);
  // Gradient at the kink (pre == 0) is defined as 0.
  CHECK(dx == std::vector<float>{0.0f, 0.0f, 10.0f});
}

TEST_CASE("relu propagates NaN identically on both backends") {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::vector<float> x{-1.0f, nan, 3.0f, nan, -2.0f, 0.5f, nan, 7.0f, -0.5f};
  auto run = [&] {
    std::vector<float> y(x.size());
    kn::relu(x.data(), y.data(), x.size());
    return y;
  };
  kn::force_backend(kn::Backend::kScalar);
  const auto ys = run();
  CHECK(std::isnan(ys[1]));
  CHECK(std::isnan(ys[3]));
  CHECK(ys[0] == 0.0f);
  CHECK(ys[2] == 3.0f);
  if (have_avx2()) {
    kn::force_backend(kn::Backend::kAvx2);
    const auto yv = run();
    kn::force_backend(kn::Backend::kScalar);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::isnan(ys[i]) == std::isnan(yv[i]));
      if (!std::isnan(ys[i])) CHECK(ys[i] == yv[i]);
    }
  }
}
