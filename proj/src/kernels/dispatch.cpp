// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include <cstdlib>
#include <cstring>
#include <string>

#include "dtnlab/core/error.hpp"
#include "dtnlab/kernels/kernels.hpp"

namespace dtnlab::kernels {

namespace {

struct Dispatch {
  KernelTable table;
  Backend backend;
};

bool avx2_buildable() {
#if defined(__AVX2__) || defined(DTNLAB_HAVE_AVX2_TU)
  return true;
#else
  return false;
#endif
}

Dispatch make_dispatch() {
  const char* env = std::getenv("DTNLAB_KERNELS");
  std::string want = env ? env : "auto";
  if (want == "scalar") {
    return {detail::scalar_table_f32(), Backend::kScalar};
  }
  if (want == "avx2") {
    require(cpu_supports_avx2(), "kernels", "DTNLAB_KERNELS=avx2 but the CPU lacks AVX2/FMA");
    return {detail::avx2_table_f32(), Backend::kAvx2};
  }
  if (want != "auto") {
    fail("kernels", "unknown DTNLAB_KERNELS value '" + want + "' (scalar|avx2|auto)");
  }
  if (cpu_supports_avx2()) {
    return {detail::avx2_table_f32(), Backend::kAvx2};
  }
  return {detail::scalar_table_f32(), Backend::kScalar};
}

Dispatch& dispatch() {
  static Dispatch d = make_dispatch();
  return d;
}

}  // namespace

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return avx2_buildable() && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table() { return dispatch().table; }

Backend active_backend() { return dispatch().backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "?";
}

void force_backend(Backend b) {
  if (b == Backend::kAvx2) {
    require(cpu_supports_avx2(), "kernels", "cannot force avx2: unsupported CPU");
    dispatch() = {detail::avx2_table_f32(), Backend::kAvx2};
  } else {
    dispatch() = {detail::scalar_table_f32(), Backend::kScalar};
  }
}

}  // namespace dtnlab::kernels
