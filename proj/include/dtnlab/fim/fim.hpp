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

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dtnlab/core/matrix.hpp"
#include "dtnlab/core/rng.hpp"
#include "dtnlab/data/dataset.hpp"
#include "dtnlab/data/schema.hpp"
#include "dtnlab/fim/layers.hpp"
#include "dtnlab/fim/param_store.hpp"

namespace dtnlab::fim {

enum class FimKind : std::uint8_t { kMlp, kGdcn, kMasknet, kMemonet };

const char* fim_kind_name(FimKind k);
FimKind fim_kind_from_name(const std::string& name);

// Configuration of one feature-interaction module. Fields outside a kind's
// section are ignored by that kind.
struct FimSpec {
  FimKind kind = FimKind::kMlp;
  std::size_t output_dim = 512;

  // mlp
  std::vector<std::size_t> mlp_hidden = {256, 128};

  // gdcn: gated cross layers with residual; rank 0 keeps full-rank matrices.
  std::size_t gdcn_layers = 2;
  std::size_t gdcn_rank = 0;

  // masknet: serial instance-guided mask block.
  std::size_t masknet_hidden = 640;
  double masknet_reduction = 2.0;

  // memonet: two hash codebooks over selected categorical field pairs.
  std::size_t memonet_entries = std::size_t{1} << 14;
  std::size_t memonet_code_dim = 16;
  std::vector<std::pair<std::string, std::string>> memonet_fields;

  std::optional<std::size_t> parameter_budget;
};

// Closed-form learnable-parameter count of a module built from `spec`
// against input width `in_dim`. Matches the built module exactly.
std::size_t predicted_parameter_count(const FimSpec& spec, std::size_t in_dim);

// Adjusts the kind's size knob (mlp widths / gdcn rank / masknet hidden /
// memonet entries) so the realized count lands within +-10% of
// spec.parameter_budget. Throws if the kind cannot reach the budget.
FimSpec fit_to_budget(const FimSpec& spec, std::size_t in_dim, std::size_t budget);

// ---- caches -----------------------------------------------------------

template <typename T>
struct GdcnCache {
  Matrix<T> x0;
  std::vector<Matrix<T>> c;      // c_0 .. c_L
  std::vector<Matrix<T>> u;      // cross pre-gate product input W_c c_l + b_c
  std::vector<Matrix<T>> gate;   // sigmoid(W_g c_l + b_g)
  std::vector<Matrix<T>> mid_c;  // low-rank intermediates (empty if full rank)
  std::vector<Matrix<T>> mid_g;
};

template <typename T>
struct MasknetCache {
  Matrix<T> x;
  Matrix<T> bneck_pre;
  Matrix<T> bneck_act;
  Matrix<T> mask;
  Matrix<T> hidden;
  LayerNormCache<T> ln;
  Matrix<T> ln_out;
  Matrix<T> masked;  // pre-ReLU
  Matrix<T> act;
};

template <typename T>
struct MemonetCache {
  // per (row-major) [row * n_pairs + p]
  std::vector<std::size_t> idx1;
  std::vector<std::size_t> idx2;
  Matrix<T> summed;    // [B x n_pairs*code_dim], pre-combine
  Matrix<T> combined;  // [B x n_pairs*code_dim], post-combine concat
};

template <typename T>
using FimCache = std::variant<MlpCache<T>, GdcnCache<T>, MasknetCache<T>, MemonetCache<T>>;

// What a module reads: the concatenated input representation and, for
// memonet, the raw categorical ids.
template <typename T>
struct FimInput {
  const Matrix<T>* x = nullptr;
  const data::ExampleBatch* batch = nullptr;
};

// ---- module interface ---------------------------------------------------

template <typename T>
class FimModule {
 public:
  virtual ~FimModule() = default;

  const FimSpec& spec() const { return spec_; }
  std::size_t output_dim() const { return spec_.output_dim; }
  const std::vector<std::size_t>& blocks() const { return blocks_; }

  std::size_t parameter_count(const ParamStore<T>& ps) const { return ps.count(blocks_); }

  virtual void forward(const ParamStore<T>& ps, const FimInput<T>& in, Matrix<T>& out,
                       FimCache<T>* cache) const = 0;
  // dx may be null (memonet contributes nothing to the embedding gradient).
  virtual void backward(ParamStore<T>& ps, const FimCache<T>& cache, const Matrix<T>& dout,
                        Matrix<T>* dx) const = 0;
  virtual void collect_relu_masks(const FimCache<T>& cache, std::vector<std::uint8_t>& out) const {
    (void)cache;
    (void)out;
  }

 protected:
  FimSpec spec_;
  std::vector<std::size_t> blocks_;
};

// Builds one module; name prefixes its parameter blocks. `in_dim` is the
// width of the concatenated representation.
template <typename T>
std::unique_ptr<FimModule<T>> build_fim(ParamStore<T>& ps, const std::string& name,
                                        const FimSpec& spec, std::size_t in_dim,
                                        const data::FeatureSchema& schema, Rng& rng);

}  // namespace dtnlab::fim
