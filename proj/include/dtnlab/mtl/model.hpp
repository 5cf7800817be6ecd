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

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dtnlab/core/matrix.hpp"
#include "dtnlab/data/dataset.hpp"
#include "dtnlab/data/schema.hpp"
#include "dtnlab/fim/fim.hpp"
#include "dtnlab/fim/layers.hpp"
#include "dtnlab/fim/param_store.hpp"

namespace dtnlab::mtl {

enum class ArchKind : std::uint8_t { kSharedBottom, kMmoe, kPle, kSfm, kTfi, kDtn };

const char* arch_kind_name(ArchKind k);
ArchKind arch_kind_from_name(const std::string& name);

struct TaskSpec {
  std::string name;
  std::optional<std::string> preceding_task;  // unset: inherit the schema's chain
  std::vector<std::size_t> tower_hidden = {256, 128};
  bool tsn_enabled = true;  // meaningful only with a preceding task
  bool tsn_detach = false;  // stop task-V gradients at pred_T
};

struct ModelConfig {
  ArchKind kind = ArchKind::kSharedBottom;
  std::size_t output_dim = 512;
  // When set, overrides every categorical feature's embedding width.
  std::optional<std::size_t> embedding_dim;
  std::vector<TaskSpec> tasks;

  // shared_bottom / mmoe / ple / sfm expert settings
  std::size_t n_shared_experts = 4;
  std::size_t n_task_experts = 2;  // ple only
  std::vector<std::size_t> expert_hidden = {256};

  // sfm: the serial interaction stack in front of the MTL network
  fim::FimSpec sfm_stack;

  // tfi / dtn module lists
  std::vector<fim::FimSpec> shared_fims;
  std::map<std::string, std::vector<fim::FimSpec>> task_fims;

  std::optional<std::size_t> parameter_budget;  // whole model
  std::uint64_t init_seed = 1;
};

// Identifies one MFI set: kShared or a task index.
struct SetRef {
  int task = -1;  // -1 = shared
  bool is_shared() const { return task < 0; }
};

struct GateCandidate {
  SetRef set;
  std::size_t index = 0;        // module index within the set
  int scaled_by_pred = -1;      // task index whose prediction scales it (-1: none)
};

template <typename T>
struct GateState {
  std::string name;
  fim::Linear<T> lin;  // selector -> one logit per candidate; zero-init
  std::vector<GateCandidate> candidates;
};

// Standalone gating op: weights = softmax(lin(selector)); weighted sum of
// candidates. `candidates[j]` is [B x d]; all widths must agree.
template <typename T>
void gate_forward(const fim::ParamStore<T>& ps, const GateState<T>& gate,
                  const Matrix<T>& selector, const std::vector<const Matrix<T>*>& candidates,
                  Matrix<T>& weights, Matrix<T>& weighted_sum);

template <typename T>
struct GateEval {
  Matrix<T> weights;                // [B x k]
  Matrix<T> wsum;                   // [B x output_dim]
  std::vector<Matrix<T>> scaled;    // materialized pred-scaled candidates (else empty)
};

template <typename T>
struct ModelCache {
  Matrix<T> x;  // concatenated input representation [B x D]
  Matrix<T> logits;
  Matrix<T> preds;
  std::vector<std::vector<Matrix<T>>> set_outs;           // [task][module]
  std::vector<std::vector<fim::FimCache<T>>> set_caches;  // [task][module]
  std::vector<Matrix<T>> shared_outs;
  std::vector<fim::FimCache<T>> shared_caches;
  Matrix<T> sfm_z;
  fim::FimCache<T> sfm_cache;
  std::vector<GateEval<T>> gates;             // aligned with the model's gate list
  std::vector<Matrix<T>> tower_inputs;        // per task
  std::vector<fim::MlpCache<T>> tower_caches;
  std::vector<bool> task_computed;
};

struct ForwardOptions {
  // Test hook: force a task's prediction to a constant before dependents
  // consume it (TSN laws).
  std::map<std::size_t, double> override_preds;
  // Restrict evaluation to one task (plus its dependency closure).
  std::optional<std::size_t> only_task;
};

// Mean softmax weight assigned to each candidate of each gate over a dataset.
struct GateWeightReport {
  struct Candidate {
    std::string owner;  // task name or "shared"
    std::string kind;
    std::size_t index = 0;
    bool scaled_by_pred = false;
    double mean_weight = 0.0;
  };
  struct Gate {
    std::string task;
    std::string role;  // "own" | "other"
    std::vector<Candidate> candidates;
  };
  std::vector<Gate> gates;
};

// keep[set] aligns with the modules of that set; missing sets keep everything.
struct TrimRule {
  std::map<int, std::vector<bool>> keep;  // key: -1 shared, else task index
};

struct ReprSelector {
  std::string owner;              // task name or "shared"
  std::optional<std::size_t> index;
  std::optional<fim::FimKind> kind;  // used when index is unset
};

template <typename T>
struct ReprExport {
  std::vector<std::string> labels;  // per row: "owner/kind"
  std::vector<std::uint32_t> rows;  // sampled dataset rows
  Matrix<T> values;                 // [n x output_dim]
};

// One built multi-task network. Immutable during inference; training updates
// parameters through the store under a single-writer contract.
template <typename T>
class ModelGraph {
 public:
  static ModelGraph build(const ModelConfig& config, const data::FeatureSchema& schema);

  void forward(const data::ExampleBatch& batch, Matrix<T>& preds, ModelCache<T>* cache,
               const ForwardOptions* opts = nullptr) const;

  // dlogits_direct: dL/dlogit per task from the loss alone; TSN chains are
  // added internally. Accumulates parameter gradients.
  void backward(const data::ExampleBatch& batch, const ModelCache<T>& cache,
                const Matrix<T>& dlogits_direct);

  GateWeightReport extract_gate_weights(const data::Dataset& dataset,
                                        std::size_t batch_size = 1024) const;
  ModelGraph trimmed(const TrimRule& rule) const;
  ReprExport<T> export_representations(const data::Dataset& dataset, const ReprSelector& selector,
                                       std::size_t sample_count, std::uint64_t seed) const;

  void save_checkpoint(const std::string& path) const;
  static ModelGraph load_checkpoint(const std::string& path);

  fim::ParamStore<T>& params() { return params_; }
  const fim::ParamStore<T>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.total_parameters(); }
  const ModelConfig& config() const { return config_; }
  const data::FeatureSchema& schema() const { return schema_; }
  std::size_t n_tasks() const { return schema_.n_tasks(); }
  std::size_t n_gates() const { return gates_.size(); }
  const GateState<T>& gate(std::size_t g) const { return gates_[g]; }
  const std::vector<std::unique_ptr<fim::FimModule<T>>>& set_modules(int set) const {
    return set < 0 ? shared_set_ : task_sets_.at(static_cast<std::size_t>(set));
  }
  std::size_t fim_parameter_count(int set, std::size_t index) const;
  std::size_t gate_row_parameter_count() const;
  std::optional<std::size_t> preceding_of(std::size_t t) const { return preceding_[t]; }
  std::size_t tower_input_width(std::size_t t) const { return towers_[t].in_dim(); }

  void collect_relu_masks(const ModelCache<T>& cache, std::vector<std::uint8_t>& out) const;

  // Copies parameter values from another store with identical layout.
  void load_values_from(const fim::ParamStore<T>& other);

 private:
  ModelGraph() = default;

  void build_embeddings(Rng& rng);
  Matrix<T> embed(const data::ExampleBatch& batch) const;
  void embed_backward(const data::ExampleBatch& batch, const Matrix<T>& dx);
  void forward_task(std::size_t t, const data::ExampleBatch& batch, ModelCache<T>& cache,
                    const ForwardOptions* opts) const;

  ModelConfig config_;
  data::FeatureSchema schema_;
  fim::ParamStore<T> params_;

  std::vector<std::size_t> embed_tables_;  // block per categorical feature
  std::vector<std::unique_ptr<fim::FimModule<T>>> shared_set_;
  std::vector<std::vector<std::unique_ptr<fim::FimModule<T>>>> task_sets_;
  std::unique_ptr<fim::FimModule<T>> sfm_stack_;
  std::vector<GateState<T>> gates_;
  // gate lookup: own_gate_[t] / other_gate_[t] index into gates_, -1 if absent
  std::vector<int> own_gate_;
  std::vector<int> other_gate_;
  std::vector<fim::Mlp<T>> towers_;
  std::vector<std::optional<std::size_t>> preceding_;
  std::vector<bool> tsn_enabled_;
  std::vector<bool> tsn_detach_;
};

}  // namespace dtnlab::mtl
