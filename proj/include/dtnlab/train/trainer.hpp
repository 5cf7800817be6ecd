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

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dtnlab/data/dataset.hpp"
#include "dtnlab/mtl/model.hpp"

namespace dtnlab::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 2048;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;  // early stopping on mean eval AUC
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> task_weights;  // empty = all 1.0
  std::optional<double> grad_clip;   // global L2 norm

  void validate(std::size_t n_tasks) const;
};

struct LossResult {
  double total = 0.0;
  std::vector<double> per_task;
};

// Summed weighted per-task mean binary cross-entropy. Predictions are
// clipped to [1e-7, 1 - 1e-7] for the loss value.
template <typename T>
LossResult compute_loss(const Matrix<T>& predictions, const Matrix<float>& labels,
                        const std::vector<double>& weights);

// Adam with bias correction over a whole parameter store.
template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon)
      : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(fim::ParamStore<T>& params);
  std::size_t t() const { return t_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::vector<double> train_loss;
  double total_train_loss = 0.0;
  std::vector<double> eval_auc;
  double mean_eval_auc = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;  // 1-based; 0 if nothing completed
  bool aborted = false;
  std::string abort_reason;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Full training loop: shuffled epochs, Adam steps, per-epoch evaluation,
// early stopping with patience on mean eval AUC, best-epoch parameters
// restored at exit. A non-finite loss or parameter aborts the run and
// restores the last good (best) checkpoint.
template <typename T>
TrainResult train(mtl::ModelGraph<T>& model, const data::Dataset& train_data,
                  const data::Dataset& eval_data, const TrainConfig& config,
                  const EpochCallback& on_epoch = nullptr);

enum class CheckLoss { kCrossEntropy, kSquaredErrorOnLogits };

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

// Central-difference verification of the whole-model analytic gradient on
// >= min_coords randomly sampled parameter coordinates. Double precision
// only; models capped at 10^4 parameters. Coordinates whose +-eps
// perturbation flips any ReLU activation pattern are excluded.
GradCheckResult gradient_check(mtl::ModelGraph<double>& model, const data::ExampleBatch& batch,
                               double eps, std::size_t min_coords = 100,
                               CheckLoss loss = CheckLoss::kCrossEntropy, std::uint64_t seed = 1);

}  // namespace dtnlab::train
