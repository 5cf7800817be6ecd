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

#include <string>
#include <vector>

#include "dtnlab/core/matrix.hpp"
#include "dtnlab/data/dataset.hpp"
#include "dtnlab/mtl/model.hpp"

namespace dtnlab::eval {

// Per-task predictions over a whole dataset, batched, as float columns.
template <typename T>
Matrix<float> predict(const mtl::ModelGraph<T>& model, const data::Dataset& dataset,
                      std::size_t batch_size = 2048);

// Per-task AUC over a dataset.
template <typename T>
std::vector<double> task_aucs(const mtl::ModelGraph<T>& model, const data::Dataset& dataset,
                              std::size_t batch_size = 2048);

// Permutation feature importance of one (feature, task): baseline AUC minus
// the mean AUC over `repeats` column permutations (seed stream seed + r).
template <typename T>
double permutation_feature_importance(const mtl::ModelGraph<T>& model,
                                      const data::Dataset& test_data,
                                      const std::string& feature, const std::string& task,
                                      std::size_t repeats, std::uint64_t seed);

// Per-feature, per-task FI values, descending ranks, and the pairwise
// rank-correlation divergence statistic.
struct FIReport {
  std::vector<std::string> features;
  std::vector<std::string> tasks;
  Matrix<double> fi;                             // [feature x task]
  std::vector<std::vector<std::size_t>> ranks;   // [task][feature], 1 = most important
  Matrix<double> rank_correlation;               // [task x task], Spearman over FI
  std::vector<double> base_auc;                  // per task
  std::size_t repeats = 0;
  std::uint64_t seed = 0;

  double fi_of(const std::string& feature, const std::string& task) const;
};

template <typename T>
FIReport fi_report(const mtl::ModelGraph<T>& model, const data::Dataset& test_data,
                   const std::vector<std::string>& features,
                   const std::vector<std::string>& tasks, std::size_t repeats,
                   std::uint64_t seed);

// fi_report.csv: feature, fi_<task>..., rank_<task>... with metadata comments.
void write_fi_report(const FIReport& report, const std::string& path);
// Scatter data of task-pair FI values: feature, fi_<task a>, fi_<task b>.
void write_fi_scatter(const FIReport& report, std::size_t task_a, std::size_t task_b,
                      const std::string& path);

}  // namespace dtnlab::eval
