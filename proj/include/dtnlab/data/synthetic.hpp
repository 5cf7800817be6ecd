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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dtnlab/data/dataset.hpp"
#include "dtnlab/data/schema.hpp"

namespace dtnlab::data {

// Synthetic multi-task generator with known ground truth.
//
// Each continuous feature is sampled N(0,1). Each categorical feature draws
// an id uniformly from [1, vocab_size) and contributes a fixed latent value
// per id (drawn once per spec+seed). Task labels are Bernoulli(sigmoid(bias
// + sum of linear terms + sum of pairwise product terms)). A task may
// instead copy another task's labels bit for bit (control setups).

struct SyntheticTaskSpec {
  std::string name;
  double bias = 0.0;
  // When set, this task's labels are copied from the named task and all
  // coefficient requirements are inherited from it.
  std::string duplicate_of;
  // Model-side dependency chain, recorded into the schema untouched.
  std::string preceding_task;
};

struct SyntheticFeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kContinuous;
  std::size_t vocab_size = 32;     // categorical only (includes unused OOV id 0)
  std::size_t embedding_dim = 16;  // categorical only
  std::map<std::string, double> coefs;  // task -> linear coefficient
};

struct SyntheticPairSpec {
  std::string a;
  std::string b;
  std::map<std::string, double> coefs;  // task -> product-term coefficient
};

struct SyntheticSpec {
  std::vector<SyntheticTaskSpec> tasks;
  std::vector<SyntheticFeatureSpec> features;
  std::vector<SyntheticPairSpec> pairs;
};

struct SyntheticGroundTruth {
  // linear[t][f]: coefficient of feature f in task t (duplicates resolved).
  std::vector<std::vector<double>> linear;
  // pair_coefs[t]: (feature index a, feature index b) -> coefficient.
  std::vector<std::map<std::pair<std::size_t, std::size_t>, double>> pair_coefs;
  std::vector<double> bias;
  // category_values[f]: latent value per id (empty for continuous features).
  std::vector<std::vector<double>> category_values;
  // Features whose total relevance (linear + pair terms) is nonzero in
  // exactly one distinct label process.
  std::vector<std::pair<std::string, std::string>> exclusive_features;  // (feature, task)
  std::vector<std::string> irrelevant_features;

  // Pre-sigmoid logit of one example under task t.
  double logit(const FeatureSchema& schema, const Dataset& ds, std::size_t row,
               std::size_t t) const;
  // Total relevance of feature f to task t: |linear| plus touching |pair| coefs.
  double relevance(std::size_t t, std::size_t f) const;
  // Categorical pairs with a nonzero coefficient in some task, by name.
  std::vector<std::pair<std::string, std::string>> relevant_categorical_pairs(
      const FeatureSchema& schema) const;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  FeatureSchema schema;
  SyntheticGroundTruth ground_truth;
};

// Requirements on the resolved (duplicate-free) coefficient structure:
// >= 2 tasks, >= 1 exclusive feature per distinct task, >= 1 shared feature,
// >= 1 irrelevant feature, >= 1 relevant pair per distinct task.
SyntheticData generate_synthetic(std::size_t n_train, std::size_t n_test,
                                 const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace dtnlab::data
