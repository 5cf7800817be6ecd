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
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dtnlab::data {

enum class FeatureKind : std::uint8_t { kCategorical, kContinuous };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kContinuous;
  // Categorical only. vocab_size counts the reserved out-of-vocabulary id 0.
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 16;
  // Continuous only: train-split standardization stats, recorded so a run can
  // be reproduced from the schema alone.
  double mean = 0.0;
  double stddev = 1.0;
  // Categorical only, optional: id -> token (index 0 is the OOV slot).
  std::vector<std::string> vocab;

  bool is_categorical() const { return kind == FeatureKind::kCategorical; }
};

// Declarative description of the encoded dataset: ordered features, ordered
// task names, and the forward-free task dependency chain.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<FeatureSpec> features, std::vector<std::string> tasks,
                std::map<std::string, std::string> task_dependencies = {});

  const std::vector<FeatureSpec>& features() const { return features_; }
  const std::vector<std::string>& tasks() const { return tasks_; }
  const std::map<std::string, std::string>& task_dependencies() const {
    return task_dependencies_;
  }

  std::size_t n_features() const { return features_.size(); }
  std::size_t n_tasks() const { return tasks_.size(); }
  std::size_t n_categorical() const { return n_categorical_; }
  std::size_t n_continuous() const { return n_continuous_; }

  // Width of the concatenated input representation: one embedding_dim block
  // per categorical feature plus one unit per continuous feature.
  std::size_t input_width() const;

  std::size_t feature_index(const std::string& name) const;
  std::optional<std::size_t> try_feature_index(const std::string& name) const;
  std::size_t task_index(const std::string& name) const;

  // Position of a feature inside the columnar store of its kind.
  std::size_t column_of(std::size_t feature_index) const { return column_of_[feature_index]; }

  // Index of the preceding task, if the dependency chain declares one.
  std::optional<std::size_t> preceding_task(std::size_t task_index) const;

  std::string to_json() const;
  static FeatureSchema from_json(const std::string& text);

 private:
  void validate_and_index();

  std::vector<FeatureSpec> features_;
  std::vector<std::string> tasks_;
  std::map<std::string, std::string> task_dependencies_;
  std::vector<std::size_t> column_of_;
  std::size_t n_categorical_ = 0;
  std::size_t n_continuous_ = 0;
  std::map<std::string, std::size_t> feature_by_name_;
  std::map<std::string, std::size_t> task_by_name_;
};

}  // namespace dtnlab::data
