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

#include "dtnlab/data/synthetic.hpp"

namespace dtnlab::testutil {

// Two tasks with disjoint relevant features plus one weak shared feature and
// two irrelevant ones. Tuned so each exclusive feature moves its own task's
// AUC noticeably and the other task's not at all.
inline data::SyntheticSpec divergence_spec() {
  using data::FeatureKind;
  data::SyntheticSpec s;
  s.tasks = {{.name = "task1", .bias = -0.3}, {.name = "task2", .bias = -0.3}};
  s.features = {
      {.name = "x1_excl", .kind = FeatureKind::kContinuous, .coefs = {{"task1", 1.6}}},
      {.name = "c1_excl",
       .kind = FeatureKind::kCategorical,
       .vocab_size = 24,
       .coefs = {{"task1", 1.2}}},
      {.name = "c1a", .kind = FeatureKind::kCategorical, .vocab_size = 24, .coefs = {}},
      {.name = "x2_excl", .kind = FeatureKind::kContinuous, .coefs = {{"task2", 1.6}}},
      {.name = "c2_excl",
       .kind = FeatureKind::kCategorical,
       .vocab_size = 24,
       .coefs = {{"task2", 1.2}}},
      {.name = "c2a", .kind = FeatureKind::kCategorical, .vocab_size = 24, .coefs = {}},
      {.name = "x_shared",
       .kind = FeatureKind::kContinuous,
       .coefs = {{"task1", 0.5}, {"task2", 0.5}}},
      {.name = "x_noise", .kind = FeatureKind::kContinuous, .coefs = {}},
      {.name = "c_noise", .kind = FeatureKind::kCategorical, .vocab_size = 24, .coefs = {}},
  };
  s.pairs = {
      {.a = "c1_excl", .b = "c1a", .coefs = {{"task1", 1.0}}},
      {.a = "c2_excl", .b = "c2a", .coefs = {{"task2", 1.0}}},
  };
  return s;
}

// Control: task2 copies task1's labels bit for bit.
inline data::SyntheticSpec duplicated_task_spec() {
  using data::FeatureKind;
  data::SyntheticSpec s;
  s.tasks = {{.name = "task1", .bias = -0.2},
             {.name = "task2", .bias = 0.0, .duplicate_of = "task1"}};
  s.features = {
      {.name = "x_a", .kind = FeatureKind::kContinuous, .coefs = {{"task1", 1.5}}},
      {.name = "x_b", .kind = FeatureKind::kContinuous, .coefs = {{"task1", 1.0}}},
      {.name = "c_a",
       .kind = FeatureKind::kCategorical,
       .vocab_size = 24,
       .coefs = {{"task1", 0.9}}},
      {.name = "c_b", .kind = FeatureKind::kCategorical, .vocab_size = 24, .coefs = {}},
      {.name = "x_shared", .kind = FeatureKind::kContinuous, .coefs = {{"task1", 0.6}}},
      {.name = "x_noise", .kind = FeatureKind::kContinuous, .coefs = {}},
  };
  // Shared-across-tasks features come from duplication itself; the structural
  // shared-feature check sees a single distinct process, so give it a pair
  // and let "shared" mean shared between the duplicated processes.
  s.pairs = {{.a = "c_a", .b = "c_b", .coefs = {{"task1", 0.8}}}};
  return s;
}

}  // namespace dtnlab::testutil
