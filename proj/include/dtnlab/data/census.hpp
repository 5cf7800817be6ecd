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

#include "dtnlab/data/dataset.hpp"
#include "dtnlab/data/schema.hpp"

namespace dtnlab::data {

struct CensusOptions {
  // Positive class of the marital task. Default follows the benchmark
  // lineage: "Never married" is the positive class. Flipping inverts the
  // label (positive = everything else).
  bool marital_positive_is_never_married = true;
};

struct CensusData {
  Dataset train;
  Dataset test;
  FeatureSchema schema;
};

// Loads the UCI Census-Income (KDD) pair of comma-separated files.
//
// The two label fields (income, marital status) are removed from the
// predictors, leaving 40 features (8 continuous, 32 categorical). Tasks:
// "income" (income exceeds 50K) and "marital" (see CensusOptions).
// Categorical vocabularies are built from the train split only; unseen test
// values map to the reserved OOV id 0. "?" is an ordinary categorical value.
// Continuous features are standardized by train-split mean/stddev.
CensusData load_census_income(const std::string& train_path, const std::string& test_path,
                              const CensusOptions& options = {});

// The published column order of the raw files (42 fields per record).
const std::vector<std::string>& census_column_names();

}  // namespace dtnlab::data
