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

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dtnlab/data/census.hpp"
#include "dtnlab/data/synthetic.hpp"
#include "dtnlab/mtl/model.hpp"
#include "dtnlab/train/trainer.hpp"

namespace dtnlab::cli {

struct DatasetSection {
  std::string source;  // "census" | "synthetic"
  // census
  std::string census_train_path;
  std::string census_test_path;
  bool marital_positive_is_never_married = true;
  // synthetic
  data::SyntheticSpec synthetic;
  std::size_t n_train = 20000;
  std::size_t n_test = 10000;
  std::uint64_t seed = 1;
};

struct EvaluationSection {
  std::size_t fi_repeats = 5;
  std::uint64_t fi_seed = 17;
  std::vector<std::string> fi_features;  // empty = all
  std::vector<std::string> fi_tasks;     // empty = all
};

struct TrimSection {
  std::optional<double> threshold;  // on mean gate weight
  std::map<std::string, std::vector<std::size_t>> keep;  // owner -> kept indices
  std::size_t finetune_epochs = 0;
};

struct ExportSection {
  struct Selector {
    std::string owner;
    std::optional<std::size_t> index;
    std::string kind;  // used when index unset
  };
  std::vector<Selector> selectors;
  std::size_t sample_count = 1000;
  std::uint64_t seed = 1;
};

struct ReportSection {
  std::vector<std::string> runs;
  std::string baseline;
};

struct ExperimentConfig {
  DatasetSection dataset;
  mtl::ModelConfig model;
  train::TrainConfig training;
  EvaluationSection evaluation;
  TrimSection trim;
  ExportSection export_repr;
  ReportSection report;
  std::string checkpoint;  // input checkpoint for evaluate/trim/export commands
  std::string output_dir;

  nlohmann::json to_json() const;  // fully materialized echo
};

// Strict parse: unknown keys are rejected with their path; syntax errors
// carry a line number. Overrides are "key.path=value" pairs applied to the
// raw document before validation.
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

struct LoadedData {
  data::Dataset train;
  data::Dataset test;
  data::FeatureSchema schema;
  std::optional<data::SyntheticGroundTruth> ground_truth;
  std::string fingerprint_train;
  std::string fingerprint_test;
};

LoadedData load_dataset(const DatasetSection& section);

// Fills dataset-dependent defaults (memonet cross fields) into the model
// section. Called by every model-building command before build.
void materialize_model_defaults(ExperimentConfig& config, const LoadedData& data);

// Executes one CLI command; returns the process exit status and writes the
// command's artifacts under the output directory.
int run(const std::string& command, const std::string& config_path,
        const std::vector<std::string>& overrides, const std::string& out_dir);

// Comparison table over finished run directories ("report" command core).
struct ComparisonRow {
  std::string model;
  std::string task;
  double auc = 0.0;
  double logloss = 0.0;
  std::optional<double> relaimpr_pct;  // unset for the baseline itself
};
std::vector<ComparisonRow> compare_runs(const std::vector<std::string>& run_dirs,
                                        const std::string& baseline_name);
void write_comparison(const std::vector<ComparisonRow>& rows, const std::string& path);

const char* metrics_csv_header();  // "model,task,auc,logloss,relaimpr_pct"

}  // namespace dtnlab::cli
