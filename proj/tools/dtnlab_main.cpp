// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include <CLI11.hpp>
#include <string>
#include <vector>

#include "dtnlab/cli/experiment.hpp"
#include "dtnlab/kernels/kernels.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "dtnlab: multi-task recommender experiments with diversified feature "
      "interaction modules"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"prepare-data", "Load or generate the dataset and dump it for inspection"},
      {"train", "Train a model and write checkpoint, history and metrics"},
      {"evaluate", "Evaluate a checkpoint on the configured test split"},
      {"feature-importance", "Per-task permutation feature importance report"},
      {"gate-weights", "Mean gate weight per interaction module"},
      {"trim", "Drop low-gate-weight modules and re-checkpoint"},
      {"export-repr", "Export interaction-module representations for plotting"},
      {"report", "Comparison table (AUC/LogLoss/RelaImpr) across finished runs"},
  };

  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--set", overrides, "Override config keys: key.path=value")
        ->take_all()
        ->allow_extra_args();
    sub->add_option("--out", out_dir,
                    "Output directory (default: config output_dir or $DTNLAB_OUT_ROOT/<stem>)");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();
  return dtnlab::cli::run(command, config_path, overrides, out_dir);
}
