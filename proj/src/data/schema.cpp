// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include "dtnlab/data/schema.hpp"

#include <json.hpp>
#include <set>

#include "dtnlab/core/error.hpp"

namespace dtnlab::data {

using nlohmann::json;

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features, std::vector<std::string> tasks,
                             std::map<std::string, std::string> task_dependencies)
    : features_(std::move(features)),
      tasks_(std::move(tasks)),
      task_dependencies_(std::move(task_dependencies)) {
  validate_and_index();
}

void FeatureSchema::validate_and_index() {
  require(!tasks_.empty(), "schema", "at least one task required");
  std::set<std::string> seen;
  for (const auto& f : features_) {
    require(seen.insert(f.name).second, "schema", "duplicate feature name '" + f.name + "'");
    if (f.is_categorical()) {
      require(f.vocab_size > 0, "schema", "feature '" + f.name + "': vocab_size must be positive");
      require(f.embedding_dim > 0, "schema",
              "feature '" + f.name + "': embedding_dim must be positive");
    }
  }
  seen.clear();
  for (const auto& t : tasks_) {
    require(seen.insert(t).second, "schema", "duplicate task name '" + t + "'");
  }

  column_of_.resize(features_.size());
  n_categorical_ = n_continuous_ = 0;
  feature_by_name_.clear();
  for (std::size_t i = 0; i < features_.size(); ++i) {
    feature_by_name_[features_[i].name] = i;
    column_of_[i] = features_[i].is_categorical() ? n_categorical_++ : n_continuous_++;
  }
  task_by_name_.clear();
  for (std::size_t i = 0; i < tasks_.size(); ++i) task_by_name_[tasks_[i]] = i;

  // The dependency relation must point strictly backwards in task order.
  for (const auto& [task, pre] : task_dependencies_) {
    auto it = task_by_name_.find(task);
    require(it != task_by_name_.end(), "schema", "dependency for unknown task '" + task + "'");
    auto pit = task_by_name_.find(pre);
    require(pit != task_by_name_.end(), "schema",
            "task '" + task + "' depends on unknown task '" + pre + "'");
    require(pit->second < it->second, "schema",
            "task '" + task + "' must depend on an earlier task (got '" + pre + "')");
  }
}

std::size_t FeatureSchema::input_width() const {
  std::size_t w = 0;
  for (const auto& f : features_) w += f.is_categorical() ? f.embedding_dim : 1;
  return w;
}

std::size_t FeatureSchema::feature_index(const std::string& name) const {
  auto it = feature_by_name_.find(name);
  require(it != feature_by_name_.end(), "schema", "unknown feature '" + name + "'");
  return it->second;
}

std::optional<std::size_t> FeatureSchema::try_feature_index(const std::string& name) const {
  auto it = feature_by_name_.find(name);
  if (it == feature_by_name_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureSchema::task_index(const std::string& name) const {
  auto it = task_by_name_.find(name);
  require(it != task_by_name_.end(), "schema", "unknown task '" + name + "'");
  return it->second;
}

std::optional<std::size_t> FeatureSchema::preceding_task(std::size_t task_index) const {
  auto it = task_dependencies_.find(tasks_.at(task_index));
  if (it == task_dependencies_.end()) return std::nullopt;
  return task_by_name_.at(it->second);
}

std::string FeatureSchema::to_json() const {
  json j;
  j["tasks"] = tasks_;
  j["task_dependencies"] = task_dependencies_;
  j["features"] = json::array();
  for (const auto& f : features_) {
    json jf;
    jf["name"] = f.name;
    jf["kind"] = f.is_categorical() ? "categorical" : "continuous";
    if (f.is_categorical()) {
      jf["vocab_size"] = f.vocab_size;
      jf["embedding_dim"] = f.embedding_dim;
      if (!f.vocab.empty()) jf["vocab"] = f.vocab;
    } else {
      jf["mean"] = f.mean;
      jf["stddev"] = f.stddev;
    }
    j["features"].push_back(std::move(jf));
  }
  return j.dump(2);
}

FeatureSchema FeatureSchema::from_json(const std::string& text) {
  json j = json::parse(text);
  std::vector<FeatureSpec> features;
  for (const auto& jf : j.at("features")) {
    FeatureSpec f;
    f.name = jf.at("name").get<std::string>();
    const auto kind = jf.at("kind").get<std::string>();
    require(kind == "categorical" || kind == "continuous", "schema",
            "bad feature kind '" + kind + "'");
    f.kind = kind == "categorical" ? FeatureKind::kCategorical : FeatureKind::kContinuous;
    if (f.is_categorical()) {
      f.vocab_size = jf.at("vocab_size").get<std::size_t>();
      f.embedding_dim = jf.at("embedding_dim").get<std::size_t>();
      if (jf.contains("vocab")) f.vocab = jf.at("vocab").get<std::vector<std::string>>();
    } else {
      f.mean = jf.value("mean", 0.0);
      f.stddev = jf.value("stddev", 1.0);
    }
    features.push_back(std::move(f));
  }
  return FeatureSchema(std::move(features), j.at("tasks").get<std::vector<std::string>>(),
                       j.value("task_dependencies", std::map<std::string, std::string>{}));
}

}  // namespace dtnlab::data
