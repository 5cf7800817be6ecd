// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "dtnlab/cli/experiment.hpp"
#include "dtnlab/core/error.hpp"
#include "dtnlab/mtl/serialize.hpp"

namespace dtnlab::cli {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object()) return;
  for (const auto& [key, value] : j.items()) {
    (void)value;
    require(allowed.count(key) > 0, "config",
            "unknown key '" + (path.empty() ? key : path + "." + key) + "'");
  }
}

const std::set<std::string> kFimKeys = {
    "kind",           "output_dim",        "mlp_hidden",       "gdcn_layers",
    "gdcn_rank",      "masknet_hidden",    "masknet_reduction", "memonet_entries",
    "memonet_code_dim", "memonet_fields",  "parameter_budget"};

fim::FimSpec parse_fim_spec(const json& j, const std::string& path,
                            std::size_t default_output_dim) {
  check_keys(j, path, kFimKeys);
  require(j.contains("kind"), "config", path + ".kind is required");
  fim::FimSpec spec = mtl::fim_spec_from_json(j);
  if (!j.contains("output_dim")) spec.output_dim = default_output_dim;
  return spec;
}

std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

void apply_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  require(eq != std::string::npos && eq > 0, "config",
          "override '" + kv + "' must look like key.path=value");
  std::string path = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);
  std::replace(path.begin(), path.end(), '.', '/');
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // plain string
  }
  doc[json::json_pointer("/" + path)] = parsed;
}

data::SyntheticSpec parse_synthetic_spec(const json& j, const std::string& path) {
  check_keys(j, path, {"n_train", "n_test", "seed", "tasks", "features", "pairs"});
  data::SyntheticSpec spec;
  require(j.contains("tasks") && j.contains("features"), "config",
          path + " needs 'tasks' and 'features'");
  for (const auto& jt : j.at("tasks")) {
    check_keys(jt, path + ".tasks[]", {"name", "bias", "duplicate_of", "preceding_task"});
    data::SyntheticTaskSpec t;
    t.name = jt.at("name").get<std::string>();
    t.bias = jt.value("bias", 0.0);
    t.duplicate_of = jt.value("duplicate_of", std::string());
    t.preceding_task = jt.value("preceding_task", std::string());
    spec.tasks.push_back(std::move(t));
  }
  for (const auto& jf : j.at("features")) {
    check_keys(jf, path + ".features[]",
               {"name", "kind", "vocab_size", "embedding_dim", "coefs"});
    data::SyntheticFeatureSpec f;
    f.name = jf.at("name").get<std::string>();
    const auto kind = jf.value("kind", std::string("continuous"));
    require(kind == "continuous" || kind == "categorical", "config",
            path + ".features[].kind must be continuous|categorical");
    f.kind = kind == "categorical" ? data::FeatureKind::kCategorical
                                   : data::FeatureKind::kContinuous;
    f.vocab_size = jf.value("vocab_size", f.vocab_size);
    f.embedding_dim = jf.value("embedding_dim", f.embedding_dim);
    if (jf.contains("coefs")) f.coefs = jf.at("coefs").get<std::map<std::string, double>>();
    spec.features.push_back(std::move(f));
  }
  if (j.contains("pairs")) {
    for (const auto& jp : j.at("pairs")) {
      check_keys(jp, path + ".pairs[]", {"a", "b", "coefs"});
      data::SyntheticPairSpec p;
      p.a = jp.at("a").get<std::string>();
      p.b = jp.at("b").get<std::string>();
      if (jp.contains("coefs")) p.coefs = jp.at("coefs").get<std::map<std::string, double>>();
      spec.pairs.push_back(std::move(p));
    }
  }
  return spec;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("config", "syntax error at line " + std::to_string(line_of_offset(text, e.byte)) +
                       ": " + e.what());
  }
  for (const auto& kv : overrides) apply_override(doc, kv);

  check_keys(doc, "",
             {"dataset", "model", "training", "evaluation", "trim", "export", "report",
              "checkpoint", "output_dir"});

  ExperimentConfig cfg;

  // dataset
  require(doc.contains("dataset"), "config", "dataset section is required");
  {
    const auto& jd = doc.at("dataset");
    check_keys(jd, "dataset", {"source", "census", "synthetic", "seed"});
    require(jd.contains("source"), "config", "dataset.source is required (census|synthetic)");
    cfg.dataset.source = jd.at("source").get<std::string>();
    require(cfg.dataset.source == "census" || cfg.dataset.source == "synthetic", "config",
            "dataset.source must be census|synthetic");
    cfg.dataset.seed = jd.value("seed", cfg.dataset.seed);
    if (cfg.dataset.source == "census") {
      require(jd.contains("census"), "config", "dataset.census section is required");
      const auto& jc = jd.at("census");
      check_keys(jc, "dataset.census", {"train_path", "test_path", "marital_positive"});
      require(jc.contains("train_path") && jc.contains("test_path"), "config",
              "dataset.census.train_path and test_path are required");
      cfg.dataset.census_train_path = jc.at("train_path").get<std::string>();
      cfg.dataset.census_test_path = jc.at("test_path").get<std::string>();
      const auto pos = jc.value("marital_positive", std::string("never_married"));
      require(pos == "never_married" || pos == "married", "config",
              "dataset.census.marital_positive must be never_married|married");
      cfg.dataset.marital_positive_is_never_married = pos == "never_married";
    } else {
      require(jd.contains("synthetic"), "config", "dataset.synthetic section is required");
      const auto& js = jd.at("synthetic");
      cfg.dataset.synthetic = parse_synthetic_spec(js, "dataset.synthetic");
      cfg.dataset.n_train = js.value("n_train", cfg.dataset.n_train);
      cfg.dataset.n_test = js.value("n_test", cfg.dataset.n_test);
    }
  }

  // model
  require(doc.contains("model") && doc.at("model").is_object() && !doc.at("model").empty(),
          "config", "model section is required (model.kind at minimum)");
  {
    const auto& jm = doc.at("model");
    check_keys(jm, "model",
               {"kind", "output_dim", "embedding_dim", "tasks", "n_shared_experts",
                "n_task_experts", "expert_hidden", "sfm_stack", "shared_fims", "task_fims",
                "parameter_budget", "init_seed"});
    require(jm.contains("kind"), "config", "model.kind is required");
    json sanitized = jm;
    // fim specs get CLI-level defaulting of output_dim
    const std::size_t od = jm.value("output_dim", std::size_t{512});
    sanitized.erase("sfm_stack");
    sanitized.erase("shared_fims");
    sanitized.erase("task_fims");
    if (jm.contains("tasks")) {
      for (const auto& jt : jm.at("tasks")) {
        check_keys(jt, "model.tasks[]",
                   {"name", "preceding_task", "tower_hidden", "tsn_enabled", "tsn_detach"});
      }
    }
    cfg.model = mtl::model_config_from_json(sanitized);
    if (jm.contains("sfm_stack")) {
      cfg.model.sfm_stack = parse_fim_spec(jm.at("sfm_stack"), "model.sfm_stack", od);
    }
    if (jm.contains("shared_fims")) {
      for (std::size_t i = 0; i < jm.at("shared_fims").size(); ++i) {
        cfg.model.shared_fims.push_back(
            parse_fim_spec(jm.at("shared_fims")[i], "model.shared_fims[]", od));
      }
    }
    if (jm.contains("task_fims")) {
      for (const auto& [name, arr] : jm.at("task_fims").items()) {
        std::vector<fim::FimSpec> list;
        for (const auto& js : arr) {
          list.push_back(parse_fim_spec(js, "model.task_fims." + name + "[]", od));
        }
        cfg.model.task_fims[name] = std::move(list);
      }
    }
  }

  // training
  if (doc.contains("training")) {
    const auto& jt = doc.at("training");
    check_keys(jt, "training",
               {"learning_rate", "batch_size", "max_epochs", "patience", "seed", "beta1",
                "beta2", "epsilon", "task_weights", "grad_clip"});
    auto& t = cfg.training;
    t.learning_rate = jt.value("learning_rate", t.learning_rate);
    t.batch_size = jt.value("batch_size", t.batch_size);
    t.max_epochs = jt.value("max_epochs", t.max_epochs);
    t.patience = jt.value("patience", t.patience);
    t.seed = jt.value("seed", t.seed);
    t.beta1 = jt.value("beta1", t.beta1);
    t.beta2 = jt.value("beta2", t.beta2);
    t.epsilon = jt.value("epsilon", t.epsilon);
    if (jt.contains("task_weights")) {
      t.task_weights = jt.at("task_weights").get<std::vector<double>>();
    }
    if (jt.contains("grad_clip") && !jt.at("grad_clip").is_null()) {
      t.grad_clip = jt.at("grad_clip").get<double>();
    }
  }

  // evaluation
  if (doc.contains("evaluation")) {
    const auto& je = doc.at("evaluation");
    check_keys(je, "evaluation", {"fi_repeats", "fi_seed", "fi_features", "fi_tasks"});
    cfg.evaluation.fi_repeats = je.value("fi_repeats", cfg.evaluation.fi_repeats);
    cfg.evaluation.fi_seed = je.value("fi_seed", cfg.evaluation.fi_seed);
    if (je.contains("fi_features")) {
      cfg.evaluation.fi_features = je.at("fi_features").get<std::vector<std::string>>();
    }
    if (je.contains("fi_tasks")) {
      cfg.evaluation.fi_tasks = je.at("fi_tasks").get<std::vector<std::string>>();
    }
  }

  // trim
  if (doc.contains("trim")) {
    const auto& jt = doc.at("trim");
    check_keys(jt, "trim", {"threshold", "keep", "finetune_epochs"});
    if (jt.contains("threshold") && !jt.at("threshold").is_null()) {
      cfg.trim.threshold = jt.at("threshold").get<double>();
    }
    if (jt.contains("keep")) {
      cfg.trim.keep =
          jt.at("keep").get<std::map<std::string, std::vector<std::size_t>>>();
    }
    cfg.trim.finetune_epochs = jt.value("finetune_epochs", cfg.trim.finetune_epochs);
  }

  // export
  if (doc.contains("export")) {
    const auto& je = doc.at("export");
    check_keys(je, "export", {"selectors", "sample_count", "seed"});
    if (je.contains("selectors")) {
      for (const auto& js : je.at("selectors")) {
        check_keys(js, "export.selectors[]", {"owner", "index", "kind"});
        ExportSection::Selector s;
        s.owner = js.at("owner").get<std::string>();
        if (js.contains("index")) s.index = js.at("index").get<std::size_t>();
        s.kind = js.value("kind", std::string());
        cfg.export_repr.selectors.push_back(std::move(s));
      }
    }
    cfg.export_repr.sample_count = je.value("sample_count", cfg.export_repr.sample_count);
    cfg.export_repr.seed = je.value("seed", cfg.export_repr.seed);
  }

  // report
  if (doc.contains("report")) {
    const auto& jr = doc.at("report");
    check_keys(jr, "report", {"runs", "baseline"});
    if (jr.contains("runs")) cfg.report.runs = jr.at("runs").get<std::vector<std::string>>();
    cfg.report.baseline = jr.value("baseline", std::string());
  }

  cfg.checkpoint = doc.value("checkpoint", std::string());
  cfg.output_dir = doc.value("output_dir", std::string());
  return cfg;
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  require(in.good(), "config", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

json ExperimentConfig::to_json() const {
  json j;
  j["dataset"]["source"] = dataset.source;
  j["dataset"]["seed"] = dataset.seed;
  if (dataset.source == "census") {
    j["dataset"]["census"]["train_path"] = dataset.census_train_path;
    j["dataset"]["census"]["test_path"] = dataset.census_test_path;
    j["dataset"]["census"]["marital_positive"] =
        dataset.marital_positive_is_never_married ? "never_married" : "married";
  } else {
    auto& js = j["dataset"]["synthetic"];
    js["n_train"] = dataset.n_train;
    js["n_test"] = dataset.n_test;
    js["tasks"] = json::array();
    for (const auto& t : dataset.synthetic.tasks) {
      json jt;
      jt["name"] = t.name;
      jt["bias"] = t.bias;
      if (!t.duplicate_of.empty()) jt["duplicate_of"] = t.duplicate_of;
      if (!t.preceding_task.empty()) jt["preceding_task"] = t.preceding_task;
      js["tasks"].push_back(std::move(jt));
    }
    js["features"] = json::array();
    for (const auto& f : dataset.synthetic.features) {
      json jf;
      jf["name"] = f.name;
      jf["kind"] = f.kind == data::FeatureKind::kCategorical ? "categorical" : "continuous";
      if (f.kind == data::FeatureKind::kCategorical) {
        jf["vocab_size"] = f.vocab_size;
        jf["embedding_dim"] = f.embedding_dim;
      }
      jf["coefs"] = f.coefs;
      js["features"].push_back(std::move(jf));
    }
    js["pairs"] = json::array();
    for (const auto& p : dataset.synthetic.pairs) {
      js["pairs"].push_back({{"a", p.a}, {"b", p.b}, {"coefs", p.coefs}});
    }
  }
  j["model"] = mtl::model_config_to_json(model);
  j["training"]["learning_rate"] = training.learning_rate;
  j["training"]["batch_size"] = training.batch_size;
  j["training"]["max_epochs"] = training.max_epochs;
  j["training"]["patience"] = training.patience;
  j["training"]["seed"] = training.seed;
  j["training"]["beta1"] = training.beta1;
  j["training"]["beta2"] = training.beta2;
  j["training"]["epsilon"] = training.epsilon;
  if (!training.task_weights.empty()) j["training"]["task_weights"] = training.task_weights;
  if (training.grad_clip.has_value()) j["training"]["grad_clip"] = *training.grad_clip;
  j["evaluation"]["fi_repeats"] = evaluation.fi_repeats;
  j["evaluation"]["fi_seed"] = evaluation.fi_seed;
  if (!evaluation.fi_features.empty()) j["evaluation"]["fi_features"] = evaluation.fi_features;
  if (!evaluation.fi_tasks.empty()) j["evaluation"]["fi_tasks"] = evaluation.fi_tasks;
  if (trim.threshold.has_value()) j["trim"]["threshold"] = *trim.threshold;
  if (!trim.keep.empty()) j["trim"]["keep"] = trim.keep;
  if (trim.finetune_epochs > 0) j["trim"]["finetune_epochs"] = trim.finetune_epochs;
  if (!export_repr.selectors.empty()) {
    j["export"]["selectors"] = json::array();
    for (const auto& s : export_repr.selectors) {
      json js;
      js["owner"] = s.owner;
      if (s.index.has_value()) js["index"] = *s.index;
      if (!s.kind.empty()) js["kind"] = s.kind;
      j["export"]["selectors"].push_back(std::move(js));
    }
    j["export"]["sample_count"] = export_repr.sample_count;
    j["export"]["seed"] = export_repr.seed;
  }
  if (!report.runs.empty()) {
    j["report"]["runs"] = report.runs;
    j["report"]["baseline"] = report.baseline;
  }
  if (!checkpoint.empty()) j["checkpoint"] = checkpoint;
  j["output_dir"] = output_dir;
  return j;
}

}  // namespace dtnlab::cli
