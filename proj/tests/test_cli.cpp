// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dtnlab/cli/experiment.hpp"
#include "dtnlab/core/error.hpp"
#include "dtnlab/eval/metrics.hpp"

using namespace dtnlab;
using namespace dtnlab::cli;
namespace fs = std::filesystem;

namespace {

const std::string kConfigDir = std::string(DTNLAB_SOURCE_DIR) + "/configs";

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "dtnlab_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// small synthetic run: shrink the preset so tests stay fast
std::vector<std::string> small_overrides(std::uint64_t seed = 1) {
  return {
      "dataset.synthetic.n_train=2000",
      "dataset.synthetic.n_test=1000",
      "training.max_epochs=2",
      "training.batch_size=256",
      "training.seed=" + std::to_string(seed),
  };
}

}  // namespace

TEST_CASE("config without a model section names model.kind") {
  const std::string text = R"({"dataset": {"source": "synthetic", "synthetic": {
    "tasks": [{"name": "a"}, {"name": "b"}],
    "features": [{"name": "x", "coefs": {"a": 1.0}}]}}})";
  CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains("model.kind"), Error);

  const std::string empty_model = R"({"dataset": {"source": "synthetic", "synthetic": {
    "tasks": [{"name": "a"}], "features": []}}, "model": {}})";
  CHECK_THROWS_WITH_AS(parse_config(empty_model), doctest::Contains("model.kind"), Error);
}

TEST_CASE("unknown keys are rejected with their path") {
  const std::string text = R"({"dataset": {"source": "synthetic", "banana": 1,
    "synthetic": {"tasks": [{"name": "a"}], "features": []}}, "model": {"kind": "mmoe"}})";
  CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains("dataset.banana"), Error);

  const std::string text2 = R"({"dataset": {"source": "synthetic",
    "synthetic": {"tasks": [{"name": "a"}], "features": []}},
    "model": {"kind": "mmoe", "expertz": 3}})";
  CHECK_THROWS_WITH_AS(parse_config(text2), doctest::Contains("model.expertz"), Error);
}

TEST_CASE("syntax errors carry a line number") {
  const std::string text = "{\n  \"dataset\": {\n  oops\n}\n}";
  CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains("line 3"), Error);
}

TEST_CASE("defaults are materialized into the echo and overrides apply") {
  const auto cfg = load_config(kConfigDir + "/synthetic_default.json", {"training.seed=7"});
  CHECK(cfg.training.seed == 7);
  CHECK(cfg.training.learning_rate == 1e-3);
  CHECK(cfg.training.beta1 == 0.9);   // default materialized
  CHECK(cfg.training.beta2 == 0.999);
  CHECK(cfg.evaluation.fi_repeats == 5);
  const auto echo = cfg.to_json();
  CHECK(echo.at("training").at("seed").get<std::uint64_t>() == 7);
  CHECK(echo.at("training").at("epsilon").get<double>() == 1e-8);
  CHECK(echo.at("model").at("kind").get<std::string>() == "mmoe");
  // the echo itself re-parses to the same resolved config
  const auto cfg2 = parse_config(echo.dump());
  CHECK(cfg2.to_json() == echo);
}

TEST_CASE("train then evaluate produces one metrics row per task") {
  const auto dir = fresh_dir("train_eval");
  const std::string config = kConfigDir + "/synthetic_default.json";
  REQUIRE(run("train", config, small_overrides(), dir.string()) == 0);
  CHECK(fs::exists(dir / "checkpoint.bin"));
  CHECK(fs::exists(dir / "resolved_config.json"));
  CHECK(fs::exists(dir / "history.jsonl"));
  CHECK(fs::exists(dir / "run_meta.json"));

  const std::string metrics = slurp(dir / "metrics.csv");
  CHECK(metrics.find(metrics_csv_header()) == 0);
  CHECK(metrics.find("mmoe,task1,") != std::string::npos);
  CHECK(metrics.find("mmoe,task2,") != std::string::npos);

  // evaluate against the produced checkpoint reproduces the metrics file
  const auto eval_dir = fresh_dir("eval");
  auto ov = small_overrides();
  ov.push_back("checkpoint=" + (dir / "checkpoint.bin").string());
  REQUIRE(run("evaluate", config, ov, eval_dir.string()) == 0);
  CHECK(slurp(eval_dir / "metrics.csv") == metrics);
}

TEST_CASE("missing checkpoint is an explicit error") {
  const auto dir = fresh_dir("no_ckpt");
  const std::string config = kConfigDir + "/synthetic_default.json";
  CHECK(run("evaluate", config, small_overrides(), dir.string()) == 1);
}

TEST_CASE("unknown command exits nonzero") {
  const auto dir = fresh_dir("bad_cmd");
  CHECK(run("explode", kConfigDir + "/synthetic_default.json", {}, dir.string()) == 1);
}

TEST_CASE("prepare-data dumps columnar files and label stats") {
  const auto dir = fresh_dir("prep");
  REQUIRE(run("prepare-data", kConfigDir + "/synthetic_default.json",
              {"dataset.synthetic.n_train=50", "dataset.synthetic.n_test=20"},
              dir.string()) == 0);
  CHECK(fs::exists(dir / "train_data.csv"));
  CHECK(fs::exists(dir / "test_data.csv"));
  CHECK(fs::exists(dir / "schema.json"));
  const auto summary = nlohmann::json::parse(slurp(dir / "data_summary.json"));
  CHECK(summary.at("n_train").get<std::size_t>() == 50);
  CHECK(summary.at("label_base_rate_train").contains("task1"));
}

TEST_CASE("report composes rela_impr against the named baseline") {
  const std::string config = kConfigDir + "/synthetic_default.json";
  const auto base_dir = fresh_dir("report_base");
  REQUIRE(run("train", config, small_overrides(), base_dir.string()) == 0);
  const auto other_dir = fresh_dir("report_other");
  auto ov = small_overrides(2);
  ov.push_back("model.kind=shared_bottom");
  REQUIRE(run("train", config, ov, other_dir.string()) == 0);

  const auto rows = compare_runs({base_dir.string(), other_dir.string()}, "mmoe");
  REQUIRE(rows.size() == 4);
  // baseline rows have no relaimpr; others match eval::rela_impr exactly
  double base_auc_task1 = 0.0, other_auc_task1 = 0.0, other_ri_task1 = 0.0;
  for (const auto& r : rows) {
    if (r.model == "mmoe") {
      CHECK_FALSE(r.relaimpr_pct.has_value());
      if (r.task == "task1") base_auc_task1 = r.auc;
    } else {
      REQUIRE(r.relaimpr_pct.has_value());
      if (r.task == "task1") {
        other_auc_task1 = r.auc;
        other_ri_task1 = *r.relaimpr_pct;
      }
    }
  }
  CHECK(other_ri_task1 == eval::rela_impr(other_auc_task1, base_auc_task1));

  // baseline compared to itself: zero for all tasks
  const auto self_rows = compare_runs({base_dir.string()}, "mmoe");
  for (const auto& r : self_rows) CHECK_FALSE(r.relaimpr_pct.has_value());

  const auto report_dir = fresh_dir("report_out");
  std::ofstream cfg(report_dir / "report.json");
  nlohmann::json j;
  j["dataset"] = {{"source", "synthetic"},
                  {"synthetic",
                   {{"tasks", {{{"name", "a"}}, {{"name", "b"}}}},
                    {"features", nlohmann::json::array()}}}};
  j["model"] = {{"kind", "mmoe"}};
  j["report"] = {{"runs", {base_dir.string(), other_dir.string()}}, {"baseline", "mmoe"}};
  cfg << j.dump();
  cfg.close();
  REQUIRE(run("report", (report_dir / "report.json").string(), {}, report_dir.string()) == 0);
  const auto table = slurp(report_dir / "comparison.csv");
  CHECK(table.find(metrics_csv_header()) == 0);
  CHECK(table.find("shared_bottom,task1,") != std::string::npos);
  // signed percent with two decimals
  CHECK((table.find("%") != std::string::npos));

  CHECK_THROWS_WITH_AS(compare_runs({base_dir.string()}, "missing_baseline"),
                       doctest::Contains("not found"), Error);
}

TEST_CASE("report refuses runs over different dataset fingerprints") {
  const std::string config = kConfigDir + "/synthetic_default.json";
  const auto a = fresh_dir("fp_a");
  REQUIRE(run("train", config, small_overrides(), a.string()) == 0);
  const auto b = fresh_dir("fp_b");
  auto ov = small_overrides();
  ov.push_back("dataset.seed=99");
  REQUIRE(run("train", config, ov, b.string()) == 0);
  CHECK_THROWS_WITH_AS(compare_runs({a.string(), b.string()}, "mmoe"),
                       doctest::Contains("different datasets"), Error);
}

TEST_CASE("feature-importance, gate-weights, trim and export-repr write artifacts") {
  const auto train_dir = fresh_dir("full_train");
  const std::string config = kConfigDir + "/synthetic_dtn.json";
  std::vector<std::string> ov = {
      "dataset.synthetic.n_train=1500",
      "dataset.synthetic.n_test=600",
      "training.max_epochs=1",
      "training.batch_size=256",
  };
  REQUIRE(run("train", config, ov, train_dir.string()) == 0);

  auto with_ckpt = ov;
  with_ckpt.push_back("checkpoint=" + (train_dir / "checkpoint.bin").string());

  const auto fi_dir = fresh_dir("fi");
  auto fi_ov = with_ckpt;
  fi_ov.push_back("evaluation.fi_repeats=1");
  fi_ov.push_back(R"(evaluation.fi_features=["x1_excl","x_noise"])");
  REQUIRE(run("feature-importance", config, fi_ov, fi_dir.string()) == 0);
  CHECK(fs::exists(fi_dir / "fi_report.csv"));
  CHECK(fs::exists(fi_dir / "fi_scatter_task1_task2.csv"));

  const auto gw_dir = fresh_dir("gw");
  REQUIRE(run("gate-weights", config, with_ckpt, gw_dir.string()) == 0);
  const auto gw = slurp(gw_dir / "gate_weights.csv");
  CHECK(gw.find("task,gate,candidate_owner") == 0);
  CHECK(gw.find("task2,other,") != std::string::npos);

  const auto trim_dir = fresh_dir("trim");
  auto trim_ov = with_ckpt;
  trim_ov.push_back("trim.threshold=0.05");
  REQUIRE(run("trim", config, trim_ov, trim_dir.string()) == 0);
  CHECK(fs::exists(trim_dir / "trimmed_checkpoint.bin"));
  CHECK(fs::exists(trim_dir / "trim_report.json"));

  const auto repr_dir = fresh_dir("repr");
  auto repr_ov = with_ckpt;
  repr_ov.push_back("export.sample_count=40");
  REQUIRE(run("export-repr", config, repr_ov, repr_dir.string()) == 0);
  CHECK(fs::exists(repr_dir / "repr_task1_masknet.csv"));
  CHECK(fs::exists(repr_dir / "repr_shared_masknet.csv"));
  const auto repr = slurp(repr_dir / "repr_task1_masknet.csv");
  CHECK(repr.find("label,row,c0") == 0);
  CHECK(repr.find("task1/masknet,") != std::string::npos);
}

TEST_CASE("reruns with the same resolved config reproduce metrics bit-for-bit") {
  const std::string config = kConfigDir + "/synthetic_default.json";
  const auto a = fresh_dir("det_a");
  const auto b = fresh_dir("det_b");
  REQUIRE(run("train", config, small_overrides(), a.string()) == 0);
  REQUIRE(run("train", config, small_overrides(), b.string()) == 0);
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "run_meta.json") == slurp(b / "run_meta.json"));
}
