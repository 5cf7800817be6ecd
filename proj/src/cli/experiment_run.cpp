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
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dtnlab/cli/experiment.hpp"
#include "dtnlab/core/error.hpp"
#include "dtnlab/eval/feature_importance.hpp"
#include "dtnlab/eval/metrics.hpp"
#include "dtnlab/mtl/serialize.hpp"

namespace dtnlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const char* metrics_csv_header() { return "model,task,auc,logloss,relaimpr_pct"; }

LoadedData load_dataset(const DatasetSection& section) {
  LoadedData out;
  if (section.source == "census") {
    data::CensusOptions opts;
    opts.marital_positive_is_never_married = section.marital_positive_is_never_married;
    auto census =
        data::load_census_income(section.census_train_path, section.census_test_path, opts);
    out.train = std::move(census.train);
    out.test = std::move(census.test);
    out.schema = std::move(census.schema);
  } else {
    auto synth = data::generate_synthetic(section.n_train, section.n_test, section.synthetic,
                                          section.seed);
    out.train = std::move(synth.train);
    out.test = std::move(synth.test);
    out.schema = std::move(synth.schema);
    out.ground_truth = std::move(synth.ground_truth);
  }
  out.fingerprint_train = out.train.fingerprint(out.schema);
  out.fingerprint_test = out.test.fingerprint(out.schema);
  return out;
}

void materialize_model_defaults(ExperimentConfig& config, const LoadedData& data) {
  // memonet cross-field defaults: ground-truth relevant pairs on synthetic
  // data; all pairs among the 8 highest-cardinality categorical fields on
  // census-style data.
  auto default_fields = [&]() -> std::vector<std::pair<std::string, std::string>> {
    if (data.ground_truth.has_value()) {
      auto pairs = data.ground_truth->relevant_categorical_pairs(data.schema);
      require(!pairs.empty(), "config",
              "memonet needs cross fields: the synthetic spec has no relevant "
              "categorical pairs; set memonet_fields explicitly");
      return pairs;
    }
    std::vector<std::size_t> cats;
    for (std::size_t i = 0; i < data.schema.n_features(); ++i) {
      if (data.schema.features()[i].is_categorical()) cats.push_back(i);
    }
    std::stable_sort(cats.begin(), cats.end(), [&](std::size_t a, std::size_t b) {
      return data.schema.features()[a].vocab_size > data.schema.features()[b].vocab_size;
    });
    if (cats.size() > 8) cats.resize(8);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < cats.size(); ++i) {
      for (std::size_t j = i + 1; j < cats.size(); ++j) {
        pairs.emplace_back(data.schema.features()[cats[i]].name,
                           data.schema.features()[cats[j]].name);
      }
    }
    require(!pairs.empty(), "config", "memonet needs at least two categorical fields");
    return pairs;
  };

  auto fill = [&](fim::FimSpec& spec) {
    if (spec.kind == fim::FimKind::kMemonet && spec.memonet_fields.empty()) {
      spec.memonet_fields = default_fields();
    }
  };
  fill(config.model.sfm_stack);
  for (auto& s : config.model.shared_fims) fill(s);
  for (auto& [name, list] : config.model.task_fims) {
    (void)name;
    for (auto& s : list) fill(s);
  }
}

namespace {

std::string format_relaimpr(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.2f%%", pct);
  return buf;
}

void write_metrics(const std::string& path, const std::string& model_name,
                   const std::vector<std::string>& tasks, const std::vector<double>& aucs,
                   const std::vector<double>& loglosses) {
  std::ofstream out(path);
  require(out.good(), "metrics", "cannot open '" + path + "'");
  out << metrics_csv_header() << "\n";
  char buf[128];
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%.4f,-", model_name.c_str(), tasks[t].c_str(),
                  aucs[t], loglosses[t]);
    out << buf << "\n";
  }
  require(out.good(), "metrics", "short write to '" + path + "'");
}

std::vector<double> task_loglosses(const mtl::ModelGraph<float>& model,
                                   const data::Dataset& dataset) {
  const auto preds = eval::predict(model, dataset);
  std::vector<double> out(model.n_tasks());
  for (std::size_t t = 0; t < model.n_tasks(); ++t) {
    std::vector<float> p(dataset.n_rows()), y(dataset.n_rows());
    for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
      p[r] = preds.at(r, t);
      y[r] = static_cast<float>(dataset.label_column(t)[r]);
    }
    out[t] = eval::logloss(p, y);
  }
  return out;
}

struct RunContext {
  ExperimentConfig config;
  fs::path out;
};

void write_echo_and_meta(const RunContext& ctx, const LoadedData* data) {
  {
    std::ofstream out(ctx.out / "resolved_config.json");
    require(out.good(), "run", "cannot write resolved_config.json");
    out << ctx.config.to_json().dump(2) << "\n";
  }
  if (data != nullptr) {
    json meta;
    meta["model"] = mtl::arch_kind_name(ctx.config.model.kind);
    meta["dataset_fingerprint_train"] = data->fingerprint_train;
    meta["dataset_fingerprint_test"] = data->fingerprint_test;
    meta["n_train"] = data->train.n_rows();
    meta["n_test"] = data->test.n_rows();
    std::ofstream out(ctx.out / "run_meta.json");
    require(out.good(), "run", "cannot write run_meta.json");
    out << meta.dump(2) << "\n";
  }
}

std::string checkpoint_path(const RunContext& ctx) {
  if (!ctx.config.checkpoint.empty()) {
    require(fs::exists(ctx.config.checkpoint), "run",
            "checkpoint '" + ctx.config.checkpoint + "' does not exist");
    return ctx.config.checkpoint;
  }
  const auto fallback = ctx.out / "checkpoint.bin";
  require(fs::exists(fallback), "run",
          "no checkpoint: set the 'checkpoint' config key (or --set checkpoint=...) or place "
          "checkpoint.bin in the output directory");
  return fallback.string();
}

void check_schema_compatible(const mtl::ModelGraph<float>& model, const LoadedData& data) {
  const auto& ms = model.schema();
  const auto& ds = data.schema;
  require(ms.n_features() == ds.n_features() && ms.n_tasks() == ds.n_tasks(), "run",
          "checkpoint schema does not match the configured dataset");
  for (std::size_t i = 0; i < ds.n_features(); ++i) {
    const auto& a = ms.features()[i];
    const auto& b = ds.features()[i];
    require(a.name == b.name && a.kind == b.kind && a.vocab_size == b.vocab_size, "run",
            "checkpoint schema mismatch at feature '" + b.name + "'");
  }
}

void cmd_prepare_data(RunContext& ctx) {
  const auto data = load_dataset(ctx.config.dataset);
  write_echo_and_meta(ctx, &data);
  data::write_columnar(data.train, data.schema, (ctx.out / "train_data.csv").string());
  data::write_columnar(data.test, data.schema, (ctx.out / "test_data.csv").string());
  {
    std::ofstream out(ctx.out / "schema.json");
    out << data.schema.to_json() << "\n";
  }
  json summary;
  summary["n_train"] = data.train.n_rows();
  summary["n_test"] = data.test.n_rows();
  for (std::size_t t = 0; t < data.schema.n_tasks(); ++t) {
    double train_rate = 0.0, test_rate = 0.0;
    for (const auto y : data.train.label_column(t)) train_rate += y;
    for (const auto y : data.test.label_column(t)) test_rate += y;
    summary["label_base_rate_train"][data.schema.tasks()[t]] =
        train_rate / static_cast<double>(data.train.n_rows());
    summary["label_base_rate_test"][data.schema.tasks()[t]] =
        test_rate / static_cast<double>(data.test.n_rows());
  }
  std::ofstream out(ctx.out / "data_summary.json");
  out << summary.dump(2) << "\n";
  std::cout << "prepared " << data.train.n_rows() << " train / " << data.test.n_rows()
            << " test rows\n";
}

int cmd_train(RunContext& ctx) {
  auto data = load_dataset(ctx.config.dataset);
  materialize_model_defaults(ctx.config, data);
  write_echo_and_meta(ctx, &data);
  auto model = mtl::ModelGraph<float>::build(ctx.config.model, data.schema);
  std::cout << "built " << mtl::arch_kind_name(ctx.config.model.kind) << " with "
            << model.parameter_count() << " parameters\n";
  {
    json summary;
    summary["parameter_count"] = model.parameter_count();
    summary["modules"] = json::array();
    auto add_set = [&](int set, const std::string& owner) {
      const auto& modules = model.set_modules(set);
      for (std::size_t j = 0; j < modules.size(); ++j) {
        summary["modules"].push_back({{"owner", owner},
                                      {"index", j},
                                      {"kind", fim::fim_kind_name(modules[j]->spec().kind)},
                                      {"parameters", model.fim_parameter_count(set, j)}});
      }
    };
    add_set(-1, "shared");
    for (std::size_t t = 0; t < data.schema.n_tasks(); ++t) {
      add_set(static_cast<int>(t), data.schema.tasks()[t]);
    }
    std::ofstream out(ctx.out / "model_summary.json");
    out << summary.dump(2) << "\n";
  }

  std::ofstream history(ctx.out / "history.jsonl");
  require(history.good(), "run", "cannot write history.jsonl");
  const auto& tasks = data.schema.tasks();
  const auto on_epoch = [&](const train::EpochStats& s) {
    json line;
    line["epoch"] = s.epoch;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      line["train_loss"][tasks[t]] = s.train_loss[t];
      line["eval_auc"][tasks[t]] = s.eval_auc[t];
    }
    line["total_train_loss"] = s.total_train_loss;
    line["mean_eval_auc"] = s.mean_eval_auc;
    line["wall_ms"] = s.wall_ms;
    history << line.dump() << "\n";
    history.flush();
    std::cout << "epoch " << s.epoch << ": loss " << s.total_train_loss << ", mean eval AUC "
              << s.mean_eval_auc << "\n";
  };

  const auto result = train::train(model, data.train, data.test, ctx.config.training, on_epoch);
  model.save_checkpoint((ctx.out / "checkpoint.bin").string());
  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason << "\n";
    return 3;
  }

  const auto aucs = eval::task_aucs(model, data.test);
  const auto lls = task_loglosses(model, data.test);
  write_metrics((ctx.out / "metrics.csv").string(), mtl::arch_kind_name(ctx.config.model.kind),
                tasks, aucs, lls);
  std::cout << "best epoch " << result.best_epoch << "; test AUC:";
  for (std::size_t t = 0; t < tasks.size(); ++t) std::cout << " " << tasks[t] << "=" << aucs[t];
  std::cout << "\n";
  return 0;
}

void cmd_evaluate(RunContext& ctx) {
  auto data = load_dataset(ctx.config.dataset);
  auto model = mtl::ModelGraph<float>::load_checkpoint(checkpoint_path(ctx));
  check_schema_compatible(model, data);
  ctx.config.model = model.config();
  write_echo_and_meta(ctx, &data);
  const auto aucs = eval::task_aucs(model, data.test);
  const auto lls = task_loglosses(model, data.test);
  write_metrics((ctx.out / "metrics.csv").string(),
                mtl::arch_kind_name(model.config().kind), data.schema.tasks(), aucs, lls);
}

void cmd_feature_importance(RunContext& ctx) {
  auto data = load_dataset(ctx.config.dataset);
  auto model = mtl::ModelGraph<float>::load_checkpoint(checkpoint_path(ctx));
  check_schema_compatible(model, data);
  ctx.config.model = model.config();
  write_echo_and_meta(ctx, &data);
  std::vector<std::string> features = ctx.config.evaluation.fi_features;
  if (features.empty()) {
    for (const auto& f : data.schema.features()) features.push_back(f.name);
  }
  std::vector<std::string> tasks = ctx.config.evaluation.fi_tasks;
  if (tasks.empty()) tasks = data.schema.tasks();
  const auto report = eval::fi_report(model, data.test, features, tasks,
                                      ctx.config.evaluation.fi_repeats,
                                      ctx.config.evaluation.fi_seed);
  eval::write_fi_report(report, (ctx.out / "fi_report.csv").string());
  for (std::size_t a = 0; a < tasks.size(); ++a) {
    for (std::size_t b = a + 1; b < tasks.size(); ++b) {
      eval::write_fi_scatter(report, a, b,
                             (ctx.out / ("fi_scatter_" + tasks[a] + "_" + tasks[b] + ".csv"))
                                 .string());
    }
  }
}

void write_gate_weights(const mtl::GateWeightReport& report, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "gate_weights", "cannot open '" + path + "'");
  out << "task,gate,candidate_owner,candidate_kind,candidate_index,scaled_by_pred,mean_weight\n";
  char buf[160];
  for (const auto& g : report.gates) {
    for (const auto& c : g.candidates) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%zu,%d,%.6f", g.task.c_str(), g.role.c_str(),
                    c.owner.c_str(), c.kind.c_str(), c.index, c.scaled_by_pred ? 1 : 0,
                    c.mean_weight);
      out << buf << "\n";
    }
  }
}

void cmd_gate_weights(RunContext& ctx) {
  auto data = load_dataset(ctx.config.dataset);
  auto model = mtl::ModelGraph<float>::load_checkpoint(checkpoint_path(ctx));
  check_schema_compatible(model, data);
  ctx.config.model = model.config();
  write_echo_and_meta(ctx, &data);
  const auto report = model.extract_gate_weights(data.test);
  write_gate_weights(report, (ctx.out / "gate_weights.csv").string());
}

int cmd_trim(RunContext& ctx) {
  auto data = load_dataset(ctx.config.dataset);
  auto model = mtl::ModelGraph<float>::load_checkpoint(checkpoint_path(ctx));
  check_schema_compatible(model, data);
  ctx.config.model = model.config();
  write_echo_and_meta(ctx, &data);
  require(ctx.config.trim.threshold.has_value() || !ctx.config.trim.keep.empty(), "trim",
          "set trim.threshold or trim.keep");

  mtl::TrimRule rule;
  const auto& schema = model.schema();
  auto set_id_of = [&](const std::string& owner) -> int {
    return owner == "shared" ? -1 : static_cast<int>(schema.task_index(owner));
  };
  if (!ctx.config.trim.keep.empty()) {
    for (const auto& [owner, kept] : ctx.config.trim.keep) {
      const int set = set_id_of(owner);
      std::vector<bool> flags(model.set_modules(set).size(), false);
      for (const std::size_t idx : kept) {
        require(idx < flags.size(), "trim", "keep index out of range for " + owner);
        flags[idx] = true;
      }
      rule.keep[set] = std::move(flags);
    }
  } else {
    const auto weights = model.extract_gate_weights(data.test);
    // drop a module only when every gate that consults it stays below the
    // threshold
    std::map<std::pair<std::string, std::size_t>, double> max_weight;
    for (const auto& g : weights.gates) {
      for (const auto& c : g.candidates) {
        auto key = std::make_pair(c.owner, c.index);
        auto it = max_weight.find(key);
        if (it == max_weight.end() || it->second < c.mean_weight) {
          max_weight[key] = c.mean_weight;
        }
      }
    }
    for (const auto& [key, weight] : max_weight) {
      const int set = set_id_of(key.first);
      auto& flags = rule.keep[set];
      if (flags.empty()) flags.assign(model.set_modules(set).size(), true);
      if (weight < *ctx.config.trim.threshold) flags[key.second] = false;
    }
  }

  const std::size_t before = model.parameter_count();
  auto trimmed = model.trimmed(rule);

  if (ctx.config.trim.finetune_epochs > 0) {
    train::TrainConfig ft = ctx.config.training;
    ft.max_epochs = ctx.config.trim.finetune_epochs;
    ft.patience = ctx.config.trim.finetune_epochs;
    train::train(trimmed, data.train, data.test, ft);
  }
  trimmed.save_checkpoint((ctx.out / "trimmed_checkpoint.bin").string());

  const auto aucs = eval::task_aucs(trimmed, data.test);
  const auto lls = task_loglosses(trimmed, data.test);
  write_metrics((ctx.out / "metrics.csv").string(),
                std::string(mtl::arch_kind_name(model.config().kind)) + "-trim",
                data.schema.tasks(), aucs, lls);
  json rep;
  rep["parameters_before"] = before;
  rep["parameters_after"] = trimmed.parameter_count();
  rep["reduction_pct"] = 100.0 * (1.0 - static_cast<double>(trimmed.parameter_count()) /
                                            static_cast<double>(before));
  std::ofstream out(ctx.out / "trim_report.json");
  out << rep.dump(2) << "\n";
  std::cout << "trimmed " << before << " -> " << trimmed.parameter_count() << " parameters\n";
  return 0;
}

void cmd_export_repr(RunContext& ctx) {
  auto data = load_dataset(ctx.config.dataset);
  auto model = mtl::ModelGraph<float>::load_checkpoint(checkpoint_path(ctx));
  check_schema_compatible(model, data);
  ctx.config.model = model.config();
  write_echo_and_meta(ctx, &data);
  require(!ctx.config.export_repr.selectors.empty(), "export_repr",
          "export.selectors must name at least one module");
  for (const auto& s : ctx.config.export_repr.selectors) {
    mtl::ReprSelector sel;
    sel.owner = s.owner;
    sel.index = s.index;
    if (!s.kind.empty()) sel.kind = fim::fim_kind_from_name(s.kind);
    const auto exported = model.export_representations(
        data.test, sel, ctx.config.export_repr.sample_count, ctx.config.export_repr.seed);
    const std::string tag =
        s.owner + "_" + (s.index.has_value() ? std::to_string(*s.index) : s.kind);
    std::ofstream out(ctx.out / ("repr_" + tag + ".csv"));
    require(out.good(), "export_repr", "cannot write repr file");
    out << "label,row";
    for (std::size_t c = 0; c < exported.values.cols(); ++c) out << ",c" << c;
    out << "\n";
    char buf[32];
    for (std::size_t r = 0; r < exported.values.rows(); ++r) {
      out << exported.labels[r] << ',' << exported.rows[r];
      for (std::size_t c = 0; c < exported.values.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), ",%.6g", static_cast<double>(exported.values.at(r, c)));
        out << buf;
      }
      out << "\n";
    }
  }
}

}  // namespace

std::vector<ComparisonRow> compare_runs(const std::vector<std::string>& run_dirs,
                                        const std::string& baseline_name) {
  require(!run_dirs.empty(), "report", "no run directories given");
  struct Run {
    std::string dir;
    std::string model;
    std::string fingerprint;
    std::vector<std::string> tasks;
    std::vector<double> auc, logloss;
  };
  std::vector<Run> runs;
  for (const auto& dir : run_dirs) {
    Run run;
    run.dir = dir;
    std::ifstream meta(fs::path(dir) / "run_meta.json");
    require(meta.good(), "report", "missing run_meta.json in '" + dir + "'");
    json jm = json::parse(meta);
    run.model = jm.at("model").get<std::string>();
    run.fingerprint = jm.at("dataset_fingerprint_test").get<std::string>();
    std::ifstream metrics(fs::path(dir) / "metrics.csv");
    require(metrics.good(), "report", "missing metrics.csv in '" + dir + "'");
    std::string line;
    std::getline(metrics, line);
    require(line == metrics_csv_header(), "report", "unexpected metrics header in '" + dir + "'");
    while (std::getline(metrics, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string model, task, auc_s, ll_s, ri;
      std::getline(ss, model, ',');
      std::getline(ss, task, ',');
      std::getline(ss, auc_s, ',');
      std::getline(ss, ll_s, ',');
      std::getline(ss, ri, ',');
      run.tasks.push_back(task);
      run.auc.push_back(std::stod(auc_s));
      run.logloss.push_back(std::stod(ll_s));
    }
    require(!run.tasks.empty(), "report", "empty metrics in '" + dir + "'");
    runs.push_back(std::move(run));
  }

  for (const auto& r : runs) {
    require(r.fingerprint == runs.front().fingerprint, "report",
            "refusing to compare runs over different datasets ('" + r.dir + "' differs)");
  }

  const Run* baseline = nullptr;
  for (const auto& r : runs) {
    if (r.model == baseline_name || fs::path(r.dir).filename().string() == baseline_name) {
      baseline = &r;
      break;
    }
  }
  require(baseline != nullptr, "report", "baseline '" + baseline_name + "' not found");

  std::vector<ComparisonRow> rows;
  for (const auto& r : runs) {
    require(r.tasks == baseline->tasks, "report", "task lists differ across runs");
    for (std::size_t t = 0; t < r.tasks.size(); ++t) {
      ComparisonRow row;
      row.model = r.model;
      row.task = r.tasks[t];
      row.auc = r.auc[t];
      row.logloss = r.logloss[t];
      if (&r != baseline) {
        row.relaimpr_pct = eval::rela_impr(r.auc[t], baseline->auc[t]);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_comparison(const std::vector<ComparisonRow>& rows, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "report", "cannot open '" + path + "'");
  out << metrics_csv_header() << "\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%.4f,%s", r.model.c_str(), r.task.c_str(), r.auc,
                  r.logloss,
                  r.relaimpr_pct.has_value() ? format_relaimpr(*r.relaimpr_pct).c_str() : "-");
    out << buf << "\n";
  }
  require(out.good(), "report", "short write to '" + path + "'");
}

int run(const std::string& command, const std::string& config_path,
        const std::vector<std::string>& overrides, const std::string& out_dir) {
  try {
    RunContext ctx{load_config(config_path, overrides), {}};
    std::string out = out_dir;
    if (out.empty()) out = ctx.config.output_dir;
    if (out.empty()) {
      const char* root = std::getenv("DTNLAB_OUT_ROOT");
      require(root != nullptr && *root != '\0', "run",
              "no output directory: pass --out, set output_dir, or export DTNLAB_OUT_ROOT");
      out = (fs::path(root) / fs::path(config_path).stem()).string();
    }
    ctx.out = out;
    ctx.config.output_dir = out;
    fs::create_directories(ctx.out);

    if (command == "prepare-data") {
      cmd_prepare_data(ctx);
    } else if (command == "train") {
      return cmd_train(ctx);
    } else if (command == "evaluate") {
      cmd_evaluate(ctx);
    } else if (command == "feature-importance") {
      cmd_feature_importance(ctx);
    } else if (command == "gate-weights") {
      cmd_gate_weights(ctx);
    } else if (command == "trim") {
      return cmd_trim(ctx);
    } else if (command == "export-repr") {
      cmd_export_repr(ctx);
    } else if (command == "report") {
      require(!ctx.config.report.runs.empty(), "report",
              "report.runs must list run directories");
      require(!ctx.config.report.baseline.empty(), "report", "report.baseline is required");
      write_echo_and_meta(ctx, nullptr);
      const auto rows = compare_runs(ctx.config.report.runs, ctx.config.report.baseline);
      write_comparison(rows, (ctx.out / "comparison.csv").string());
    } else {
      fail("run", "unknown command '" + command +
                      "' (prepare-data|train|evaluate|feature-importance|gate-weights|trim|"
                      "export-repr|report)");
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dtnlab::cli
