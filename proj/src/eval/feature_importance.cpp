// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include "dtnlab/eval/feature_importance.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dtnlab/core/error.hpp"
#include "dtnlab/eval/metrics.hpp"

namespace dtnlab::eval {

template <typename T>
Matrix<float> predict(const mtl::ModelGraph<T>& model, const data::Dataset& dataset,
                      std::size_t batch_size) {
  Matrix<float> out(dataset.n_rows(), model.n_tasks());
  data::BatchIterator it(dataset, batch_size, false, 0);
  data::ExampleBatch batch;
  Matrix<T> preds;
  std::size_t row = 0;
  while (it.next(batch)) {
    model.forward(batch, preds, nullptr);
    for (std::size_t r = 0; r < preds.rows(); ++r, ++row) {
      for (std::size_t t = 0; t < preds.cols(); ++t) {
        out.at(row, t) = static_cast<float>(preds.at(r, t));
      }
    }
  }
  return out;
}

namespace {

std::vector<float> label_floats(const data::Dataset& dataset, std::size_t t) {
  const auto& col = dataset.label_column(t);
  std::vector<float> y(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) y[i] = static_cast<float>(col[i]);
  return y;
}

std::vector<float> column_of(const Matrix<float>& m, std::size_t c) {
  std::vector<float> v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m.at(r, c);
  return v;
}

}  // namespace

template <typename T>
std::vector<double> task_aucs(const mtl::ModelGraph<T>& model, const data::Dataset& dataset,
                              std::size_t batch_size) {
  const auto preds = predict(model, dataset, batch_size);
  std::vector<double> out(model.n_tasks());
  for (std::size_t t = 0; t < model.n_tasks(); ++t) {
    out[t] = auc(column_of(preds, t), label_floats(dataset, t));
  }
  return out;
}

template <typename T>
double permutation_feature_importance(const mtl::ModelGraph<T>& model,
                                      const data::Dataset& test_data,
                                      const std::string& feature, const std::string& task,
                                      std::size_t repeats, std::uint64_t seed) {
  require(repeats >= 1, "feature_importance", "repeats must be >= 1");
  const auto& schema = model.schema();
  schema.feature_index(feature);  // throws on unknown feature
  const std::size_t t = schema.task_index(task);
  const double base = task_aucs(model, test_data)[t];
  // Averaging the per-repeat drops (rather than the permuted AUCs) keeps the
  // FI of an unread feature exactly zero: every term is exactly zero.
  double drop = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto permuted = data::permute_feature(test_data, schema, feature, seed + r);
    drop += base - task_aucs(model, permuted)[t];
  }
  return drop / static_cast<double>(repeats);
}

template <typename T>
FIReport fi_report(const mtl::ModelGraph<T>& model, const data::Dataset& test_data,
                   const std::vector<std::string>& features,
                   const std::vector<std::string>& tasks, std::size_t repeats,
                   std::uint64_t seed) {
  require(repeats >= 1, "feature_importance", "repeats must be >= 1");
  require(!features.empty() && !tasks.empty(), "feature_importance", "nothing to evaluate");
  const auto& schema = model.schema();

  FIReport report;
  report.features = features;
  report.tasks = tasks;
  report.repeats = repeats;
  report.seed = seed;
  report.fi.resize(features.size(), tasks.size());

  std::vector<std::size_t> task_idx;
  for (const auto& t : tasks) task_idx.push_back(schema.task_index(t));

  const auto base_all = task_aucs(model, test_data);
  for (const std::size_t ti : task_idx) report.base_auc.push_back(base_all[ti]);

  for (std::size_t f = 0; f < features.size(); ++f) {
    schema.feature_index(features[f]);  // validate early
    std::vector<double> drop(tasks.size(), 0.0);
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto permuted = data::permute_feature(test_data, schema, features[f], seed + r);
      const auto aucs = task_aucs(model, permuted);
      for (std::size_t k = 0; k < tasks.size(); ++k) {
        drop[k] += report.base_auc[k] - aucs[task_idx[k]];
      }
    }
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      report.fi.at(f, k) = drop[k] / static_cast<double>(repeats);
    }
  }

  // Descending ranks per task; ties resolved by feature order (stable).
  report.ranks.assign(tasks.size(), {});
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return report.fi.at(a, k) > report.fi.at(b, k);
    });
    report.ranks[k].assign(features.size(), 0);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      report.ranks[k][order[pos]] = pos + 1;
    }
  }

  report.rank_correlation.resize(tasks.size(), tasks.size());
  for (std::size_t a = 0; a < tasks.size(); ++a) {
    for (std::size_t b = 0; b < tasks.size(); ++b) {
      if (a == b) {
        report.rank_correlation.at(a, b) = 1.0;
        continue;
      }
      std::vector<double> xa(features.size()), xb(features.size());
      for (std::size_t f = 0; f < features.size(); ++f) {
        xa[f] = report.fi.at(f, a);
        xb[f] = report.fi.at(f, b);
      }
      report.rank_correlation.at(a, b) = spearman(xa, xb);
    }
  }
  return report;
}

double FIReport::fi_of(const std::string& feature, const std::string& task) const {
  const auto f = std::find(features.begin(), features.end(), feature);
  const auto t = std::find(tasks.begin(), tasks.end(), task);
  require(f != features.end() && t != tasks.end(), "fi_report", "unknown feature or task");
  return fi.at(static_cast<std::size_t>(f - features.begin()),
               static_cast<std::size_t>(t - tasks.begin()));
}

void write_fi_report(const FIReport& report, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "fi_report", "cannot open '" + path + "'");
  char buf[64];
  out << "# repeats=" << report.repeats << " seed=" << report.seed;
  for (std::size_t k = 0; k < report.tasks.size(); ++k) {
    std::snprintf(buf, sizeof(buf), " base_auc_%s=%.6f", report.tasks[k].c_str(),
                  report.base_auc[k]);
    out << buf;
  }
  out << "\n# rank_correlation:";
  for (std::size_t a = 0; a < report.tasks.size(); ++a) {
    for (std::size_t b = a + 1; b < report.tasks.size(); ++b) {
      std::snprintf(buf, sizeof(buf), " %s~%s=%.4f", report.tasks[a].c_str(),
                    report.tasks[b].c_str(), report.rank_correlation.at(a, b));
      out << buf;
    }
  }
  out << "\nfeature";
  for (const auto& t : report.tasks) out << ",fi_" << t;
  for (const auto& t : report.tasks) out << ",rank_" << t;
  out << "\n";
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    out << report.features[f];
    for (std::size_t k = 0; k < report.tasks.size(); ++k) {
      std::snprintf(buf, sizeof(buf), ",%.6f", report.fi.at(f, k));
      out << buf;
    }
    for (std::size_t k = 0; k < report.tasks.size(); ++k) out << ',' << report.ranks[k][f];
    out << "\n";
  }
  require(out.good(), "fi_report", "short write to '" + path + "'");
}

void write_fi_scatter(const FIReport& report, std::size_t task_a, std::size_t task_b,
                      const std::string& path) {
  require(task_a < report.tasks.size() && task_b < report.tasks.size(), "fi_scatter",
          "task index out of range");
  std::ofstream out(path);
  require(out.good(), "fi_scatter", "cannot open '" + path + "'");
  out << "feature,fi_" << report.tasks[task_a] << ",fi_" << report.tasks[task_b] << "\n";
  char buf[96];
  for (std::size_t f = 0; f < report.features.size(); ++f) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f", report.features[f].c_str(),
                  report.fi.at(f, task_a), report.fi.at(f, task_b));
    out << buf << "\n";
  }
  require(out.good(), "fi_scatter", "short write to '" + path + "'");
}

template Matrix<float> predict<float>(const mtl::ModelGraph<float>&, const data::Dataset&,
                                      std::size_t);
template Matrix<float> predict<double>(const mtl::ModelGraph<double>&, const data::Dataset&,
                                       std::size_t);
template std::vector<double> task_aucs<float>(const mtl::ModelGraph<float>&,
                                              const data::Dataset&, std::size_t);
template std::vector<double> task_aucs<double>(const mtl::ModelGraph<double>&,
                                               const data::Dataset&, std::size_t);
template double permutation_feature_importance<float>(const mtl::ModelGraph<float>&,
                                                      const data::Dataset&, const std::string&,
                                                      const std::string&, std::size_t,
                                                      std::uint64_t);
template double permutation_feature_importance<double>(const mtl::ModelGraph<double>&,
                                                       const data::Dataset&, const std::string&,
                                                       const std::string&, std::size_t,
                                                       std::uint64_t);
template FIReport fi_report<float>(const mtl::ModelGraph<float>&, const data::Dataset&,
                                   const std::vector<std::string>&,
                                   const std::vector<std::string>&, std::size_t, std::uint64_t);
template FIReport fi_report<double>(const mtl::ModelGraph<double>&, const data::Dataset&,
                                    const std::vector<std::string>&,
                                    const std::vector<std::string>&, std::size_t, std::uint64_t);

}  // namespace dtnlab::eval
