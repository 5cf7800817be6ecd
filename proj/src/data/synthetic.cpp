// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include "dtnlab/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dtnlab/core/error.hpp"
#include "dtnlab/core/rng.hpp"

namespace dtnlab::data {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double SyntheticGroundTruth::logit(const FeatureSchema& schema, const Dataset& ds, std::size_t row,
                                   std::size_t t) const {
  auto value_of = [&](std::size_t f) -> double {
    if (schema.features()[f].is_categorical()) {
      const auto id = ds.categorical_column(schema.column_of(f))[row];
      return category_values[f][static_cast<std::size_t>(id)];
    }
    return static_cast<double>(ds.continuous_column(schema.column_of(f))[row]);
  };
  double z = bias[t];
  for (std::size_t f = 0; f < linear[t].size(); ++f) {
    if (linear[t][f] != 0.0) z += linear[t][f] * value_of(f);
  }
  for (const auto& [pair, coef] : pair_coefs[t]) {
    z += coef * value_of(pair.first) * value_of(pair.second);
  }
  return z;
}

double SyntheticGroundTruth::relevance(std::size_t t, std::size_t f) const {
  double r = std::abs(linear[t][f]);
  for (const auto& [pair, coef] : pair_coefs[t]) {
    if (pair.first == f || pair.second == f) r += std::abs(coef);
  }
  return r;
}

std::vector<std::pair<std::string, std::string>> SyntheticGroundTruth::relevant_categorical_pairs(
    const FeatureSchema& schema) const {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& task_pairs : pair_coefs) {
    for (const auto& [pair, coef] : task_pairs) {
      if (coef == 0.0) continue;
      if (!schema.features()[pair.first].is_categorical()) continue;
      if (!schema.features()[pair.second].is_categorical()) continue;
      if (seen.insert(pair).second) {
        out.emplace_back(schema.features()[pair.first].name, schema.features()[pair.second].name);
      }
    }
  }
  return out;
}

SyntheticData generate_synthetic(std::size_t n_train, std::size_t n_test,
                                 const SyntheticSpec& spec, std::uint64_t seed) {
  require(spec.tasks.size() >= 2, "synthetic", "at least two tasks required");
  require(!spec.features.empty(), "synthetic", "at least one feature required");

  std::vector<FeatureSpec> fspecs;
  for (const auto& f : spec.features) {
    FeatureSpec s;
    s.name = f.name;
    s.kind = f.kind;
    if (f.kind == FeatureKind::kCategorical) {
      require(f.vocab_size >= 2, "synthetic",
              "categorical feature '" + f.name + "' needs vocab_size >= 2");
      s.vocab_size = f.vocab_size;
      s.embedding_dim = f.embedding_dim;
    }
    fspecs.push_back(std::move(s));
  }
  std::vector<std::string> task_names;
  std::map<std::string, std::string> deps;
  for (const auto& t : spec.tasks) {
    task_names.push_back(t.name);
    if (!t.preceding_task.empty()) deps[t.name] = t.preceding_task;
  }
  FeatureSchema schema(std::move(fspecs), task_names, deps);

  const std::size_t n_tasks = schema.n_tasks();
  const std::size_t n_features = schema.n_features();

  // Resolve duplicate tasks onto their sources.
  std::vector<std::size_t> source_task(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const auto& dup = spec.tasks[t].duplicate_of;
    if (dup.empty()) {
      source_task[t] = t;
    } else {
      const std::size_t s = schema.task_index(dup);
      require(s != t, "synthetic", "task '" + spec.tasks[t].name + "' cannot duplicate itself");
      require(spec.tasks[s].duplicate_of.empty(), "synthetic",
              "task '" + spec.tasks[t].name + "' duplicates another duplicate");
      source_task[t] = s;
    }
  }

  SyntheticGroundTruth gt;
  gt.linear.assign(n_tasks, std::vector<double>(n_features, 0.0));
  gt.pair_coefs.resize(n_tasks);
  gt.bias.resize(n_tasks, 0.0);

  for (std::size_t f = 0; f < n_features; ++f) {
    for (const auto& [task, coef] : spec.features[f].coefs) {
      gt.linear[schema.task_index(task)][f] = coef;
    }
  }
  for (const auto& p : spec.pairs) {
    const std::size_t a = schema.feature_index(p.a);
    const std::size_t b = schema.feature_index(p.b);
    require(a != b, "synthetic", "pair (" + p.a + ", " + p.b + ") uses the same feature twice");
    const auto key = std::minmax(a, b);
    for (const auto& [task, coef] : p.coefs) {
      gt.pair_coefs[schema.task_index(task)][{key.first, key.second}] += coef;
    }
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    gt.bias[t] = spec.tasks[t].bias;
    if (source_task[t] != t) {
      const bool has_own = !gt.pair_coefs[t].empty() ||
                           std::any_of(gt.linear[t].begin(), gt.linear[t].end(),
                                       [](double c) { return c != 0.0; });
      require(!has_own, "synthetic",
              "duplicate task '" + spec.tasks[t].name + "' must not declare coefficients");
      gt.linear[t] = gt.linear[source_task[t]];
      gt.pair_coefs[t] = gt.pair_coefs[source_task[t]];
      gt.bias[t] = gt.bias[source_task[t]];
    }
  }

  // Structural requirements over distinct label processes.
  std::vector<std::size_t> distinct;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (source_task[t] == t) distinct.push_back(t);
  }
  std::size_t n_shared = 0, n_irrelevant = 0;
  for (std::size_t f = 0; f < n_features; ++f) {
    std::size_t active = 0;
    for (const std::size_t t : distinct) {
      if (gt.relevance(t, f) > 0.0) ++active;
    }
    if (active == 0) {
      ++n_irrelevant;
      gt.irrelevant_features.push_back(schema.features()[f].name);
    } else if (active == 1) {
      for (const std::size_t t : distinct) {
        if (gt.relevance(t, f) > 0.0) {
          gt.exclusive_features.emplace_back(schema.features()[f].name, schema.tasks()[t]);
        }
      }
    } else {
      ++n_shared;
    }
  }
  require(n_irrelevant >= 1, "synthetic", "spec must declare at least one irrelevant feature");
  // With a single distinct process (duplication controls) sharing is implied.
  require(distinct.size() < 2 || n_shared >= 1, "synthetic",
          "spec must declare at least one feature shared across tasks");
  for (const std::size_t t : distinct) {
    bool has_exclusive = false;
    for (const auto& [f, task] : gt.exclusive_features) {
      if (task == schema.tasks()[t]) has_exclusive = true;
    }
    require(has_exclusive, "synthetic",
            "task '" + schema.tasks()[t] + "' needs at least one exclusive feature");
    require(!gt.pair_coefs[t].empty(), "synthetic",
            "task '" + schema.tasks()[t] + "' needs at least one relevant feature pair");
  }

  Rng rng(mix_seed(seed, 0x73796e74ULL));  // "synt" stream

  // Latent category values first, so they do not depend on row counts.
  gt.category_values.resize(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    const auto& fs = schema.features()[f];
    if (!fs.is_categorical()) continue;
    gt.category_values[f].resize(fs.vocab_size);
    for (auto& v : gt.category_values[f]) v = rng.normal();
  }

  auto gen_split = [&](std::size_t n_rows) {
    Dataset ds(schema, n_rows);
    for (std::size_t c = 0; c < schema.n_categorical(); ++c)
      ds.categorical_column(c).resize(n_rows);
    for (std::size_t c = 0; c < schema.n_continuous(); ++c)
      ds.continuous_column(c).resize(n_rows);
    for (std::size_t t = 0; t < n_tasks; ++t) ds.label_column(t).resize(n_rows);
    ds.set_row_count(n_rows);

    for (std::size_t r = 0; r < n_rows; ++r) {
      for (std::size_t f = 0; f < n_features; ++f) {
        const auto& fs = schema.features()[f];
        if (fs.is_categorical()) {
          const auto id = 1 + rng.below(fs.vocab_size - 1);
          ds.categorical_column(schema.column_of(f))[r] = static_cast<std::int32_t>(id);
        } else {
          ds.continuous_column(schema.column_of(f))[r] = static_cast<float>(rng.normal());
        }
      }
      for (const std::size_t t : distinct) {
        const double p = sigmoid(gt.logit(schema, ds, r, t));
        ds.label_column(t)[r] = rng.bernoulli(p) ? 1 : 0;
      }
      for (std::size_t t = 0; t < n_tasks; ++t) {
        if (source_task[t] != t) ds.label_column(t)[r] = ds.label_column(source_task[t])[r];
      }
    }
    ds.check_consistent(schema);
    return ds;
  };

  SyntheticData out;
  out.train = gen_split(n_train);
  out.test = gen_split(n_test);
  out.schema = schema;
  out.ground_truth = std::move(gt);
  return out;
}

}  // namespace dtnlab::data
