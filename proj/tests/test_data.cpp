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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "dtnlab/core/error.hpp"
#include "dtnlab/data/census.hpp"
#include "dtnlab/data/dataset.hpp"
#include "dtnlab/data/synthetic.hpp"
#include "test_util.hpp"

using namespace dtnlab;
using namespace dtnlab::data;

namespace {

namespace fs = std::filesystem;

// One raw census record with every field set to a plausible default.
std::vector<std::string> default_record() {
  const auto& names = census_column_names();
  std::vector<std::string> rec(names.size());
  std::map<std::string, std::string> defaults = {
      {"age", "33"},          {"wage_per_hour", "0"},  {"capital_gains", "0"},
      {"capital_losses", "0"}, {"stock_dividends", "0"}, {"instance_weight", "1500.5"},
      {"num_emp", "2"},       {"weeks_worked", "52"},  {"marital_stat", "Never married"},
      {"income_50k", "- 50000."},
  };
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = defaults.find(names[i]);
    rec[i] = it != defaults.end() ? it->second : "v_" + names[i];
  }
  return rec;
}

void write_records(const std::string& path, const std::vector<std::vector<std::string>>& recs) {
  std::ofstream out(path);
  for (const auto& r : recs) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? ", " : " ") << r[i];
    out << "\n";
  }
}

std::size_t field_index(const std::string& name) {
  const auto& names = census_column_names();
  return static_cast<std::size_t>(
      std::find(names.begin(), names.end(), name) - names.begin());
}

struct CensusFixture {
  std::string train_path;
  std::string test_path;

  CensusFixture() {
    const auto dir = fs::temp_directory_path() / "dtnlab_census_fixture";
    fs::create_directories(dir);
    train_path = (dir / "train.data").string();
    test_path = (dir / "test.data").string();

    std::vector<std::vector<std::string>> train;
    for (int i = 0; i < 8; ++i) train.push_back(default_record());
    train[0][field_index("income_50k")] = "50000+.";
    train[0][field_index("age")] = "61";
    train[1][field_index("marital_stat")] = "Married-civilian spouse present";
    train[1][field_index("education")] = "Bachelors degree(BA AB BS)";
    train[2][field_index("education")] = "Some college but no degree";
    train[3][field_index("education")] = "?";
    train[4][field_index("age")] = "18";
    train[5][field_index("income_50k")] = ">50K";  // alternate marker, same meaning
    train[5][field_index("marital_stat")] = "Divorced";
    write_records(train_path, train);

    std::vector<std::vector<std::string>> test;
    for (int i = 0; i < 4; ++i) test.push_back(default_record());
    test[0][field_index("education")] = "Doctorate degree(PhD EdD)";  // unseen in train
    test[1][field_index("income_50k")] = "50000+.";
    write_records(test_path, test);
  }
};

}  // namespace

TEST_CASE("schema invariants are enforced") {
  std::vector<FeatureSpec> dup(2);
  dup[0].name = dup[1].name = "same";
  CHECK_THROWS_WITH_AS(FeatureSchema(dup, {"t"}), doctest::Contains("duplicate feature"),
                       Error);

  std::vector<FeatureSpec> one(1);
  one[0].name = "x";
  CHECK_THROWS_WITH_AS(FeatureSchema(one, {"t", "t"}), doctest::Contains("duplicate task"),
                       Error);
  CHECK_THROWS_WITH_AS(FeatureSchema(one, {"a", "b"}, {{"a", "b"}}),
                       doctest::Contains("earlier task"), Error);
  CHECK_THROWS_AS(FeatureSchema(one, {"a", "b"}, {{"b", "nope"}}), Error);

  std::vector<FeatureSpec> badcat(1);
  badcat[0] = {.name = "c", .kind = FeatureKind::kCategorical, .vocab_size = 0};
  CHECK_THROWS_WITH_AS(FeatureSchema(badcat, {"t"}), doctest::Contains("vocab_size"), Error);
}

TEST_CASE("batch validation rejects out-of-range ids and non-binary labels") {
  const auto d = generate_synthetic(10, 5, testutil::divergence_spec(), 101);
  auto batch = d.train.gather_range(0, 5);
  batch.validate(d.schema);

  auto bad_id = batch;
  bad_id.categorical_ids.at(0, 0) = 10000;
  CHECK_THROWS_WITH_AS(bad_id.validate(d.schema), doctest::Contains("out of range"), Error);

  auto bad_label = batch;
  bad_label.labels.at(0, 0) = 0.5f;
  CHECK_THROWS_WITH_AS(bad_label.validate(d.schema), doctest::Contains("0 or 1"), Error);

  auto bad_rows = batch;
  bad_rows.continuous_values.resize(3, d.schema.n_continuous());
  CHECK_THROWS_WITH_AS(bad_rows.validate(d.schema), doctest::Contains("row counts"), Error);
}

TEST_CASE("census loader produces the 40-feature schema") {
  CensusFixture fx;
  const auto d = load_census_income(fx.train_path, fx.test_path);
  CHECK(d.schema.n_features() == 40);
  CHECK(d.schema.n_continuous() == 8);
  CHECK(d.schema.n_categorical() == 32);
  CHECK(d.schema.tasks() == std::vector<std::string>{"income", "marital"});
  CHECK(d.train.n_rows() == 8);
  CHECK(d.test.n_rows() == 4);
  // The label fields are not predictors.
  CHECK_FALSE(d.schema.try_feature_index("income_50k").has_value());
  CHECK_FALSE(d.schema.try_feature_index("marital_stat").has_value());
  // instance_weight stays, per the 40-feature convention.
  CHECK(d.schema.try_feature_index("instance_weight").has_value());
  d.train.check_consistent(d.schema);
  d.test.check_consistent(d.schema);
}

TEST_CASE("census labels follow the published definitions") {
  CensusFixture fx;
  const auto d = load_census_income(fx.train_path, fx.test_path);
  // Rows 0 and 5 are the >50K earners.
  CHECK(d.train.label_column(0) ==
        std::vector<std::int8_t>{1, 0, 0, 0, 0, 1, 0, 0});
  // marital positive class = never married (rows 1 and 5 are not).
  CHECK(d.train.label_column(1) ==
        std::vector<std::int8_t>{1, 0, 1, 1, 1, 0, 1, 1});

  CensusOptions flipped;
  flipped.marital_positive_is_never_married = false;
  const auto df = load_census_income(fx.train_path, fx.test_path, flipped);
  for (std::size_t r = 0; r < 8; ++r) {
    CHECK(int(df.train.label_column(1)[r]) == 1 - int(d.train.label_column(1)[r]));
  }
}

TEST_CASE("unseen categorical test values map to OOV id 0 without error") {
  CensusFixture fx;
  const auto d = load_census_income(fx.train_path, fx.test_path);
  const std::size_t f = d.schema.feature_index("education");
  const auto& col = d.test.categorical_column(d.schema.column_of(f));
  CHECK(col[0] == 0);   // Doctorate was never seen in train
  CHECK(col[1] != 0);   // default value was
  // Train ids never use the OOV slot.
  const auto& tcol = d.train.categorical_column(d.schema.column_of(f));
  CHECK(std::count(tcol.begin(), tcol.end(), 0) == 0);
  // "?" is an ordinary vocabulary entry, not OOV.
  const auto& vocab = d.schema.features()[f].vocab;
  CHECK(std::find(vocab.begin(), vocab.end(), "?") != vocab.end());
}

TEST_CASE("census continuous features are standardized by train stats") {
  CensusFixture fx;
  const auto d = load_census_income(fx.train_path, fx.test_path);
  const std::size_t f = d.schema.feature_index("age");
  const auto& spec = d.schema.features()[f];
  const auto& col = d.train.continuous_column(d.schema.column_of(f));
  double mean = 0.0;
  for (const float v : col) mean += v;
  mean /= static_cast<double>(col.size());
  CHECK(std::abs(mean) < 1e-6);
  // ages: 61, 18, and six 33s
  CHECK(spec.mean == doctest::Approx((61.0 + 18.0 + 6 * 33.0) / 8.0));
  // test uses train stats, not its own
  const auto& tcol = d.test.continuous_column(d.schema.column_of(f));
  CHECK(tcol[0] == doctest::Approx((33.0 - spec.mean) / spec.stddev));
}

TEST_CASE("census malformed rows are reported with their line number") {
  CensusFixture fx;
  const auto dir = fs::temp_directory_path() / "dtnlab_census_fixture";
  const auto bad_path = (dir / "bad.data").string();
  {
    std::ofstream out(bad_path);
    auto rec = default_record();
    for (std::size_t i = 0; i < rec.size(); ++i) out << (i ? ", " : " ") << rec[i];
    out << "\n";
    out << "too, few, fields\n";
  }
  CHECK_THROWS_WITH_AS(load_census_income(bad_path, fx.test_path),
                       doctest::Contains("row 2"), Error);

  const auto bad_num = (dir / "badnum.data").string();
  {
    std::ofstream out(bad_num);
    auto rec = default_record();
    rec[field_index("age")] = "not-a-number";
    for (std::size_t i = 0; i < rec.size(); ++i) out << (i ? ", " : " ") << rec[i];
    out << "\n";
  }
  CHECK_THROWS_WITH_AS(load_census_income(bad_num, fx.test_path),
                       doctest::Contains("row 1"), Error);
}

TEST_CASE("census label base rates are constants of the files") {
  CensusFixture fx;
  const auto a = load_census_income(fx.train_path, fx.test_path);
  const auto b = load_census_income(fx.train_path, fx.test_path);
  CHECK(a.train.label_column(0) == b.train.label_column(0));
  CHECK(a.train.label_column(1) == b.train.label_column(1));
  CHECK(a.train.fingerprint(a.schema) == b.train.fingerprint(b.schema));
}

// Runs only when the real UCI files are present (DTNLAB_CENSUS_DIR or
// data/census). Asserts the published row counts.
TEST_CASE("census full files have the published row counts") {
  const char* env = std::getenv("DTNLAB_CENSUS_DIR");
  fs::path dir = env ? fs::path(env) : fs::path("data/census");
  const auto train = dir / "census-income.data";
  const auto test = dir / "census-income.test";
  if (!fs::exists(train) || !fs::exists(test)) {
    MESSAGE("skipped: census files not found under ", dir.string());
    return;
  }
  const auto d = load_census_income(train.string(), test.string());
  CHECK(d.train.n_rows() == 199523);
  CHECK(d.test.n_rows() == 99762);
}

TEST_CASE("synthetic generation is bit-identical for the same spec and seed") {
  const auto spec = testutil::divergence_spec();
  const auto a = generate_synthetic(500, 200, spec, 11);
  const auto b = generate_synthetic(500, 200, spec, 11);
  CHECK(a.train.fingerprint(a.schema) == b.train.fingerprint(b.schema));
  CHECK(a.test.fingerprint(a.schema) == b.test.fingerprint(b.schema));
  const auto c = generate_synthetic(500, 200, spec, 12);
  CHECK(a.train.fingerprint(a.schema) != c.train.fingerprint(c.schema));
}

TEST_CASE("synthetic spec without an irrelevant feature is rejected") {
  auto spec = testutil::divergence_spec();
  spec.features.erase(
      std::remove_if(spec.features.begin(), spec.features.end(),
                     [](const SyntheticFeatureSpec& f) {
                       return f.name == "x_noise" || f.name == "c_noise";
                     }),
      spec.features.end());
  CHECK_THROWS_WITH_AS(generate_synthetic(100, 50, spec, 1),
                       doctest::Contains("irrelevant"), Error);
}

TEST_CASE("synthetic ground truth classifies features correctly") {
  const auto d = generate_synthetic(100, 50, testutil::divergence_spec(), 3);
  const auto& gt = d.ground_truth;
  auto is_exclusive = [&](const std::string& f, const std::string& t) {
    return std::find(gt.exclusive_features.begin(), gt.exclusive_features.end(),
                     std::make_pair(f, t)) != gt.exclusive_features.end();
  };
  CHECK(is_exclusive("x1_excl", "task1"));
  CHECK(is_exclusive("c1_excl", "task1"));
  CHECK(is_exclusive("c1a", "task1"));  // relevant only through its pair
  CHECK(is_exclusive("x2_excl", "task2"));
  CHECK_FALSE(is_exclusive("x_shared", "task1"));
  CHECK(std::find(gt.irrelevant_features.begin(), gt.irrelevant_features.end(), "x_noise") !=
        gt.irrelevant_features.end());
  const auto pairs = gt.relevant_categorical_pairs(d.schema);
  CHECK(pairs.size() == 2);
}

TEST_CASE("shuffling an irrelevant feature leaves the label process unchanged") {
  const auto d = generate_synthetic(4000, 100, testutil::divergence_spec(), 5);
  const auto permuted = permute_feature(d.train, d.schema, "x_noise", 99);
  // Ground-truth logits ignore the column entirely.
  for (std::size_t r = 0; r < 50; ++r) {
    CHECK(d.ground_truth.logit(d.schema, d.train, r, 0) ==
          d.ground_truth.logit(d.schema, permuted, r, 0));
  }
  CHECK(d.train.label_column(0) == permuted.label_column(0));
}

TEST_CASE("zeroing a task-exclusive feature raises only its own task's risk") {
  // Monte-Carlo oracle: average cross-entropy of the exact posterior vs the
  // posterior with x1_excl's terms removed.
  const auto d = generate_synthetic(40000, 100, testutil::divergence_spec(), 7);
  auto gt_zeroed = d.ground_truth;
  const std::size_t f = d.schema.feature_index("x1_excl");
  for (auto& lin : gt_zeroed.linear) lin[f] = 0.0;
  for (auto& pc : gt_zeroed.pair_coefs) {
    for (auto it = pc.begin(); it != pc.end();) {
      it = (it->first.first == f || it->first.second == f) ? pc.erase(it) : std::next(it);
    }
  }
  auto risk = [&](const SyntheticGroundTruth& gt, std::size_t task) {
    double total = 0.0;
    for (std::size_t r = 0; r < d.train.n_rows(); ++r) {
      const double z = gt.logit(d.schema, d.train, r, task);
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double y = d.train.label_column(task)[r];
      total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return total / static_cast<double>(d.train.n_rows());
  };
  CHECK(risk(gt_zeroed, 1) == risk(d.ground_truth, 1));          // task2 untouched
  CHECK(risk(gt_zeroed, 0) > risk(d.ground_truth, 0) + 0.02);    // task1 strictly worse
}

TEST_CASE("synthetic label means match the analytic sigmoid means within 3 sigma") {
  const std::size_t n = 100000;
  const auto d = generate_synthetic(n, 10, testutil::divergence_spec(), 23);
  for (std::size_t t = 0; t < d.schema.n_tasks(); ++t) {
    double mean_p = 0.0, var = 0.0, mean_y = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double z = d.ground_truth.logit(d.schema, d.train, r, t);
      const double p = 1.0 / (1.0 + std::exp(-z));
      mean_p += p;
      var += p * (1.0 - p);
      mean_y += d.train.label_column(t)[r];
    }
    mean_p /= n;
    mean_y /= n;
    const double sigma = std::sqrt(var) / n;
    CHECK(std::abs(mean_y - mean_p) < 3.0 * sigma);
  }
}

TEST_CASE("duplicated-task control copies labels bit for bit") {
  const auto d = generate_synthetic(2000, 500, testutil::duplicated_task_spec(), 31);
  CHECK(d.train.label_column(0) == d.train.label_column(1));
  CHECK(d.test.label_column(0) == d.test.label_column(1));
}

TEST_CASE("permute_feature changes exactly one column as a multiset") {
  const auto d = generate_synthetic(300, 50, testutil::divergence_spec(), 13);
  const auto p = permute_feature(d.train, d.schema, "c1_excl", 77);
  const std::size_t fc = d.schema.column_of(d.schema.feature_index("c1_excl"));

  auto sorted = [](std::vector<std::int32_t> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(p.categorical_column(fc) != d.train.categorical_column(fc));
  CHECK(sorted(p.categorical_column(fc)) == sorted(d.train.categorical_column(fc)));

  // every other column untouched
  for (std::size_t c = 0; c < d.schema.n_categorical(); ++c) {
    if (c != fc) CHECK(p.categorical_column(c) == d.train.categorical_column(c));
  }
  for (std::size_t c = 0; c < d.schema.n_continuous(); ++c) {
    CHECK(p.continuous_column(c) == d.train.continuous_column(c));
  }
  for (std::size_t t = 0; t < d.schema.n_tasks(); ++t) {
    CHECK(p.label_column(t) == d.train.label_column(t));
  }

  CHECK(permute_feature(d.train, d.schema, "c1_excl", 77).categorical_column(fc) ==
        p.categorical_column(fc));
  CHECK_THROWS_AS(permute_feature(d.train, d.schema, "no_such_feature", 1), Error);
}

TEST_CASE("permuting a single-row dataset is the identity") {
  const auto d = generate_synthetic(1, 1, testutil::divergence_spec(), 17);
  const auto p = permute_feature(d.train, d.schema, "x1_excl", 5);
  CHECK(p.continuous_column(d.schema.column_of(d.schema.feature_index("x1_excl"))) ==
        d.train.continuous_column(d.schema.column_of(d.schema.feature_index("x1_excl"))));
}

TEST_CASE("applying the inverse permutation restores the column bit-exactly") {
  const auto d = generate_synthetic(400, 10, testutil::divergence_spec(), 19);
  const std::size_t fc = d.schema.column_of(d.schema.feature_index("x1_excl"));
  const auto p = permute_feature(d.train, d.schema, "x1_excl", 123);

  // Learn the row permutation by permuting an iota column with the same seed.
  auto probe = d.train;
  auto& col = probe.continuous_column(fc);
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = static_cast<float>(i);
  const auto probe_p = permute_feature(probe, d.schema, "x1_excl", 123);
  const auto& sigma = probe_p.continuous_column(fc);

  std::vector<float> restored(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) {
    restored[static_cast<std::size_t>(sigma[i])] = p.continuous_column(fc)[i];
  }
  CHECK(restored == d.train.continuous_column(fc));
}

TEST_CASE("batch iterator covers the dataset with the documented sizes") {
  const auto d = generate_synthetic(10, 5, testutil::divergence_spec(), 29);
  BatchIterator it(d.train, 4, false, 0);
  CHECK(it.n_batches() == 3);
  ExampleBatch b;
  std::vector<std::size_t> sizes;
  while (it.next(b)) {
    b.validate(d.schema);
    sizes.push_back(b.rows());
  }
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
}

TEST_CASE("unshuffled batches concatenate back to the dataset") {
  const auto d = generate_synthetic(23, 5, testutil::divergence_spec(), 37);
  BatchIterator it(d.train, 7, false, 0);
  ExampleBatch b;
  std::size_t row = 0;
  const std::size_t fc = d.schema.column_of(d.schema.feature_index("x1_excl"));
  while (it.next(b)) {
    for (std::size_t i = 0; i < b.rows(); ++i, ++row) {
      CHECK(b.continuous_values.at(i, fc) == d.train.continuous_column(fc)[row]);
      CHECK(b.labels.at(i, 0) == static_cast<float>(d.train.label_column(0)[row]));
    }
  }
  CHECK(row == d.train.n_rows());
}

TEST_CASE("shuffled batch order is deterministic in the seed") {
  const auto d = generate_synthetic(64, 5, testutil::divergence_spec(), 41);
  auto order_of = [&](std::uint64_t seed) {
    BatchIterator it(d.train, 16, true, seed);
    std::vector<float> first_col;
    ExampleBatch b;
    while (it.next(b)) {
      for (std::size_t i = 0; i < b.rows(); ++i) first_col.push_back(b.continuous_values.at(i, 0));
    }
    return first_col;
  };
  CHECK(order_of(5) == order_of(5));
  CHECK(order_of(5) != order_of(6));
}

TEST_CASE("batch iterator over an empty dataset yields nothing") {
  const auto d = generate_synthetic(5, 5, testutil::divergence_spec(), 43);
  Dataset empty(d.schema);
  BatchIterator it(empty, 4, true, 1);
  ExampleBatch b;
  CHECK_FALSE(it.next(b));
  CHECK(it.n_batches() == 0);
}

TEST_CASE("columnar dump writes one record per row with a header") {
  const auto d = generate_synthetic(6, 2, testutil::divergence_spec(), 47);
  const auto path = (fs::temp_directory_path() / "dtnlab_columnar.csv").string();
  write_columnar(d.train, d.schema, path);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  std::getline(in, line);
  CHECK(line.find("x1_excl") == 0);
  CHECK(line.find("label:task1") != std::string::npos);
  while (std::getline(in, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == 6);
}
