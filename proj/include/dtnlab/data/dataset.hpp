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

#include <cstdint>
#include <string>
#include <vector>

#include "dtnlab/core/matrix.hpp"
#include "dtnlab/data/schema.hpp"

namespace dtnlab::data {

// One batch of encoded examples. Row counts of all three blocks agree.
struct ExampleBatch {
  Matrix<std::int32_t> categorical_ids;  // [batch x n_categorical]
  Matrix<float> continuous_values;       // [batch x n_continuous]
  Matrix<float> labels;                  // [batch x n_tasks], values in {0, 1}

  std::size_t rows() const { return labels.rows(); }
  void validate(const FeatureSchema& schema) const;
};

// Immutable-after-construction columnar dataset, held fully in memory.
// Columns follow schema order within each kind.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(const FeatureSchema& schema, std::size_t reserve_rows = 0);

  std::size_t n_rows() const { return n_rows_; }

  std::vector<std::int32_t>& categorical_column(std::size_t c) { return categorical_[c]; }
  const std::vector<std::int32_t>& categorical_column(std::size_t c) const {
    return categorical_[c];
  }
  std::vector<float>& continuous_column(std::size_t c) { return continuous_[c]; }
  const std::vector<float>& continuous_column(std::size_t c) const { return continuous_[c]; }
  std::vector<std::int8_t>& label_column(std::size_t t) { return labels_[t]; }
  const std::vector<std::int8_t>& label_column(std::size_t t) const { return labels_[t]; }

  void set_row_count(std::size_t n) { n_rows_ = n; }

  // Gathers the given rows into a dense batch.
  ExampleBatch gather(const std::vector<std::uint32_t>& rows) const;
  ExampleBatch gather_range(std::size_t begin, std::size_t end) const;

  // Content hash covering every column and label; used to refuse metric
  // comparisons across different datasets.
  std::string fingerprint(const FeatureSchema& schema) const;

  void check_consistent(const FeatureSchema& schema) const;

 private:
  std::size_t n_rows_ = 0;
  std::vector<std::vector<std::int32_t>> categorical_;
  std::vector<std::vector<float>> continuous_;
  std::vector<std::vector<std::int8_t>> labels_;
};

// Copy of `dataset` with exactly one feature column shuffled. The row
// permutation is a function of (seed, n_rows) only, drawn independently of
// the column's contents, so the same seed gives the same permutation for
// every feature.
Dataset permute_feature(const Dataset& dataset, const FeatureSchema& schema,
                        const std::string& feature_name, std::uint64_t seed);

// Epoch iterator: covers every example exactly once, last batch may be
// short. Shuffle order is a deterministic function of the seed.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed);

  // Returns false when the epoch is exhausted.
  bool next(ExampleBatch& out);
  void reset();
  std::size_t n_batches() const;

 private:
  const Dataset* dataset_;
  std::size_t batch_size_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
};

// Columnar text dump for inspection: header row of feature names plus
// "label:<task>" columns, one record per line.
void write_columnar(const Dataset& dataset, const FeatureSchema& schema, const std::string& path);

}  // namespace dtnlab::data
