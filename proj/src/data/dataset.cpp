// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include "dtnlab/data/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "dtnlab/core/error.hpp"
#include "dtnlab/core/rng.hpp"

namespace dtnlab::data {

void ExampleBatch::validate(const FeatureSchema& schema) const {
  const std::size_t b = labels.rows();
  require(categorical_ids.rows() == b && continuous_values.rows() == b, "batch",
          "row counts disagree");
  require(categorical_ids.cols() == schema.n_categorical(), "batch",
          "categorical width mismatch");
  require(continuous_values.cols() == schema.n_continuous(), "batch", "continuous width mismatch");
  require(labels.cols() == schema.n_tasks(), "batch", "label width mismatch");
  std::vector<std::int64_t> vocab;
  for (const auto& f : schema.features()) {
    if (f.is_categorical()) vocab.push_back(static_cast<std::int64_t>(f.vocab_size));
  }
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t c = 0; c < categorical_ids.cols(); ++c) {
      const auto id = categorical_ids.at(r, c);
      require(id >= 0 && id < vocab[c], "batch", "categorical id out of range");
    }
    for (std::size_t t = 0; t < labels.cols(); ++t) {
      const float y = labels.at(r, t);
      require(y == 0.0f || y == 1.0f, "batch", "labels must be 0 or 1");
    }
  }
}

Dataset::Dataset(const FeatureSchema& schema, std::size_t reserve_rows) {
  categorical_.resize(schema.n_categorical());
  continuous_.resize(schema.n_continuous());
  labels_.resize(schema.n_tasks());
  if (reserve_rows > 0) {
    for (auto& c : categorical_) c.reserve(reserve_rows);
    for (auto& c : continuous_) c.reserve(reserve_rows);
    for (auto& c : labels_) c.reserve(reserve_rows);
  }
}

ExampleBatch Dataset::gather(const std::vector<std::uint32_t>& rows) const {
  ExampleBatch b;
  b.categorical_ids.resize(rows.size(), categorical_.size());
  b.continuous_values.resize(rows.size(), continuous_.size());
  b.labels.resize(rows.size(), labels_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    for (std::size_t c = 0; c < categorical_.size(); ++c)
      b.categorical_ids.at(i, c) = categorical_[c][r];
    for (std::size_t c = 0; c < continuous_.size(); ++c)
      b.continuous_values.at(i, c) = continuous_[c][r];
    for (std::size_t t = 0; t < labels_.size(); ++t)
      b.labels.at(i, t) = static_cast<float>(labels_[t][r]);
  }
  return b;
}

ExampleBatch Dataset::gather_range(std::size_t begin, std::size_t end) const {
  std::vector<std::uint32_t> rows(end - begin);
  for (std::size_t i = begin; i < end; ++i) rows[i - begin] = static_cast<std::uint32_t>(i);
  return gather(rows);
}

void Dataset::check_consistent(const FeatureSchema& schema) const {
  require(categorical_.size() == schema.n_categorical() &&
              continuous_.size() == schema.n_continuous() && labels_.size() == schema.n_tasks(),
          "dataset", "column layout does not match schema");
  for (const auto& c : categorical_)
    require(c.size() == n_rows_, "dataset", "categorical column length mismatch");
  for (const auto& c : continuous_)
    require(c.size() == n_rows_, "dataset", "continuous column length mismatch");
  for (const auto& c : labels_)
    require(c.size() == n_rows_, "dataset", "label column length mismatch");
}

namespace {

// FNV-1a 64.
struct Hasher {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void feed(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void feed_vec(const std::vector<T>& v) {
    feed(v.data(), v.size() * sizeof(T));
  }
};

}  // namespace

std::string Dataset::fingerprint(const FeatureSchema& schema) const {
  Hasher hash;
  const std::string sj = schema.to_json();
  hash.feed(sj.data(), sj.size());
  hash.feed(&n_rows_, sizeof(n_rows_));
  for (const auto& c : categorical_) hash.feed_vec(c);
  for (const auto& c : continuous_) hash.feed_vec(c);
  for (const auto& c : labels_) hash.feed_vec(c);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash.h));
  return buf;
}

Dataset permute_feature(const Dataset& dataset, const FeatureSchema& schema,
                        const std::string& feature_name, std::uint64_t seed) {
  const std::size_t fi = schema.feature_index(feature_name);
  Dataset out = dataset;
  Rng rng(mix_seed(seed, 0x7065726dULL));  // "perm" stream
  const auto perm = rng.permutation(dataset.n_rows());
  const std::size_t col = schema.column_of(fi);
  if (schema.features()[fi].is_categorical()) {
    const auto& src = dataset.categorical_column(col);
    auto& dst = out.categorical_column(col);
    for (std::size_t i = 0; i < perm.size(); ++i) dst[i] = src[perm[i]];
  } else {
    const auto& src = dataset.continuous_column(col);
    auto& dst = out.continuous_column(col);
    for (std::size_t i = 0; i < perm.size(); ++i) dst[i] = src[perm[i]];
  }
  return out;
}

BatchIterator::BatchIterator(const Dataset& dataset, std::size_t batch_size, bool shuffle,
                             std::uint64_t seed)
    : dataset_(&dataset), batch_size_(batch_size) {
  require(batch_size_ >= 1, "batch_iterator", "batch_size must be >= 1");
  order_.resize(dataset.n_rows());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
  if (shuffle) {
    Rng rng(mix_seed(seed, 0x73687566ULL));  // "shuf" stream
    rng.shuffle(order_);
  }
}

bool BatchIterator::next(ExampleBatch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
  std::vector<std::uint32_t> rows(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                  order_.begin() + static_cast<std::ptrdiff_t>(end));
  out = dataset_->gather(rows);
  cursor_ = end;
  return true;
}

void BatchIterator::reset() { cursor_ = 0; }

std::size_t BatchIterator::n_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

void write_columnar(const Dataset& dataset, const FeatureSchema& schema, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_columnar", "cannot open '" + path + "' for writing");
  bool first = true;
  for (const auto& f : schema.features()) {
    out << (first ? "" : ",") << f.name;
    first = false;
  }
  for (const auto& t : schema.tasks()) out << ",label:" << t;
  out << "\n";
  char buf[64];
  for (std::size_t r = 0; r < dataset.n_rows(); ++r) {
    first = true;
    for (std::size_t i = 0; i < schema.n_features(); ++i) {
      const auto& f = schema.features()[i];
      if (!first) out << ',';
      first = false;
      if (f.is_categorical()) {
        out << dataset.categorical_column(schema.column_of(i))[r];
      } else {
        std::snprintf(buf, sizeof(buf), "%.9g",
                      static_cast<double>(dataset.continuous_column(schema.column_of(i))[r]));
        out << buf;
      }
    }
    for (std::size_t t = 0; t < schema.n_tasks(); ++t)
      out << ',' << static_cast<int>(dataset.label_column(t)[r]);
    out << "\n";
  }
  require(out.good(), "write_columnar", "short write to '" + path + "'");
}

}  // namespace dtnlab::data
