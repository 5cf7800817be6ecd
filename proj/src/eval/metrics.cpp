// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include "dtnlab/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dtnlab/core/error.hpp"

namespace dtnlab::eval {

namespace {

// Average ranks (1-based) under ties, for the values picked out by `idx`.
template <typename Get>
std::vector<double> average_ranks(std::size_t n, const std::vector<std::size_t>& order, Get get) {
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && get(order[j + 1]) == get(order[i])) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double auc(std::span<const float> scores, std::span<const float> labels) {
  require(scores.size() == labels.size(), "auc", "scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (const float y : labels) {
    require(y == 0.0f || y == 1.0f, "auc", "labels must be 0 or 1");
    n_pos += y == 1.0f;
  }
  const std::size_t n_neg = n - n_pos;
  require(n_pos > 0 && n_neg > 0, "auc",
          "labels contain a single class (caller must guard this)");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const auto ranks = average_ranks(n, order, [&](std::size_t i) { return scores[i]; });

  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == 1.0f) pos_rank_sum += ranks[i];
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double logloss(std::span<const float> scores, std::span<const float> labels) {
  require(scores.size() == labels.size(), "logloss", "scores/labels length mismatch");
  require(!scores.empty(), "logloss", "empty input");
  constexpr double kEps = 1e-7;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = std::clamp(static_cast<double>(scores[i]), kEps, 1.0 - kEps);
    const double y = labels[i];
    total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return total / static_cast<double>(scores.size());
}

double rela_impr(double auc_model, double auc_base) {
  require(auc_base > 0.5, "rela_impr",
          "baseline AUC must exceed the 0.5 random-strategy constant");
  return ((auc_model - 0.5) / (auc_base - 0.5) - 1.0) * 100.0;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "spearman", "length mismatch");
  const std::size_t n = x.size();
  require(n >= 2, "spearman", "need at least two points");

  auto rank_of = [n](std::span<const double> v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return average_ranks(n, order, [&](std::size_t i) { return v[i]; });
  };
  const auto rx = rank_of(x);
  const auto ry = rank_of(y);

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, "spearman", "zero rank variance");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dtnlab::eval
