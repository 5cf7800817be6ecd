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
#include <span>
#include <vector>

namespace dtnlab::eval {

// Mann-Whitney AUC with average-rank tie handling:
// P(score_pos > score_neg) + P(tie)/2. Throws if labels are single-class.
double auc(std::span<const float> scores, std::span<const float> labels);

// Mean binary cross-entropy; scores clipped to [1e-7, 1 - 1e-7].
double logloss(std::span<const float> scores, std::span<const float> labels);

// Relative AUC improvement over a baseline with the 0.5 random-strategy
// constant removed, in percent. Throws when auc_base <= 0.5.
double rela_impr(double auc_model, double auc_base);

// Spearman rank correlation (average-rank ties). Throws on length mismatch,
// n < 2 or zero variance.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace dtnlab::eval
