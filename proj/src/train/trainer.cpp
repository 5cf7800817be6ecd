// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include "dtnlab/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "dtnlab/core/error.hpp"
#include "dtnlab/eval/feature_importance.hpp"

namespace dtnlab::train {

void TrainConfig::validate(std::size_t n_tasks) const {
  // Zero is allowed so a no-op training pass stays expressible.
  require(learning_rate >= 0.0, "train", "learning_rate must not be negative");
  require(batch_size >= 1, "train", "batch_size must be >= 1");
  require(max_epochs >= 1, "train", "max_epochs must be >= 1");
  if (!task_weights.empty()) {
    require(task_weights.size() == n_tasks, "train", "task_weights size mismatch");
    double total = 0.0;
    for (const double w : task_weights) {
      require(w >= 0.0, "train", "task weights must be non-negative");
      total += w;
    }
    require(total > 0.0, "train", "at least one task weight must be positive");
  }
}

template <typename T>
LossResult compute_loss(const Matrix<T>& predictions, const Matrix<float>& labels,
                        const std::vector<double>& weights) {
  require(predictions.rows() == labels.rows() && predictions.cols() == labels.cols(),
          "compute_loss", "predictions/labels shape mismatch");
  require(predictions.rows() > 0, "compute_loss", "empty batch");
  const std::size_t n_tasks = predictions.cols();
  require(weights.empty() || weights.size() == n_tasks, "compute_loss",
          "weights size mismatch");
  constexpr double kEps = 1e-7;
  LossResult out;
  out.per_task.assign(n_tasks, 0.0);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    double sum = 0.0;
    for (std::size_t r = 0; r < predictions.rows(); ++r) {
      const double p =
          std::clamp(static_cast<double>(predictions.at(r, t)), kEps, 1.0 - kEps);
      const double y = labels.at(r, t);
      sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    out.per_task[t] = sum / static_cast<double>(predictions.rows());
    out.total += (weights.empty() ? 1.0 : weights[t]) * out.per_task[t];
  }
  return out;
}

template LossResult compute_loss<float>(const Matrix<float>&, const Matrix<float>&,
                                        const std::vector<double>&);
template LossResult compute_loss<double>(const Matrix<double>&, const Matrix<float>&,
                                         const std::vector<double>&);

template <typename T>
void Adam<T>::step(fim::ParamStore<T>& params) {
  if (m_.empty()) {
    m_.resize(params.n_blocks());
    v_.resize(params.n_blocks());
    for (std::size_t h = 0; h < params.n_blocks(); ++h) {
      m_[h].assign(params.block(h).size(), T(0));
      v_[h].assign(params.block(h).size(), T(0));
    }
  }
  ++t_;
  const T bc1 = T(1) - static_cast<T>(std::pow(beta1_, static_cast<double>(t_)));
  const T bc2 = T(1) - static_cast<T>(std::pow(beta2_, static_cast<double>(t_)));
  for (std::size_t h = 0; h < params.n_blocks(); ++h) {
    auto& b = params.block(h);
    kernels::adam_step(b.value.data(), b.grad.data(), m_[h].data(), v_[h].data(), b.size(),
                       static_cast<T>(lr_), static_cast<T>(beta1_), static_cast<T>(beta2_),
                       static_cast<T>(epsilon_), bc1, bc2);
  }
}

template class Adam<float>;
template class Adam<double>;

namespace {

template <typename T>
void clip_gradients(fim::ParamStore<T>& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t h = 0; h < params.n_blocks(); ++h) {
    for (const T g : params.block(h).grad) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const T scale = static_cast<T>(max_norm / norm);
  for (std::size_t h = 0; h < params.n_blocks(); ++h) {
    auto& g = params.block(h).grad;
    kernels::scale(scale, g.data(), g.size());
  }
}

template <typename T>
std::vector<std::vector<T>> snapshot(const fim::ParamStore<T>& params) {
  std::vector<std::vector<T>> values(params.n_blocks());
  for (std::size_t h = 0; h < params.n_blocks(); ++h) values[h] = params.block(h).value;
  return values;
}

template <typename T>
void restore(fim::ParamStore<T>& params, const std::vector<std::vector<T>>& values) {
  for (std::size_t h = 0; h < params.n_blocks(); ++h) params.block(h).value = values[h];
}

}  // namespace

template <typename T>
TrainResult train(mtl::ModelGraph<T>& model, const data::Dataset& train_data,
                  const data::Dataset& eval_data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate(model.n_tasks());
  train_data.check_consistent(model.schema());
  eval_data.check_consistent(model.schema());
  require(train_data.n_rows() > 0, "train", "empty training dataset");

  const std::size_t n_tasks = model.n_tasks();
  const std::vector<double> weights =
      config.task_weights.empty() ? std::vector<double>(n_tasks, 1.0) : config.task_weights;

  Adam<T> adam(config.learning_rate, config.beta1, config.beta2, config.epsilon);
  TrainResult result;
  auto best_values = snapshot(model.params());
  double best_auc = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    data::BatchIterator it(train_data, config.batch_size, /*shuffle=*/true,
                           mix_seed(config.seed, epoch));
    data::ExampleBatch batch;
    mtl::ModelCache<T> cache;
    Matrix<T> preds;
    std::vector<double> loss_sum(n_tasks, 0.0);
    std::size_t seen = 0;

    while (it.next(batch)) {
      LossResult loss;
      try {
        model.forward(batch, preds, &cache);
        loss = compute_loss(preds, batch.labels, weights);
      } catch (const Error& e) {
        restore(model.params(), best_values);
        result.aborted = true;
        result.abort_reason = std::string("aborted at epoch ") + std::to_string(epoch) + " (" +
                              e.what() + "); restored last good checkpoint";
        return result;
      }
      if (!std::isfinite(loss.total)) {
        restore(model.params(), best_values);
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) +
                              "; restored last good checkpoint";
        return result;
      }
      for (std::size_t t = 0; t < n_tasks; ++t) {
        loss_sum[t] += loss.per_task[t] * static_cast<double>(batch.rows());
      }
      seen += batch.rows();

      // d(loss)/d(logit) of weighted mean cross-entropy, sigmoid folded in.
      Matrix<T> dlogits(batch.rows(), n_tasks);
      const T invb = T(1) / static_cast<T>(batch.rows());
      for (std::size_t r = 0; r < batch.rows(); ++r) {
        for (std::size_t t = 0; t < n_tasks; ++t) {
          dlogits.at(r, t) = static_cast<T>(weights[t]) *
                             (cache.preds.at(r, t) - static_cast<T>(batch.labels.at(r, t))) *
                             invb;
        }
      }
      model.params().zero_grad();
      model.backward(batch, cache, dlogits);
      if (config.grad_clip.has_value()) clip_gradients(model.params(), *config.grad_clip);
      adam.step(model.params());
      if (!model.params().values_finite()) {
        restore(model.params(), best_values);
        result.aborted = true;
        result.abort_reason = "non-finite parameters after step at epoch " +
                              std::to_string(epoch) + "; restored last good checkpoint";
        return result;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss.resize(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t) {
      stats.train_loss[t] = loss_sum[t] / static_cast<double>(seen);
      stats.total_train_loss += weights[t] * stats.train_loss[t];
    }
    stats.eval_auc = eval::task_aucs(model, eval_data, config.batch_size);
    for (const double a : stats.eval_auc) stats.mean_eval_auc += a;
    stats.mean_eval_auc /= static_cast<double>(n_tasks);
    stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (stats.mean_eval_auc > best_auc) {
      best_auc = stats.mean_eval_auc;
      best_values = snapshot(model.params());
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  restore(model.params(), best_values);
  return result;
}

template TrainResult train<float>(mtl::ModelGraph<float>&, const data::Dataset&,
                                  const data::Dataset&, const TrainConfig&,
                                  const EpochCallback&);
template TrainResult train<double>(mtl::ModelGraph<double>&, const data::Dataset&,
                                   const data::Dataset&, const TrainConfig&,
                                   const EpochCallback&);

GradCheckResult gradient_check(mtl::ModelGraph<double>& model, const data::ExampleBatch& batch,
                               double eps, std::size_t min_coords, CheckLoss loss,
                               std::uint64_t seed) {
  const std::size_t n = model.params().total_parameters();
  require(n > 0, "gradient_check", "model has no parameters");
  require(n <= 10000, "gradient_check",
          "gradient checks are limited to models with <= 10^4 parameters");
  require(eps > 0.0, "gradient_check", "eps must be positive");

  const std::size_t n_tasks = model.n_tasks();
  const auto loss_of = [&](mtl::ModelCache<double>& cache) {
    Matrix<double> preds;
    model.forward(batch, preds, &cache);
    if (loss == CheckLoss::kCrossEntropy) {
      return compute_loss(preds, batch.labels, {}).total;
    }
    double total = 0.0;
    for (std::size_t t = 0; t < n_tasks; ++t) {
      double s = 0.0;
      for (std::size_t r = 0; r < batch.rows(); ++r) {
        const double d = cache.logits.at(r, t) - static_cast<double>(batch.labels.at(r, t));
        s += d * d;
      }
      total += s / static_cast<double>(batch.rows());
    }
    return total;
  };

  // Analytic gradient once.
  {
    mtl::ModelCache<double> cache;
    const double base = loss_of(cache);
    require(std::isfinite(base), "gradient_check", "non-finite loss");
    Matrix<double> dlogits(batch.rows(), n_tasks);
    const double invb = 1.0 / static_cast<double>(batch.rows());
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      for (std::size_t t = 0; t < n_tasks; ++t) {
        if (loss == CheckLoss::kCrossEntropy) {
          dlogits.at(r, t) =
              (cache.preds.at(r, t) - static_cast<double>(batch.labels.at(r, t))) * invb;
        } else {
          const double p = cache.preds.at(r, t);
          const double d = cache.logits.at(r, t) - static_cast<double>(batch.labels.at(r, t));
          (void)p;
          dlogits.at(r, t) = 2.0 * d * invb;
        }
      }
    }
    model.params().zero_grad();
    model.backward(batch, cache, dlogits);
  }

  Rng rng(mix_seed(seed, 0x67636b31ULL));
  std::vector<std::uint32_t> coords;
  if (n <= min_coords) {
    coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = static_cast<std::uint32_t>(i);
  } else {
    const auto perm = rng.permutation(n);
    // Oversample: kink-adjacent coordinates get skipped below.
    const std::size_t want = std::min(n, min_coords * 4);
    coords.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(want));
  }

  GradCheckResult out;
  auto& params = model.params();
  for (const auto ci : coords) {
    if (out.checked >= min_coords && n > min_coords) break;
    const double orig = params.get_flat(ci);

    mtl::ModelCache<double> cache_up, cache_down;
    params.set_flat(ci, orig + eps);
    const double up = loss_of(cache_up);
    params.set_flat(ci, orig - eps);
    const double down = loss_of(cache_down);
    params.set_flat(ci, orig);
    require(std::isfinite(up) && std::isfinite(down), "gradient_check", "non-finite loss");

    std::vector<std::uint8_t> mask_up, mask_down;
    model.collect_relu_masks(cache_up, mask_up);
    model.collect_relu_masks(cache_down, mask_down);
    if (mask_up != mask_down) {
      ++out.skipped_kinks;
      continue;
    }

    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = params.grad_flat(ci);
    const double rel =
        std::abs(numeric - analytic) / std::max(std::abs(numeric) + std::abs(analytic), 1e-8);
    out.max_rel_error = std::max(out.max_rel_error, rel);
    ++out.checked;
  }
  return out;
}

}  // namespace dtnlab::train
