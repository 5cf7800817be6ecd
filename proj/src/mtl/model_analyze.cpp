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

#include "dtnlab/core/error.hpp"
#include "dtnlab/mtl/model.hpp"

namespace dtnlab::mtl {

template <typename T>
GateWeightReport ModelGraph<T>::extract_gate_weights(const data::Dataset& dataset,
                                                     std::size_t batch_size) const {
  require(!gates_.empty(), "gate_weights",
          std::string(arch_kind_name(config_.kind)) + " has no gates");
  require(dataset.n_rows() > 0, "gate_weights", "empty dataset");

  std::vector<std::vector<double>> sums(gates_.size());
  for (std::size_t g = 0; g < gates_.size(); ++g) {
    sums[g].assign(gates_[g].candidates.size(), 0.0);
  }
  data::BatchIterator it(dataset, batch_size, false, 0);
  data::ExampleBatch batch;
  ModelCache<T> cache;
  Matrix<T> preds;
  while (it.next(batch)) {
    forward(batch, preds, &cache);
    for (std::size_t g = 0; g < gates_.size(); ++g) {
      const auto& w = cache.gates[g].weights;
      for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
          sums[g][j] += static_cast<double>(w.at(r, j));
        }
      }
    }
  }

  GateWeightReport report;
  for (std::size_t t = 0; t < schema_.n_tasks(); ++t) {
    for (const int gi : {own_gate_[t], other_gate_[t]}) {
      if (gi < 0) continue;
      const auto& gate = gates_[static_cast<std::size_t>(gi)];
      GateWeightReport::Gate out;
      out.task = schema_.tasks()[t];
      out.role = gi == own_gate_[t] ? (other_gate_[t] >= 0 ? "own" : "main") : "other";
      for (std::size_t j = 0; j < gate.candidates.size(); ++j) {
        const auto& cand = gate.candidates[j];
        GateWeightReport::Candidate c;
        c.owner = cand.set.is_shared() ? "shared"
                                       : schema_.tasks()[static_cast<std::size_t>(cand.set.task)];
        c.kind = fim::fim_kind_name(set_modules(cand.set.task)[cand.index]->spec().kind);
        c.index = cand.index;
        c.scaled_by_pred = cand.scaled_by_pred >= 0;
        c.mean_weight = sums[static_cast<std::size_t>(gi)][j] /
                        static_cast<double>(dataset.n_rows());
        out.candidates.push_back(std::move(c));
      }
      report.gates.push_back(std::move(out));
    }
  }
  return report;
}

template <typename T>
ModelGraph<T> ModelGraph<T>::trimmed(const TrimRule& rule) const {
  auto keep_of = [&](int set, std::size_t n) {
    auto it = rule.keep.find(set);
    if (it == rule.keep.end()) return std::vector<bool>(n, true);
    require(it->second.size() == n, "trim",
            "keep list size mismatch for set " + std::to_string(set));
    return it->second;
  };

  ModelConfig nc = config_;
  const auto shared_keep = keep_of(-1, shared_set_.size());
  nc.shared_fims.clear();
  for (std::size_t j = 0; j < shared_set_.size(); ++j) {
    if (shared_keep[j]) nc.shared_fims.push_back(config_.shared_fims[j]);
  }
  require(!nc.shared_fims.empty(), "trim", "rule empties the shared module set");

  std::vector<std::vector<bool>> task_keep(task_sets_.size());
  for (std::size_t t = 0; t < task_sets_.size(); ++t) {
    task_keep[t] = keep_of(static_cast<int>(t), task_sets_[t].size());
    if (task_sets_[t].empty()) continue;
    const auto& name = schema_.tasks()[t];
    auto& list = nc.task_fims.at(name);
    list.clear();
    for (std::size_t j = 0; j < task_sets_[t].size(); ++j) {
      if (task_keep[t][j]) list.push_back(config_.task_fims.at(name)[j]);
    }
    require(!list.empty(), "trim", "rule empties the module set of task '" + name + "'");
  }

  ModelGraph<T> out = build(nc, schema_);

  // Copy surviving parameters. Embeddings, towers, the sfm stack and gate
  // names are unchanged; modules map pairwise in kept order; gates keep the
  // surviving logit rows.
  auto copy_by_name = [&](const std::string& prefix) {
    for (std::size_t h = 0; h < out.params_.n_blocks(); ++h) {
      auto& dst = out.params_.block(h);
      if (dst.name.rfind(prefix, 0) != 0) continue;
      for (std::size_t g = 0; g < params_.n_blocks(); ++g) {
        const auto& src = params_.block(g);
        if (src.name == dst.name) {
          require(src.shape == dst.shape, "trim", "shape mismatch at " + dst.name);
          dst.value = src.value;
          break;
        }
      }
    }
  };
  copy_by_name("embed.");
  copy_by_name("tower.");
  copy_by_name("sfm_stack.");

  auto copy_module = [&](const fim::FimModule<T>& src_m, const fim::FimModule<T>& dst_m) {
    const auto& sb = src_m.blocks();
    const auto& db = dst_m.blocks();
    require(sb.size() == db.size(), "trim", "module block count mismatch");
    for (std::size_t i = 0; i < sb.size(); ++i) {
      require(params_.block(sb[i]).shape == out.params_.block(db[i]).shape, "trim",
              "module block shape mismatch");
      out.params_.block(db[i]).value = params_.block(sb[i]).value;
    }
  };
  {
    std::size_t nj = 0;
    for (std::size_t j = 0; j < shared_set_.size(); ++j) {
      if (shared_keep[j]) copy_module(*shared_set_[j], *out.shared_set_[nj++]);
    }
  }
  for (std::size_t t = 0; t < task_sets_.size(); ++t) {
    std::size_t nj = 0;
    for (std::size_t j = 0; j < task_sets_[t].size(); ++j) {
      if (task_keep[t][j]) copy_module(*task_sets_[t][j], *out.task_sets_[t][nj++]);
    }
  }

  require(gates_.size() == out.gates_.size(), "trim", "gate count changed");
  for (std::size_t g = 0; g < gates_.size(); ++g) {
    const auto& old_gate = gates_[g];
    auto& new_gate = out.gates_[g];
    const auto& old_w = params_.block(old_gate.lin.w);
    auto& new_w = out.params_.block(new_gate.lin.w);
    const auto& old_b = params_.block(old_gate.lin.b);
    auto& new_b = out.params_.block(new_gate.lin.b);
    const std::size_t sel = old_gate.lin.in;
    std::size_t nj = 0;
    for (std::size_t j = 0; j < old_gate.candidates.size(); ++j) {
      const auto& cand = old_gate.candidates[j];
      const bool kept = cand.set.is_shared()
                            ? shared_keep[cand.index]
                            : task_keep[static_cast<std::size_t>(cand.set.task)][cand.index];
      if (!kept) continue;
      for (std::size_t s = 0; s < sel; ++s) {
        new_w.value[s * new_gate.lin.out + nj] = old_w.value[s * old_gate.lin.out + j];
      }
      new_b.value[nj] = old_b.value[j];
      ++nj;
    }
    require(nj == new_gate.candidates.size(), "trim", "gate candidate mapping mismatch");
  }

  return out;
}

template <typename T>
ReprExport<T> ModelGraph<T>::export_representations(const data::Dataset& dataset,
                                                    const ReprSelector& selector,
                                                    std::size_t sample_count,
                                                    std::uint64_t seed) const {
  int set = -1;
  if (selector.owner != "shared") set = static_cast<int>(schema_.task_index(selector.owner));
  const auto& modules = set_modules(set);
  std::size_t index = modules.size();
  if (selector.index.has_value()) {
    index = *selector.index;
  } else if (selector.kind.has_value()) {
    for (std::size_t j = 0; j < modules.size(); ++j) {
      if (modules[j]->spec().kind == *selector.kind) {
        index = j;
        break;
      }
    }
  }
  require(index < modules.size(), "export_repr",
          "selector (" + selector.owner + ", " +
              (selector.index ? std::to_string(*selector.index)
                              : (selector.kind ? fim::fim_kind_name(*selector.kind) : "?")) +
              ") not found");

  std::vector<std::uint32_t> rows;
  if (sample_count >= dataset.n_rows()) {
    rows.resize(dataset.n_rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::uint32_t>(i);
  } else {
    Rng rng(mix_seed(seed, 0x72657072ULL));  // "repr"
    const auto perm = rng.permutation(dataset.n_rows());
    rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(sample_count));
  }

  ReprExport<T> out;
  out.rows = rows;
  out.values.resize(rows.size(), config_.output_dim);
  const std::string label =
      selector.owner + "/" + fim::fim_kind_name(modules[index]->spec().kind);
  out.labels.assign(rows.size(), label);

  const std::size_t chunk = 1024;
  for (std::size_t begin = 0; begin < rows.size(); begin += chunk) {
    const std::size_t end = std::min(begin + chunk, rows.size());
    std::vector<std::uint32_t> slice(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                     rows.begin() + static_cast<std::ptrdiff_t>(end));
    const auto batch = dataset.gather(slice);
    Matrix<T> x = embed(batch);
    const Matrix<T>* input = &x;
    Matrix<T> z;
    if (config_.kind == ArchKind::kSfm) {
      fim::FimInput<T> in{&x, &batch};
      sfm_stack_->forward(params_, in, z, nullptr);
      input = &z;
    }
    fim::FimInput<T> in{input, &batch};
    Matrix<T> y;
    modules[index]->forward(params_, in, y, nullptr);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      std::copy(y.row(r), y.row(r) + y.cols(), out.values.row(begin + r));
    }
  }
  return out;
}

template GateWeightReport ModelGraph<float>::extract_gate_weights(const data::Dataset&,
                                                                  std::size_t) const;
template GateWeightReport ModelGraph<double>::extract_gate_weights(const data::Dataset&,
                                                                   std::size_t) const;
template ModelGraph<float> ModelGraph<float>::trimmed(const TrimRule&) const;
template ModelGraph<double> ModelGraph<double>::trimmed(const TrimRule&) const;
template ReprExport<float> ModelGraph<float>::export_representations(const data::Dataset&,
                                                                     const ReprSelector&,
                                                                     std::size_t,
                                                                     std::uint64_t) const;
template ReprExport<double> ModelGraph<double>::export_representations(const data::Dataset&,
                                                                       const ReprSelector&,
                                                                       std::size_t,
                                                                       std::uint64_t) const;

}  // namespace dtnlab::mtl
