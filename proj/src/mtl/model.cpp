// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include "dtnlab/mtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dtnlab/core/error.hpp"

namespace dtnlab::mtl {

using fim::FimCache;
using fim::FimInput;
using fim::FimKind;
using fim::FimSpec;

const char* arch_kind_name(ArchKind k) {
  switch (k) {
    case ArchKind::kSharedBottom:
      return "shared_bottom";
    case ArchKind::kMmoe:
      return "mmoe";
    case ArchKind::kPle:
      return "ple";
    case ArchKind::kSfm:
      return "sfm";
    case ArchKind::kTfi:
      return "tfi";
    case ArchKind::kDtn:
      return "dtn";
  }
  return "?";
}

ArchKind arch_kind_from_name(const std::string& name) {
  for (auto k : {ArchKind::kSharedBottom, ArchKind::kMmoe, ArchKind::kPle, ArchKind::kSfm,
                 ArchKind::kTfi, ArchKind::kDtn}) {
    if (name == arch_kind_name(k)) return k;
  }
  fail("model", "unknown architecture kind '" + name + "'");
}

namespace {

template <typename T>
void check_finite(const Matrix<T>& m, const std::string& where) {
  require(m.all_finite(), "forward", "non-finite values after " + where);
}

template <typename T>
void rowscale_into(const Matrix<T>& m, const Matrix<T>& preds, std::size_t col, Matrix<T>& out) {
  out.resize(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const T s = preds.at(r, col);
    const T* src = m.row(r);
    T* dst = out.row(r);
    for (std::size_t j = 0; j < m.cols(); ++j) dst[j] = s * src[j];
  }
}

}  // namespace

template <typename T>
void gate_forward(const fim::ParamStore<T>& ps, const GateState<T>& gate,
                  const Matrix<T>& selector, const std::vector<const Matrix<T>*>& candidates,
                  Matrix<T>& weights, Matrix<T>& weighted_sum) {
  require(candidates.size() == gate.lin.out, "gate",
          gate.name + ": candidate count " + std::to_string(candidates.size()) +
              " does not match logit count " + std::to_string(gate.lin.out));
  const std::size_t width = candidates.front()->cols();
  for (const auto* c : candidates) {
    require(c->cols() == width && c->rows() == selector.rows(), "gate",
            gate.name + ": candidate shape mismatch");
  }
  Matrix<T> logits;
  gate.lin.forward(ps, selector, logits);
  fim::softmax_rows(logits, weights);
  weighted_sum.resize(selector.rows(), width);
  weighted_sum.fill(T(0));
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const Matrix<T>& cand = *candidates[j];
    for (std::size_t r = 0; r < weighted_sum.rows(); ++r) {
      kernels::axpy(weights.at(r, j), cand.row(r), weighted_sum.row(r), width);
    }
  }
}

// ---- build ----------------------------------------------------------------

template <typename T>
ModelGraph<T> ModelGraph<T>::build(const ModelConfig& config, const data::FeatureSchema& schema) {
  ModelGraph<T> m;
  m.config_ = config;
  m.schema_ = schema;

  require(m.config_.output_dim > 0, "model", "output_dim must be positive");

  // Apply the embedding override onto the model's schema copy.
  if (m.config_.embedding_dim.has_value()) {
    require(*m.config_.embedding_dim > 0, "model", "embedding_dim must be positive");
    std::vector<data::FeatureSpec> feats = schema.features();
    for (auto& f : feats) {
      if (f.is_categorical()) f.embedding_dim = *m.config_.embedding_dim;
    }
    m.schema_ = data::FeatureSchema(feats, schema.tasks(), schema.task_dependencies());
  }

  const std::size_t n_tasks = m.schema_.n_tasks();
  // Task specs default from the schema; when present they must match it.
  if (m.config_.tasks.empty()) {
    for (const auto& name : m.schema_.tasks()) {
      TaskSpec ts;
      ts.name = name;
      m.config_.tasks.push_back(ts);
    }
  }
  require(m.config_.tasks.size() == n_tasks, "model", "task spec count does not match schema");
  for (std::size_t t = 0; t < n_tasks; ++t) {
    require(m.config_.tasks[t].name == m.schema_.tasks()[t], "model",
            "task spec order must match the schema (got '" + m.config_.tasks[t].name +
                "', expected '" + m.schema_.tasks()[t] + "')");
  }

  // Resolve the dependency chain: config wins, schema fills the gaps.
  m.preceding_.assign(n_tasks, std::nullopt);
  m.tsn_enabled_.assign(n_tasks, false);
  m.tsn_detach_.assign(n_tasks, false);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const auto& ts = m.config_.tasks[t];
    std::optional<std::size_t> pre;
    if (ts.preceding_task.has_value()) {
      require(!ts.preceding_task->empty(), "model", "empty preceding_task name");
      require(*ts.preceding_task != ts.name, "model",
              "task '" + ts.name + "' cannot depend on itself (cycle)");
      pre = m.schema_.task_index(*ts.preceding_task);
      require(*pre < t, "model",
              "task '" + ts.name + "' must depend on an earlier task; '" + *ts.preceding_task +
                  "' comes later (dependency chain must be acyclic)");
    } else {
      pre = m.schema_.preceding_task(t);
    }
    m.preceding_[t] = pre;
    m.tsn_enabled_[t] = pre.has_value() && ts.tsn_enabled;
    m.tsn_detach_[t] = ts.tsn_detach;
  }

  // Canonicalize expert-style architectures into explicit module lists so
  // that trimming and checkpointing see one representation.
  auto mlp_expert_spec = [&] {
    FimSpec s;
    s.kind = FimKind::kMlp;
    s.output_dim = m.config_.output_dim;
    s.mlp_hidden = m.config_.expert_hidden;
    return s;
  };
  auto& cfg = m.config_;
  switch (cfg.kind) {
    case ArchKind::kSharedBottom:
      if (cfg.shared_fims.empty()) cfg.shared_fims = {mlp_expert_spec()};
      require(cfg.shared_fims.size() == 1, "model", "shared_bottom takes exactly one trunk");
      cfg.task_fims.clear();
      break;
    case ArchKind::kMmoe:
    case ArchKind::kSfm:
      if (cfg.shared_fims.empty()) {
        require(cfg.n_shared_experts >= 1, "model", "at least one expert required");
        cfg.shared_fims.assign(cfg.n_shared_experts, mlp_expert_spec());
      }
      cfg.task_fims.clear();
      break;
    case ArchKind::kPle:
      if (cfg.shared_fims.empty()) {
        require(cfg.n_shared_experts >= 1, "model", "ple needs at least one shared expert");
        cfg.shared_fims.assign(cfg.n_shared_experts, mlp_expert_spec());
      }
      if (cfg.task_fims.empty()) {
        require(cfg.n_task_experts >= 1, "model",
                "ple needs at least one task-specific expert per task (degenerate otherwise)");
        for (const auto& name : m.schema_.tasks()) {
          cfg.task_fims[name].assign(cfg.n_task_experts, mlp_expert_spec());
        }
      }
      break;
    case ArchKind::kTfi:
    case ArchKind::kDtn:
      break;
  }
  if (cfg.kind == ArchKind::kTfi || cfg.kind == ArchKind::kDtn || cfg.kind == ArchKind::kPle) {
    require(!cfg.shared_fims.empty(), "model", "shared module set must not be empty");
    for (const auto& name : m.schema_.tasks()) {
      auto it = cfg.task_fims.find(name);
      require(it != cfg.task_fims.end() && !it->second.empty(), "model",
              "task '" + name + "' needs a non-empty module set");
    }
    for (const auto& [name, unused] : cfg.task_fims) {
      (void)unused;
      m.schema_.task_index(name);  // throws on unknown task
    }
  }

  // Uniform output width across every module in the model.
  auto check_width = [&](const FimSpec& s) {
    require(s.output_dim == cfg.output_dim, "model",
            std::string("inconsistent output_dim in ") + fim::fim_kind_name(s.kind) +
                " spec: " + std::to_string(s.output_dim) + " vs model " +
                std::to_string(cfg.output_dim));
  };
  for (const auto& s : cfg.shared_fims) check_width(s);
  for (const auto& [name, list] : cfg.task_fims) {
    (void)name;
    for (const auto& s : list) check_width(s);
  }
  if (cfg.kind == ArchKind::kSfm) check_width(cfg.sfm_stack);

  const std::size_t in_width = m.schema_.input_width();
  const std::size_t fim_input = cfg.kind == ArchKind::kSfm ? cfg.output_dim : in_width;
  const std::size_t selector_width = fim_input;
  const std::size_t tower_in = cfg.kind == ArchKind::kDtn ? 2 * cfg.output_dim : cfg.output_dim;

  // Whole-model parameter budget: embeddings, gates and towers are fixed by
  // the config; the remainder is split evenly across interaction modules.
  if (cfg.parameter_budget.has_value()) {
    const std::size_t budget = *cfg.parameter_budget;
    std::size_t fixed = 0;
    for (const auto& f : m.schema_.features()) {
      if (f.is_categorical()) fixed += f.vocab_size * f.embedding_dim;
    }
    for (std::size_t t = 0; t < n_tasks; ++t) {
      std::size_t d = tower_in;
      for (const std::size_t h : cfg.tasks[t].tower_hidden) {
        fixed += d * h + h;
        d = h;
      }
      fixed += d + 1;
    }
    auto gate_cost = [&](std::size_t k) { return selector_width * k + k; };
    std::size_t n_fims = cfg.shared_fims.size();
    for (const auto& [name, list] : cfg.task_fims) {
      (void)name;
      n_fims += list.size();
    }
    if (cfg.kind == ArchKind::kSfm) n_fims += 1;
    for (std::size_t t = 0; t < n_tasks; ++t) {
      const std::size_t own = cfg.task_fims.count(cfg.tasks[t].name)
                                  ? cfg.task_fims.at(cfg.tasks[t].name).size()
                                  : 0;
      switch (cfg.kind) {
        case ArchKind::kSharedBottom:
          break;
        case ArchKind::kMmoe:
        case ArchKind::kSfm:
          fixed += gate_cost(cfg.shared_fims.size());
          break;
        case ArchKind::kPle:
        case ArchKind::kTfi:
          fixed += gate_cost(own + cfg.shared_fims.size());
          break;
        case ArchKind::kDtn: {
          fixed += gate_cost(own);
          const std::size_t pre =
              m.preceding_[t].has_value() ? cfg.task_fims.at(m.schema_.tasks()[*m.preceding_[t]]).size()
                                          : 0;
          fixed += gate_cost(pre + cfg.shared_fims.size());
          break;
        }
      }
    }
    require(n_fims > 0, "model", "no interaction modules to budget");
    require(fixed < budget, "model",
            "parameter budget " + std::to_string(budget) +
                " is below the fixed embedding/gate/tower cost " + std::to_string(fixed));

    // Equal shares, except that a kind with a bounded ceiling (gdcn's rank
    // cannot exceed the input width) takes its maximum and the remainder
    // flows to the elastic kinds.
    std::vector<FimSpec*> fims;
    for (auto& s : cfg.shared_fims) fims.push_back(&s);
    for (auto& [name, list] : cfg.task_fims) {
      (void)name;
      for (auto& s : list) fims.push_back(&s);
    }
    if (cfg.kind == ArchKind::kSfm) fims.push_back(&cfg.sfm_stack);
    auto max_reachable = [&](const FimSpec& s) -> std::size_t {
      if (s.kind != FimKind::kGdcn) return static_cast<std::size_t>(-1);
      FimSpec widest = s;
      widest.gdcn_rank = fim_input;
      return fim::predicted_parameter_count(widest, fim_input);
    };
    std::size_t remaining = budget - fixed;
    std::vector<FimSpec*> elastic = fims;
    bool moved = true;
    while (moved && !elastic.empty()) {
      moved = false;
      const std::size_t share = remaining / elastic.size();
      for (auto it = elastic.begin(); it != elastic.end();) {
        const std::size_t cap = max_reachable(**it);
        if (static_cast<double>(cap) < 0.9 * static_cast<double>(share)) {
          (*it)->parameter_budget = cap;
          remaining -= std::min(remaining, cap);
          it = elastic.erase(it);
          moved = true;
        } else {
          ++it;
        }
      }
    }
    require(!elastic.empty(), "model",
            "parameter budget " + std::to_string(budget) +
                " cannot be absorbed: every module kind saturates below its share");
    const std::size_t share = remaining / elastic.size();
    for (auto* s : elastic) s->parameter_budget = share;
  }

  Rng rng(mix_seed(cfg.init_seed, 0x696e6974ULL));  // "init"

  m.build_embeddings(rng);

  if (cfg.kind == ArchKind::kSfm) {
    m.sfm_stack_ = fim::build_fim<T>(m.params_, "sfm_stack", cfg.sfm_stack, in_width, m.schema_,
                                     rng);
    cfg.sfm_stack = m.sfm_stack_->spec();  // record the solved spec
  }

  for (std::size_t j = 0; j < cfg.shared_fims.size(); ++j) {
    m.shared_set_.push_back(fim::build_fim<T>(m.params_, "shared.fim" + std::to_string(j),
                                              cfg.shared_fims[j], fim_input, m.schema_, rng));
    cfg.shared_fims[j] = m.shared_set_.back()->spec();
  }
  m.task_sets_.resize(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const auto& name = m.schema_.tasks()[t];
    if (!cfg.task_fims.count(name)) continue;
    auto& list = cfg.task_fims.at(name);
    for (std::size_t j = 0; j < list.size(); ++j) {
      m.task_sets_[t].push_back(fim::build_fim<T>(
          m.params_, "task" + std::to_string(t) + ".fim" + std::to_string(j), list[j], fim_input,
          m.schema_, rng));
      list[j] = m.task_sets_[t].back()->spec();
    }
  }
  cfg.parameter_budget.reset();  // solved specs carry the realized sizes now

  // Gates. Weights start at zero: softmax of zero logits mixes uniformly.
  m.own_gate_.assign(n_tasks, -1);
  m.other_gate_.assign(n_tasks, -1);
  auto add_gate = [&](const std::string& name, std::vector<GateCandidate> cands) {
    GateState<T> g;
    g.name = name;
    g.candidates = std::move(cands);
    g.lin.build(m.params_, name, selector_width, g.candidates.size(), rng, /*bias=*/true,
                /*zero_init=*/true);
    m.gates_.push_back(std::move(g));
    return static_cast<int>(m.gates_.size() - 1);
  };
  auto shared_cands = [&] {
    std::vector<GateCandidate> cands;
    for (std::size_t j = 0; j < m.shared_set_.size(); ++j) {
      cands.push_back({SetRef{-1}, j, -1});
    }
    return cands;
  };
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const std::string tn = "gate.t" + std::to_string(t);
    switch (cfg.kind) {
      case ArchKind::kSharedBottom:
        break;
      case ArchKind::kMmoe:
      case ArchKind::kSfm:
        m.own_gate_[t] = add_gate(tn, shared_cands());
        break;
      case ArchKind::kPle:
      case ArchKind::kTfi: {
        std::vector<GateCandidate> cands;
        for (std::size_t j = 0; j < m.task_sets_[t].size(); ++j) {
          cands.push_back({SetRef{static_cast<int>(t)}, j, -1});
        }
        for (auto& c : shared_cands()) cands.push_back(c);
        m.own_gate_[t] = add_gate(tn, std::move(cands));
        break;
      }
      case ArchKind::kDtn: {
        std::vector<GateCandidate> own;
        for (std::size_t j = 0; j < m.task_sets_[t].size(); ++j) {
          own.push_back({SetRef{static_cast<int>(t)}, j, -1});
        }
        m.own_gate_[t] = add_gate(tn + ".own", std::move(own));
        std::vector<GateCandidate> other;
        if (m.preceding_[t].has_value()) {
          const auto p = *m.preceding_[t];
          for (std::size_t j = 0; j < m.task_sets_[p].size(); ++j) {
            other.push_back({SetRef{static_cast<int>(p)}, j,
                             m.tsn_enabled_[t] ? static_cast<int>(p) : -1});
          }
        }
        for (auto& c : shared_cands()) other.push_back(c);
        m.other_gate_[t] = add_gate(tn + ".other", std::move(other));
        break;
      }
    }
  }

  for (std::size_t t = 0; t < n_tasks; ++t) {
    fim::Mlp<T> tower;
    tower.build(m.params_, "tower.t" + std::to_string(t), tower_in,
                m.config_.tasks[t].tower_hidden, 1, rng);
    m.towers_.push_back(std::move(tower));
  }

  return m;
}

template <typename T>
void ModelGraph<T>::build_embeddings(Rng& rng) {
  for (std::size_t i = 0; i < schema_.n_features(); ++i) {
    const auto& f = schema_.features()[i];
    if (!f.is_categorical()) continue;
    const std::size_t h = params_.add("embed." + f.name, {f.vocab_size, f.embedding_dim});
    const double bound = 1.0 / std::sqrt(static_cast<double>(f.embedding_dim));
    for (auto& v : params_.block(h).value) v = static_cast<T>(rng.uniform(-bound, bound));
    embed_tables_.push_back(h);
  }
}

template <typename T>
Matrix<T> ModelGraph<T>::embed(const data::ExampleBatch& batch) const {
  const std::size_t b = batch.rows();
  Matrix<T> x(b, schema_.input_width());
  std::size_t off = 0, table = 0;
  for (std::size_t i = 0; i < schema_.n_features(); ++i) {
    const auto& f = schema_.features()[i];
    if (f.is_categorical()) {
      const auto& tab = params_.block(embed_tables_[table]).value;
      const std::size_t col = schema_.column_of(i);
      for (std::size_t r = 0; r < b; ++r) {
        const auto id = static_cast<std::size_t>(batch.categorical_ids.at(r, col));
        require(id < f.vocab_size, "forward", "categorical id out of range for " + f.name);
        const T* src = tab.data() + id * f.embedding_dim;
        std::copy(src, src + f.embedding_dim, x.row(r) + off);
      }
      off += f.embedding_dim;
      ++table;
    } else {
      const std::size_t col = schema_.column_of(i);
      for (std::size_t r = 0; r < b; ++r) {
        x.at(r, off) = static_cast<T>(batch.continuous_values.at(r, col));
      }
      off += 1;
    }
  }
  return x;
}

template <typename T>
void ModelGraph<T>::embed_backward(const data::ExampleBatch& batch, const Matrix<T>& dx) {
  const std::size_t b = batch.rows();
  std::size_t off = 0, table = 0;
  for (std::size_t i = 0; i < schema_.n_features(); ++i) {
    const auto& f = schema_.features()[i];
    if (f.is_categorical()) {
      auto& grad = params_.block(embed_tables_[table]).grad;
      const std::size_t col = schema_.column_of(i);
      for (std::size_t r = 0; r < b; ++r) {
        const auto id = static_cast<std::size_t>(batch.categorical_ids.at(r, col));
        T* dst = grad.data() + id * f.embedding_dim;
        kernels::add(dst, dx.row(r) + off, dst, f.embedding_dim);
      }
      off += f.embedding_dim;
      ++table;
    } else {
      off += 1;
    }
  }
}

// ---- forward ----------------------------------------------------------------

template <typename T>
void ModelGraph<T>::forward(const data::ExampleBatch& batch, Matrix<T>& preds,
                            ModelCache<T>* cache, const ForwardOptions* opts) const {
  ModelCache<T> local;
  ModelCache<T>& c = cache != nullptr ? *cache : local;
  const std::size_t b = batch.rows();
  const std::size_t n_tasks = schema_.n_tasks();

  c.x = embed(batch);
  check_finite(c.x, "embedding");

  const Matrix<T>* module_input = &c.x;
  if (config_.kind == ArchKind::kSfm) {
    FimInput<T> in{&c.x, &batch};
    sfm_stack_->forward(params_, in, c.sfm_z, &c.sfm_cache);
    check_finite(c.sfm_z, "sfm_stack");
    module_input = &c.sfm_z;
  }

  // Which tasks run this pass.
  c.task_computed.assign(n_tasks, true);
  if (opts != nullptr && opts->only_task.has_value()) {
    c.task_computed.assign(n_tasks, false);
    std::size_t t = *opts->only_task;
    c.task_computed[t] = true;
    while (preceding_[t].has_value()) {
      t = *preceding_[t];
      c.task_computed[t] = true;
    }
  }

  FimInput<T> in{module_input, &batch};
  c.shared_outs.resize(shared_set_.size());
  c.shared_caches.resize(shared_set_.size());
  for (std::size_t j = 0; j < shared_set_.size(); ++j) {
    shared_set_[j]->forward(params_, in, c.shared_outs[j],
                            cache != nullptr ? &c.shared_caches[j] : nullptr);
    check_finite(c.shared_outs[j], "shared.fim" + std::to_string(j));
  }
  c.set_outs.assign(n_tasks, {});
  c.set_caches.assign(n_tasks, {});
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (!c.task_computed[t]) continue;
    c.set_outs[t].resize(task_sets_[t].size());
    c.set_caches[t].resize(task_sets_[t].size());
    for (std::size_t j = 0; j < task_sets_[t].size(); ++j) {
      task_sets_[t][j]->forward(params_, in, c.set_outs[t][j],
                                cache != nullptr ? &c.set_caches[t][j] : nullptr);
      check_finite(c.set_outs[t][j],
                   "task" + std::to_string(t) + ".fim" + std::to_string(j));
    }
  }

  c.logits.resize(b, n_tasks);
  c.preds.resize(b, n_tasks);
  c.gates.assign(gates_.size(), {});
  c.tower_inputs.assign(n_tasks, {});
  c.tower_caches.assign(n_tasks, {});
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (c.task_computed[t]) forward_task(t, batch, c, opts);
  }

  preds = c.preds;
}

template <typename T>
void ModelGraph<T>::forward_task(std::size_t t, const data::ExampleBatch& batch,
                                 ModelCache<T>& cache, const ForwardOptions* opts) const {
  (void)batch;
  const Matrix<T>& selector = config_.kind == ArchKind::kSfm ? cache.sfm_z : cache.x;

  auto eval_gate = [&](int g) -> const Matrix<T>& {
    const GateState<T>& gate = gates_[static_cast<std::size_t>(g)];
    GateEval<T>& ev = cache.gates[static_cast<std::size_t>(g)];
    ev.scaled.assign(gate.candidates.size(), Matrix<T>());
    std::vector<const Matrix<T>*> cands(gate.candidates.size());
    for (std::size_t j = 0; j < gate.candidates.size(); ++j) {
      const auto& cand = gate.candidates[j];
      const Matrix<T>& base = cand.set.is_shared()
                                  ? cache.shared_outs[cand.index]
                                  : cache.set_outs[static_cast<std::size_t>(cand.set.task)]
                                                  [cand.index];
      if (cand.scaled_by_pred >= 0) {
        rowscale_into(base, cache.preds, static_cast<std::size_t>(cand.scaled_by_pred),
                      ev.scaled[j]);
        cands[j] = &ev.scaled[j];
      } else {
        cands[j] = &base;
      }
    }
    gate_forward(params_, gate, selector, cands, ev.weights, ev.wsum);
    check_finite(ev.wsum, gate.name);
    return ev.wsum;
  };

  Matrix<T>& tin = cache.tower_inputs[t];
  switch (config_.kind) {
    case ArchKind::kSharedBottom:
      tin = cache.shared_outs[0];
      break;
    case ArchKind::kMmoe:
    case ArchKind::kSfm:
    case ArchKind::kPle:
    case ArchKind::kTfi:
      tin = eval_gate(own_gate_[t]);
      break;
    case ArchKind::kDtn: {
      const Matrix<T>& s_other = eval_gate(other_gate_[t]);
      const Matrix<T>& s_own = eval_gate(own_gate_[t]);
      tin.resize(s_other.rows(), s_other.cols() + s_own.cols());
      for (std::size_t r = 0; r < tin.rows(); ++r) {
        std::copy(s_other.row(r), s_other.row(r) + s_other.cols(), tin.row(r));
        std::copy(s_own.row(r), s_own.row(r) + s_own.cols(), tin.row(r) + s_other.cols());
      }
      break;
    }
  }

  Matrix<T> logit;
  towers_[t].forward(params_, tin, logit, &cache.tower_caches[t]);
  check_finite(logit, "tower.t" + std::to_string(t));
  for (std::size_t r = 0; r < logit.rows(); ++r) {
    cache.logits.at(r, t) = logit.at(r, 0);
    cache.preds.at(r, t) = fim::stable_sigmoid(logit.at(r, 0));
  }
  if (opts != nullptr) {
    auto it = opts->override_preds.find(t);
    if (it != opts->override_preds.end()) {
      for (std::size_t r = 0; r < logit.rows(); ++r) {
        cache.preds.at(r, t) = static_cast<T>(it->second);
      }
    }
  }
}

// ---- backward ---------------------------------------------------------------

template <typename T>
void ModelGraph<T>::backward(const data::ExampleBatch& batch, const ModelCache<T>& cache,
                             const Matrix<T>& dlogits_direct) {
  const std::size_t b = batch.rows();
  const std::size_t n_tasks = schema_.n_tasks();
  require(dlogits_direct.rows() == b && dlogits_direct.cols() == n_tasks, "backward",
          "dlogits shape mismatch");

  const Matrix<T>& selector = config_.kind == ArchKind::kSfm ? cache.sfm_z : cache.x;
  Matrix<T> dselector(b, selector.cols());   // accumulates into x or z
  std::vector<std::vector<Matrix<T>>> dset(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    dset[t].assign(task_sets_[t].size(), Matrix<T>());
  }
  std::vector<Matrix<T>> dshared(shared_set_.size());
  auto dset_at = [&](const GateCandidate& cand) -> Matrix<T>& {
    Matrix<T>& m = cand.set.is_shared()
                       ? dshared[cand.index]
                       : dset[static_cast<std::size_t>(cand.set.task)][cand.index];
    if (m.rows() == 0) m.resize(b, config_.output_dim);
    return m;
  };
  std::vector<std::vector<T>> dpred(n_tasks, std::vector<T>(b, T(0)));

  auto gate_backward = [&](int gi, std::size_t task, const Matrix<T>& ds) {
    const GateState<T>& gate = gates_[static_cast<std::size_t>(gi)];
    const GateEval<T>& ev = cache.gates[static_cast<std::size_t>(gi)];
    const std::size_t k = gate.candidates.size();
    Matrix<T> dw(b, k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto& cand = gate.candidates[j];
      const Matrix<T>& base = cand.set.is_shared()
                                  ? cache.shared_outs[cand.index]
                                  : cache.set_outs[static_cast<std::size_t>(cand.set.task)]
                                                  [cand.index];
      const Matrix<T>& aj = cand.scaled_by_pred >= 0 ? ev.scaled[j] : base;
      Matrix<T>& dtarget = dset_at(cand);
      for (std::size_t r = 0; r < b; ++r) {
        dw.at(r, j) = kernels::dot(ds.row(r), aj.row(r), ds.cols());
        const T wj = ev.weights.at(r, j);
        if (cand.scaled_by_pred >= 0) {
          const auto p = static_cast<std::size_t>(cand.scaled_by_pred);
          const T pr = cache.preds.at(r, p);
          // dM_j += w_j * pred * dS ; dpred += w_j * <dS, M_j>
          kernels::axpy(wj * pr, ds.row(r), dtarget.row(r), ds.cols());
          if (!tsn_detach_[task]) {
            dpred[p][r] += wj * kernels::dot(ds.row(r), base.row(r), ds.cols());
          }
        } else {
          kernels::axpy(wj, ds.row(r), dtarget.row(r), ds.cols());
        }
      }
    }
    // softmax backward
    Matrix<T> dlogits(b, k);
    for (std::size_t r = 0; r < b; ++r) {
      T inner = T(0);
      for (std::size_t j = 0; j < k; ++j) inner += ev.weights.at(r, j) * dw.at(r, j);
      for (std::size_t j = 0; j < k; ++j) {
        dlogits.at(r, j) = ev.weights.at(r, j) * (dw.at(r, j) - inner);
      }
    }
    gate.lin.backward(params_, selector, dlogits, &dselector, true);
  };

  for (std::size_t ti = n_tasks; ti-- > 0;) {
    if (!cache.task_computed[ti]) continue;
    // total dlogit: direct loss term plus TSN chains from dependents
    Matrix<T> dlogit(b, 1);
    for (std::size_t r = 0; r < b; ++r) {
      const T p = cache.preds.at(r, ti);
      dlogit.at(r, 0) = dlogits_direct.at(r, ti) + dpred[ti][r] * p * (T(1) - p);
    }
    Matrix<T> dtin;
    towers_[ti].backward(params_, cache.tower_caches[ti], dlogit, &dtin, false);

    switch (config_.kind) {
      case ArchKind::kSharedBottom: {
        Matrix<T>& d0 = dshared[0];
        if (d0.rows() == 0) d0.resize(b, config_.output_dim);
        kernels::add(d0.data(), dtin.data(), d0.data(), d0.size());
        break;
      }
      case ArchKind::kMmoe:
      case ArchKind::kSfm:
      case ArchKind::kPle:
      case ArchKind::kTfi:
        gate_backward(own_gate_[ti], ti, dtin);
        break;
      case ArchKind::kDtn: {
        const std::size_t od = config_.output_dim;
        Matrix<T> ds_other(b, od), ds_own(b, od);
        for (std::size_t r = 0; r < b; ++r) {
          std::copy(dtin.row(r), dtin.row(r) + od, ds_other.row(r));
          std::copy(dtin.row(r) + od, dtin.row(r) + 2 * od, ds_own.row(r));
        }
        gate_backward(other_gate_[ti], ti, ds_other);
        gate_backward(own_gate_[ti], ti, ds_own);
        break;
      }
    }
  }

  Matrix<T> dmodule_input(b, selector.cols());
  for (std::size_t t = n_tasks; t-- > 0;) {
    for (std::size_t j = task_sets_[t].size(); j-- > 0;) {
      if (dset[t][j].rows() == 0) continue;
      task_sets_[t][j]->backward(params_, cache.set_caches[t][j], dset[t][j], &dmodule_input);
    }
  }
  for (std::size_t j = shared_set_.size(); j-- > 0;) {
    if (dshared[j].rows() == 0) continue;
    shared_set_[j]->backward(params_, cache.shared_caches[j], dshared[j], &dmodule_input);
  }
  kernels::add(dmodule_input.data(), dselector.data(), dmodule_input.data(),
               dmodule_input.size());

  if (config_.kind == ArchKind::kSfm) {
    Matrix<T> dx(b, cache.x.cols());
    sfm_stack_->backward(params_, cache.sfm_cache, dmodule_input, &dx);
    embed_backward(batch, dx);
  } else {
    embed_backward(batch, dmodule_input);
  }
}

// ---- misc ---------------------------------------------------------------

template <typename T>
void ModelGraph<T>::collect_relu_masks(const ModelCache<T>& cache,
                                       std::vector<std::uint8_t>& out) const {
  for (std::size_t t = 0; t < task_sets_.size(); ++t) {
    if (!cache.task_computed[t]) continue;
    for (std::size_t j = 0; j < task_sets_[t].size(); ++j) {
      task_sets_[t][j]->collect_relu_masks(cache.set_caches[t][j], out);
    }
  }
  for (std::size_t j = 0; j < shared_set_.size(); ++j) {
    shared_set_[j]->collect_relu_masks(cache.shared_caches[j], out);
  }
  if (config_.kind == ArchKind::kSfm) {
    sfm_stack_->collect_relu_masks(cache.sfm_cache, out);
  }
  for (std::size_t t = 0; t < towers_.size(); ++t) {
    if (cache.task_computed[t]) towers_[t].collect_relu_masks(cache.tower_caches[t], out);
  }
}

template <typename T>
std::size_t ModelGraph<T>::fim_parameter_count(int set, std::size_t index) const {
  return set_modules(set).at(index)->parameter_count(params_);
}

template <typename T>
std::size_t ModelGraph<T>::gate_row_parameter_count() const {
  const std::size_t sel = config_.kind == ArchKind::kSfm ? config_.output_dim
                                                         : schema_.input_width();
  return sel + 1;
}

template <typename T>
void ModelGraph<T>::load_values_from(const fim::ParamStore<T>& other) {
  require(other.n_blocks() == params_.n_blocks(), "model", "parameter layout mismatch");
  for (std::size_t h = 0; h < params_.n_blocks(); ++h) {
    auto& dst = params_.block(h);
    const auto& src = other.block(h);
    require(src.name == dst.name && src.shape == dst.shape, "model",
            "parameter block mismatch at " + dst.name);
    dst.value = src.value;
  }
}

template class ModelGraph<float>;
template class ModelGraph<double>;

template void gate_forward<float>(const fim::ParamStore<float>&, const GateState<float>&,
                                  const Matrix<float>&, const std::vector<const Matrix<float>*>&,
                                  Matrix<float>&, Matrix<float>&);
template void gate_forward<double>(const fim::ParamStore<double>&, const GateState<double>&,
                                   const Matrix<double>&,
                                   const std::vector<const Matrix<double>*>&, Matrix<double>&,
                                   Matrix<double>&);

}  // namespace dtnlab::mtl
