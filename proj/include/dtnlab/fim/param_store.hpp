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

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "dtnlab/core/error.hpp"

namespace dtnlab::fim {

// One named learnable tensor plus its gradient buffer.
template <typename T>
struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;

  std::size_t size() const { return value.size(); }
};

// Owns every learnable tensor of one model. Modules hold block handles;
// the optimizer, checkpointing, budget accounting and gradient checks all
// operate on the store, never on module internals.
template <typename T>
class ParamStore {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (const std::size_t d : shape) n *= d;
    ParamBlock<T> b;
    b.name = std::move(name);
    b.shape = std::move(shape);
    b.value.assign(n, T(0));
    b.grad.assign(n, T(0));
    for (const auto& existing : blocks_) {
      require(existing.name != b.name, "params", "duplicate block name '" + b.name + "'");
    }
    blocks_.push_back(std::move(b));
    return blocks_.size() - 1;
  }

  ParamBlock<T>& block(std::size_t h) { return blocks_.at(h); }
  const ParamBlock<T>& block(std::size_t h) const { return blocks_.at(h); }
  std::size_t n_blocks() const { return blocks_.size(); }

  std::size_t total_parameters() const {
    return std::accumulate(blocks_.begin(), blocks_.end(), std::size_t{0},
                           [](std::size_t acc, const ParamBlock<T>& b) { return acc + b.size(); });
  }

  std::size_t count(const std::vector<std::size_t>& handles) const {
    std::size_t n = 0;
    for (const std::size_t h : handles) n += block(h).size();
    return n;
  }

  void zero_grad() {
    for (auto& b : blocks_) b.grad.assign(b.grad.size(), T(0));
  }

  bool values_finite() const {
    for (const auto& b : blocks_) {
      for (const T v : b.value) {
        if (!std::isfinite(static_cast<double>(v))) return false;
      }
    }
    return true;
  }

  // Flat coordinate view across blocks, used by the gradient checker.
  T get_flat(std::size_t i) const {
    const auto [b, off] = locate(i);
    return blocks_[b].value[off];
  }
  void set_flat(std::size_t i, T v) {
    const auto [b, off] = locate(i);
    blocks_[b].value[off] = v;
  }
  T grad_flat(std::size_t i) const {
    const auto [b, off] = locate(i);
    return blocks_[b].grad[off];
  }
  std::string describe_flat(std::size_t i) const {
    const auto [b, off] = locate(i);
    return blocks_[b].name + "[" + std::to_string(off) + "]";
  }

 private:
  std::pair<std::size_t, std::size_t> locate(std::size_t i) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      if (i < blocks_[b].size()) return {b, i};
      i -= blocks_[b].size();
    }
    fail("params", "flat index out of range");
  }

  std::vector<ParamBlock<T>> blocks_;
};

}  // namespace dtnlab::fim
