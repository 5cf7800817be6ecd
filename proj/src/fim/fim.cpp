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
#include <cmath>

#include "dtnlab/core/error.hpp"
#include "dtnlab/fim/fim.hpp"
#include "dtnlab/fim/fim_modules.hpp"

namespace dtnlab::fim {

const char* fim_kind_name(FimKind k) {
  switch (k) {
    case FimKind::kMlp:
      return "mlp";
    case FimKind::kGdcn:
      return "gdcn";
    case FimKind::kMasknet:
      return "masknet";
    case FimKind::kMemonet:
      return "memonet";
  }
  return "?";
}

FimKind fim_kind_from_name(const std::string& name) {
  if (name == "mlp") return FimKind::kMlp;
  if (name == "gdcn") return FimKind::kGdcn;
  if (name == "masknet") return FimKind::kMasknet;
  if (name == "memonet") return FimKind::kMemonet;
  fail("fim", "unknown interaction kind '" + name + "' (mlp|gdcn|masknet|memonet)");
}

std::uint64_t memonet_pair_key(std::uint32_t field_a, std::int32_t id_a, std::uint32_t field_b,
                               std::int32_t id_b) {
  auto mix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t k = mix((std::uint64_t(field_a) << 32) ^ std::uint64_t(std::uint32_t(id_a)));
  k = mix(k ^ (std::uint64_t(field_b) << 32) ^ std::uint64_t(std::uint32_t(id_b)));
  return k;
}

std::size_t memonet_hash1(std::uint64_t key, std::size_t entries) {
  return static_cast<std::size_t>((key * 0xff51afd7ed558ccdULL) >> 32) % entries;
}

std::size_t memonet_hash2(std::uint64_t key, std::size_t entries) {
  return static_cast<std::size_t>((key * 0xc4ceb9fe1a85ec53ULL) >> 32) % entries;
}

namespace {

std::size_t mlp_count(const std::vector<std::size_t>& hidden, std::size_t in, std::size_t out) {
  std::size_t total = 0, d = in;
  for (const std::size_t h : hidden) {
    total += d * h + h;
    d = h;
  }
  return total + d * out + out;
}

std::size_t masknet_bottleneck(std::size_t hidden, double reduction) {
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(hidden) / reduction)));
}

}  // namespace

std::size_t predicted_parameter_count(const FimSpec& spec, std::size_t in_dim) {
  const std::size_t out = spec.output_dim;
  switch (spec.kind) {
    case FimKind::kMlp:
      return mlp_count(spec.mlp_hidden, in_dim, out);
    case FimKind::kGdcn: {
      const std::size_t per_layer =
          spec.gdcn_rank == 0
              ? 2 * (in_dim * in_dim + in_dim)
              : 2 * (in_dim * spec.gdcn_rank + spec.gdcn_rank * in_dim + in_dim);
      return spec.gdcn_layers * per_layer + in_dim * out + out;
    }
    case FimKind::kMasknet: {
      const std::size_t h = spec.masknet_hidden;
      const std::size_t bn = masknet_bottleneck(h, spec.masknet_reduction);
      return in_dim * bn + bn   // mask bottleneck
             + bn * h + h      // mask projection
             + in_dim * h + h  // hidden
             + 2 * h           // layer norm
             + h * out + out;  // compression
    }
    case FimKind::kMemonet: {
      const std::size_t cd = spec.memonet_code_dim;
      const std::size_t np = spec.memonet_fields.size();
      return 2 * spec.memonet_entries * cd + cd * cd + cd + np * cd * out + out;
    }
  }
  fail("fim", "unreachable kind");
}

namespace {

bool within_budget(std::size_t count, std::size_t budget) {
  const double ratio = static_cast<double>(count) / static_cast<double>(budget);
  return ratio >= 0.9 && ratio <= 1.1;
}

FimSpec check_fit(FimSpec spec, std::size_t in_dim, std::size_t budget) {
  const std::size_t count = predicted_parameter_count(spec, in_dim);
  require(within_budget(count, budget), "fim",
          std::string(fim_kind_name(spec.kind)) + " cannot reach parameter budget " +
              std::to_string(budget) + " (closest realizable count: " + std::to_string(count) +
              ")");
  return spec;
}

}  // namespace

FimSpec fit_to_budget(const FimSpec& spec, std::size_t in_dim, std::size_t budget) {
  require(budget > 0, "fim", "parameter budget must be positive");
  FimSpec best = spec;
  switch (spec.kind) {
    case FimKind::kMlp: {
      std::vector<std::size_t> base = spec.mlp_hidden;
      if (base.empty()) base = {64};
      auto widths_at = [&](double s) {
        std::vector<std::size_t> w(base.size());
        for (std::size_t i = 0; i < base.size(); ++i) {
          w[i] = std::max<std::size_t>(
              1, static_cast<std::size_t>(std::llround(static_cast<double>(base[i]) * s)));
        }
        return w;
      };
      double lo = 1e-4, hi = 1e4;
      for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (mlp_count(widths_at(mid), in_dim, spec.output_dim) < budget) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      const auto wl = widths_at(lo), wh = widths_at(hi);
      const std::size_t cl = mlp_count(wl, in_dim, spec.output_dim);
      const std::size_t ch = mlp_count(wh, in_dim, spec.output_dim);
      best.mlp_hidden = (budget - std::min(cl, budget)) <= (std::max(ch, budget) - budget) ? wl : wh;
      break;
    }
    case FimKind::kGdcn: {
      std::size_t best_diff = static_cast<std::size_t>(-1);
      for (std::size_t r = 0; r <= in_dim; ++r) {  // r == 0 is full rank
        FimSpec cand = spec;
        cand.gdcn_rank = r;
        const std::size_t count = predicted_parameter_count(cand, in_dim);
        const std::size_t diff = count > budget ? count - budget : budget - count;
        if (diff < best_diff) {
          best_diff = diff;
          best = cand;
        }
      }
      break;
    }
    case FimKind::kMasknet: {
      std::size_t lo = 1, hi = 1 << 22;
      auto count_at = [&](std::size_t h) {
        FimSpec cand = spec;
        cand.masknet_hidden = h;
        return predicted_parameter_count(cand, in_dim);
      };
      while (lo + 1 < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        (count_at(mid) < budget ? lo : hi) = mid;
      }
      const std::size_t cl = count_at(lo), ch = count_at(hi);
      best.masknet_hidden =
          (budget - std::min(cl, budget)) <= (std::max(ch, budget) - budget) ? lo : hi;
      break;
    }
    case FimKind::kMemonet: {
      const std::size_t cd = spec.memonet_code_dim;
      const std::size_t fixed = cd * cd + cd + spec.memonet_fields.size() * cd * spec.output_dim +
                                spec.output_dim;
      if (budget > fixed) {
        best.memonet_entries =
            std::max<std::size_t>(2, (budget - fixed + cd) / (2 * cd));
      } else {
        best.memonet_entries = 2;
      }
      break;
    }
  }
  best.parameter_budget = budget;
  return check_fit(best, in_dim, budget);
}

template <typename T>
std::unique_ptr<FimModule<T>> build_fim(ParamStore<T>& ps, const std::string& name,
                                        const FimSpec& raw_spec, std::size_t in_dim,
                                        const data::FeatureSchema& schema, Rng& rng) {
  require(raw_spec.output_dim > 0, "fim", "output_dim must be positive");
  FimSpec spec = raw_spec;
  if (spec.parameter_budget.has_value()) {
    spec = fit_to_budget(spec, in_dim, *spec.parameter_budget);
  }
  switch (spec.kind) {
    case FimKind::kMlp:
      return std::make_unique<MlpFim<T>>(ps, name, spec, in_dim, rng);
    case FimKind::kGdcn:
      return std::make_unique<GdcnFim<T>>(ps, name, spec, in_dim, rng);
    case FimKind::kMasknet:
      return std::make_unique<MasknetFim<T>>(ps, name, spec, in_dim, rng);
    case FimKind::kMemonet:
      return std::make_unique<MemonetFim<T>>(ps, name, spec, schema, rng);
  }
  fail("fim", "unreachable kind");
}

template std::unique_ptr<FimModule<float>> build_fim<float>(ParamStore<float>&,
                                                            const std::string&, const FimSpec&,
                                                            std::size_t,
                                                            const data::FeatureSchema&, Rng&);
template std::unique_ptr<FimModule<double>> build_fim<double>(ParamStore<double>&,
                                                              const std::string&, const FimSpec&,
                                                              std::size_t,
                                                              const data::FeatureSchema&, Rng&);

}  // namespace dtnlab::fim
