// Copyright 2026 The dtnlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not
// use this file except in compliance with the License. You may obtain a copy
// of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include <cstring>
#include <fstream>

#include "dtnlab/core/error.hpp"
#include "dtnlab/mtl/serialize.hpp"

namespace dtnlab::mtl {

using nlohmann::json;

json fim_spec_to_json(const fim::FimSpec& spec) {
  json j;
  j["kind"] = fim::fim_kind_name(spec.kind);
  j["output_dim"] = spec.output_dim;
  switch (spec.kind) {
    case fim::FimKind::kMlp:
      j["mlp_hidden"] = spec.mlp_hidden;
      break;
    case fim::FimKind::kGdcn:
      j["gdcn_layers"] = spec.gdcn_layers;
      j["gdcn_rank"] = spec.gdcn_rank;
      break;
    case fim::FimKind::kMasknet:
      j["masknet_hidden"] = spec.masknet_hidden;
      j["masknet_reduction"] = spec.masknet_reduction;
      break;
    case fim::FimKind::kMemonet:
      j["memonet_entries"] = spec.memonet_entries;
      j["memonet_code_dim"] = spec.memonet_code_dim;
      j["memonet_fields"] = spec.memonet_fields;
      break;
  }
  if (spec.parameter_budget.has_value()) j["parameter_budget"] = *spec.parameter_budget;
  return j;
}

fim::FimSpec fim_spec_from_json(const json& j) {
  fim::FimSpec spec;
  spec.kind = fim::fim_kind_from_name(j.at("kind").get<std::string>());
  spec.output_dim = j.value("output_dim", spec.output_dim);
  spec.mlp_hidden = j.value("mlp_hidden", spec.mlp_hidden);
  spec.gdcn_layers = j.value("gdcn_layers", spec.gdcn_layers);
  spec.gdcn_rank = j.value("gdcn_rank", spec.gdcn_rank);
  spec.masknet_hidden = j.value("masknet_hidden", spec.masknet_hidden);
  spec.masknet_reduction = j.value("masknet_reduction", spec.masknet_reduction);
  spec.memonet_entries = j.value("memonet_entries", spec.memonet_entries);
  spec.memonet_code_dim = j.value("memonet_code_dim", spec.memonet_code_dim);
  if (j.contains("memonet_fields")) {
    spec.memonet_fields =
        j.at("memonet_fields").get<std::vector<std::pair<std::string, std::string>>>();
  }
  if (j.contains("parameter_budget")) spec.parameter_budget = j.at("parameter_budget").get<std::size_t>();
  return spec;
}

json model_config_to_json(const ModelConfig& config) {
  json j;
  j["kind"] = arch_kind_name(config.kind);
  j["output_dim"] = config.output_dim;
  if (config.embedding_dim.has_value()) j["embedding_dim"] = *config.embedding_dim;
  j["tasks"] = json::array();
  for (const auto& t : config.tasks) {
    json jt;
    jt["name"] = t.name;
    if (t.preceding_task.has_value()) jt["preceding_task"] = *t.preceding_task;
    jt["tower_hidden"] = t.tower_hidden;
    jt["tsn_enabled"] = t.tsn_enabled;
    jt["tsn_detach"] = t.tsn_detach;
    j["tasks"].push_back(std::move(jt));
  }
  j["n_shared_experts"] = config.n_shared_experts;
  j["n_task_experts"] = config.n_task_experts;
  j["expert_hidden"] = config.expert_hidden;
  if (config.kind == ArchKind::kSfm) j["sfm_stack"] = fim_spec_to_json(config.sfm_stack);
  j["shared_fims"] = json::array();
  for (const auto& s : config.shared_fims) j["shared_fims"].push_back(fim_spec_to_json(s));
  j["task_fims"] = json::object();
  for (const auto& [name, list] : config.task_fims) {
    json arr = json::array();
    for (const auto& s : list) arr.push_back(fim_spec_to_json(s));
    j["task_fims"][name] = std::move(arr);
  }
  if (config.parameter_budget.has_value()) j["parameter_budget"] = *config.parameter_budget;
  j["init_seed"] = config.init_seed;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig config;
  config.kind = arch_kind_from_name(j.at("kind").get<std::string>());
  config.output_dim = j.value("output_dim", config.output_dim);
  if (j.contains("embedding_dim")) config.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  if (j.contains("tasks")) {
    for (const auto& jt : j.at("tasks")) {
      TaskSpec t;
      t.name = jt.at("name").get<std::string>();
      if (jt.contains("preceding_task")) {
        t.preceding_task = jt.at("preceding_task").get<std::string>();
      }
      t.tower_hidden = jt.value("tower_hidden", t.tower_hidden);
      t.tsn_enabled = jt.value("tsn_enabled", t.tsn_enabled);
      t.tsn_detach = jt.value("tsn_detach", t.tsn_detach);
      config.tasks.push_back(std::move(t));
    }
  }
  config.n_shared_experts = j.value("n_shared_experts", config.n_shared_experts);
  config.n_task_experts = j.value("n_task_experts", config.n_task_experts);
  config.expert_hidden = j.value("expert_hidden", config.expert_hidden);
  if (j.contains("sfm_stack")) config.sfm_stack = fim_spec_from_json(j.at("sfm_stack"));
  if (j.contains("shared_fims")) {
    for (const auto& js : j.at("shared_fims")) {
      config.shared_fims.push_back(fim_spec_from_json(js));
    }
  }
  if (j.contains("task_fims")) {
    for (const auto& [name, arr] : j.at("task_fims").items()) {
      std::vector<fim::FimSpec> list;
      for (const auto& js : arr) list.push_back(fim_spec_from_json(js));
      config.task_fims[name] = std::move(list);
    }
  }
  if (j.contains("parameter_budget")) {
    config.parameter_budget = j.at("parameter_budget").get<std::size_t>();
  }
  config.init_seed = j.value("init_seed", config.init_seed);
  return config;
}

namespace {

constexpr char kMagic[8] = {'D', 'T', 'N', 'L', 'C', 'K', 'P', 'T'};

template <typename T>
const char* dtype_name();
template <>
const char* dtype_name<float>() {
  return "f32";
}
template <>
const char* dtype_name<double>() {
  return "f64";
}

}  // namespace

template <typename T>
void ModelGraph<T>::save_checkpoint(const std::string& path) const {
  json header;
  header["format"] = "dtnlab-checkpoint";
  header["version"] = 1;
  header["dtype"] = dtype_name<T>();
  header["arch"] = arch_kind_name(config_.kind);
  header["config"] = model_config_to_json(config_);
  header["schema"] = json::parse(schema_.to_json());
  header["blocks"] = json::array();
  std::size_t offset = 0;
  for (std::size_t h = 0; h < params_.n_blocks(); ++h) {
    const auto& b = params_.block(h);
    json jb;
    jb["name"] = b.name;
    jb["shape"] = b.shape;
    jb["count"] = b.size();
    jb["offset"] = offset;
    offset += b.size();
    header["blocks"].push_back(std::move(jb));
  }
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "checkpoint", "cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (std::size_t h = 0; h < params_.n_blocks(); ++h) {
    const auto& b = params_.block(h);
    out.write(reinterpret_cast<const char*>(b.value.data()),
              static_cast<std::streamsize>(b.value.size() * sizeof(T)));
  }
  require(out.good(), "checkpoint", "short write to '" + path + "'");
}

template <typename T>
ModelGraph<T> ModelGraph<T>::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "checkpoint", "cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, "checkpoint",
          "'" + path + "' is not a dtnlab checkpoint");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  require(in.good(), "checkpoint", "truncated header in '" + path + "'");
  json header = json::parse(hs);
  require(header.at("dtype").get<std::string>() == dtype_name<T>(), "checkpoint",
          "dtype mismatch (checkpoint is " + header.at("dtype").get<std::string>() + ")");

  const auto schema = data::FeatureSchema::from_json(header.at("schema").dump());
  const auto config = model_config_from_json(header.at("config"));
  ModelGraph<T> m = build(config, schema);

  std::map<std::string, std::pair<std::size_t, std::size_t>> layout;  // name -> (offset, count)
  for (const auto& jb : header.at("blocks")) {
    layout[jb.at("name").get<std::string>()] = {jb.at("offset").get<std::size_t>(),
                                                jb.at("count").get<std::size_t>()};
  }
  require(layout.size() == m.params_.n_blocks(), "checkpoint",
          "block count mismatch: rebuilt model disagrees with '" + path + "'");

  const std::streampos data_begin = in.tellg();
  for (std::size_t h = 0; h < m.params_.n_blocks(); ++h) {
    auto& b = m.params_.block(h);
    auto it = layout.find(b.name);
    require(it != layout.end(), "checkpoint", "missing block '" + b.name + "'");
    require(it->second.second == b.size(), "checkpoint", "size mismatch for '" + b.name + "'");
    in.seekg(data_begin + static_cast<std::streamoff>(it->second.first * sizeof(T)));
    in.read(reinterpret_cast<char*>(b.value.data()),
            static_cast<std::streamsize>(b.size() * sizeof(T)));
    require(in.good(), "checkpoint", "truncated data for '" + b.name + "'");
  }
  return m;
}

template void ModelGraph<float>::save_checkpoint(const std::string&) const;
template void ModelGraph<double>::save_checkpoint(const std::string&) const;
template ModelGraph<float> ModelGraph<float>::load_checkpoint(const std::string&);
template ModelGraph<double> ModelGraph<double>::load_checkpoint(const std::string&);

}  // namespace dtnlab::mtl
