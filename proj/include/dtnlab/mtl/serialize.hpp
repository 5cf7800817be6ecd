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

#include <json.hpp>

#include "dtnlab/mtl/model.hpp"

namespace dtnlab::mtl {

nlohmann::json fim_spec_to_json(const fim::FimSpec& spec);
fim::FimSpec fim_spec_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace dtnlab::mtl
