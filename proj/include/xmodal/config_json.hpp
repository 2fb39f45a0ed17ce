// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "json.hpp"
#include "xmodal/dataio.hpp"
#include "xmodal/model.hpp"
#include "xmodal/train.hpp"

namespace xmodal {

// nlohmann ADL hooks. from_json accepts partial objects: absent keys keep the
// value already present in the target, so a config file may override any
// subset of the defaults.

void to_json(nlohmann::json& j, const EncoderConfig& cfg);
void from_json(const nlohmann::json& j, EncoderConfig& cfg);

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

void to_json(nlohmann::json& j, const SyntheticConfig& cfg);
void from_json(const nlohmann::json& j, SyntheticConfig& cfg);

}  // namespace xmodal
