#pragma once

#include <string>

#include <json.hpp>

#include "decreg/heads.hpp"

namespace decreg {

nlohmann::json scheme_to_json(const SchemePtr& scheme);
SchemePtr scheme_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json normalizer_to_json(const NormalizerStats& stats);
NormalizerStats normalizer_from_json(const nlohmann::json& j);

// Flat versioned key->tensor container: a JSON header with the architecture
// config followed by raw little-endian 64-bit floats per named tensor.
void save_checkpoint(const RegressionModel& model, const std::string& path);
RegressionModel load_checkpoint(const std::string& path);

}  // namespace decreg
