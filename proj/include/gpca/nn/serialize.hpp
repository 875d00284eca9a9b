#pragma once

#include <string>

#include "json.hpp"

#include "gpca/nn/train.hpp"

namespace gpca::nn {

nlohmann::json config_to_json(const TinyCnnConfig& config);

/// Missing keys keep their defaults; unknown keys raise ConfigError.
TinyCnnConfig config_from_json(const nlohmann::json& j);

nlohmann::json sgd_to_json(const SgdConfig& sgd);
/// Same strictness as config_from_json; validates the result.
SgdConfig sgd_from_json(const nlohmann::json& j);

/// Model file: JSON object {"format", "config", "params"}.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace gpca::nn
