#pragma once

// nlohmann::json bindings for configuration types. Missing keys take the
// struct's default; unknown keys are rejected so typos surface as errors.

#include <json.hpp>

#include "lclab/model.hpp"

namespace lclab {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const ToyModelOptions& o);
void from_json(const nlohmann::json& j, ToyModelOptions& o);

// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* context);

}  // namespace lclab
