#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"

#include "hhmm/core.hpp"
#include "hhmm/dataset.hpp"

namespace hhmm {

inline constexpr int kModelFormatVersion = 1;

// A model file: parameters plus the feature schema they were trained on and
// the states designated asleep.
struct ModelDocument {
    ModelParameters params;
    std::vector<FeatureSpec> features;  // model order: continuous, then discrete
    std::vector<int> sleep_states;
};

nlohmann::json model_to_json(const ModelDocument& doc);
// Throws DataError on version mismatch, malformed content, or a model that
// fails validate_model.
ModelDocument model_from_json(const nlohmann::json& doc);

void save_model(const std::filesystem::path& path, const ModelDocument& doc);
ModelDocument load_model(const std::filesystem::path& path);

}  // namespace hhmm
