#pragma once

#include <string>

#include <json.hpp>

#include "deepgp/model.hpp"

namespace deepgp {

/// Version written by this build. Files with a larger version are rejected.
inline constexpr int kModelFormatVersion = 1;

/// Self-describing JSON document: format_version, family, config, schema,
/// transforms, training metadata and the family's parameters. Doubles are
/// written in shortest round-trip decimal form, so a reload is exact.
nlohmann::json model_to_json(const FittedModel& model);

/// Throws FormatError on a missing or newer format_version or a malformed
/// document.
FittedModel model_from_json(const nlohmann::json& doc);

void save_model(const FittedModel& model, const std::string& path);
FittedModel load_model(const std::string& path);

}  // namespace deepgp
