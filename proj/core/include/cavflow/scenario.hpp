#pragma once

#include <filesystem>
#include <string>

#include "cavflow/config.hpp"

namespace cavflow {

/// Parses a scenario document. Absent fields take the built-in defaults; unknown fields, type
/// mismatches and invalid values raise ConfigError naming the offending path.
ScenarioConfig parse_scenario(const std::string& text, const std::string& origin = "<input>");
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Complete document for `scenario` (every field explicit, flows in veh/s so values round-trip).
std::string scenario_to_json(const ScenarioConfig& scenario);

}  // namespace cavflow
