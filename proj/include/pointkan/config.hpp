#pragma once

#include <filesystem>
#include <string>

#include "pointkan/model.hpp"

namespace pointkan {

/// Flat `key = value` text with `#` comments. Unknown keys are errors.
ModelConfig parse_config_text(const std::string& text);
ModelConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse(config_to_text(c)) reproduces c exactly.
std::string config_to_text(const ModelConfig& cfg);

}  // namespace pointkan
