#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "mentor/rounds/config.hpp"

namespace mentor {

// Reads a TOML experiment file over the built-in defaults. Unknown keys are
// configuration errors. Relative paths resolve against the file's directory,
// then the source tree.
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Overlay of a parsed table (as JSON) onto defaults, key by key.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& overlay,
                            const std::string& where = "");

// Applies a training profile: its learning rates replace the current ones.
void apply_profile(ExperimentConfig& config, const std::string& profile);

}  // namespace mentor
