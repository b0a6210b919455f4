#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace mentor {

namespace fs = std::filesystem;
using Json = nlohmann::json;

std::string read_file(const fs::path& path);
// Writes through a sibling temp file and renames, so readers never see a
// half-written artifact.
void write_file(const fs::path& path, std::string_view contents);

Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& value);

// Calls `on_line` for each non-blank line; a malformed line raises ParseError
// carrying the 1-based line number.
void read_jsonl(const fs::path& path,
                const std::function<void(std::size_t line_no, const Json&)>& on_line);

enum class LogLevel { debug, info, warn, error };
void set_log_level(LogLevel level);
void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log(LogLevel::info, m); }
inline void log_warn(std::string_view m) { log(LogLevel::warn, m); }
inline void log_debug(std::string_view m) { log(LogLevel::debug, m); }

}  // namespace mentor
