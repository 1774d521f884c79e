#pragma once

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

namespace coat::tools {

/// Reads the TOML subset used by run configs: [table] and [a.b] headers, bare or quoted keys,
/// basic/literal strings, integers, floats, booleans and single-line arrays of those.
/// Errors throw ConfigError naming the line.
nlohmann::json parse_toml(std::string_view text);
nlohmann::json load_toml(const std::filesystem::path& path);

}  // namespace coat::tools
