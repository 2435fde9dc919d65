#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace polardial {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

std::string sha256_file(const std::filesystem::path& path);

// Collapses whitespace runs to one space and trims both ends.
std::string collapse_whitespace(std::string_view text);

// Canonical serialization used for content addressing: object keys sorted,
// string values whitespace-collapsed, compact separators.
std::string canonical_json(const nlohmann::json& value);

}  // namespace polardial
