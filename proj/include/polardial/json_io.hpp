#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace polardial {

using json = nlohmann::json;

std::vector<json> read_jsonl(const std::filesystem::path& path);

// Writes one compact object per line. Replaces the file atomically.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::string read_text(const std::filesystem::path& path);

}  // namespace polardial
