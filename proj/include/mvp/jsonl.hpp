#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mvp::jsonl {

using nlohmann::json;

// Calls `fn(record, line_number)` for every non-blank line. Throws
// ParseError naming the line on malformed JSON.
void for_each(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn);

std::vector<json> read(const std::filesystem::path& path);

void write(const std::filesystem::path& path, const std::vector<json>& records);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace mvp::jsonl
