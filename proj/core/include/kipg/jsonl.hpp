#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace kipg::jsonl {

using Json = nlohmann::ordered_json;

// Calls fn(line_number, record) for every non-blank line. Throws ParseError
// (with the 1-based line number) on malformed JSON or an unreadable file.
void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const Json&)>& fn);

std::vector<Json> read_all(const std::filesystem::path& path);

// One compact record per line, UTF-8, key order as given. Writing the same
// records always produces the same bytes.
std::string render(const std::vector<Json>& records);
void write_all(const std::filesystem::path& path, const std::vector<Json>& records);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace kipg::jsonl
