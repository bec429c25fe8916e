#include "kipg/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "kipg/errors.hpp"

namespace kipg::jsonl {

void for_each_record(const std::filesystem::path& path,
                     const std::function<void(std::size_t, const Json&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path.string());

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json record = Json::parse(line, nullptr, false);
    if (record.is_discarded()) {
      throw ParseError("malformed JSON record in " + path.filename().string(),
                       line_no);
    }
    fn(line_no, record);
  }
}

std::vector<Json> read_all(const std::filesystem::path& path) {
  std::vector<Json> records;
  for_each_record(path, [&](std::size_t, const Json& r) { records.push_back(r); });
  return records;
}

std::string render(const std::vector<Json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void write_all(const std::filesystem::path& path, const std::vector<Json>& records) {
  write_text(path, render(records));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open file for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw ParseError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace kipg::jsonl
