#include "mvp/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "mvp/error.hpp"

namespace mvp::jsonl {

void for_each(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    fn(record, line_no);
  }
}

std::vector<json> read(const std::filesystem::path& path) {
  std::vector<json> out;
  for_each(path, [&](const json& r, std::size_t) { out.push_back(r); });
  return out;
}

void write(const std::filesystem::path& path, const std::vector<json>& records) {
  std::string content;
  for (const json& r : records) {
    content += r.dump();
    content += '\n';
  }
  write_file(path, content);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace mvp::jsonl
