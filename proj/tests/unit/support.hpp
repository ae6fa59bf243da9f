#pragma once

#include <atomic>
#include <filesystem>
#include <algorithm>
#include <cstdio>
#include <random>
#include <string>

#include <unistd.h>

namespace mvp::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mvp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string fixed_clock() { return "2024-01-01T00:00:00Z"; }

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(MVP_FIXTURE_DIR) / name; }
inline std::filesystem::path data_file(const std::string& name) { return std::filesystem::path(MVP_DATA_DIR) / name; }

}  // namespace mvp::testing

#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "mvp/corpus.hpp"

namespace mvp::testing {

// `n` invented diseases with a two-word label, a one-word synonym and a
// three-letter abbreviation. Names are built from syllables that never occur
// in the synthetic filler vocabulary.
inline std::vector<corpus::TermEntry> invented_terms(std::size_t n) {
  static const char* a[] = {"zor", "kel", "vab", "quin", "dra", "mux", "pry", "tov", "wel", "jaz"};
  static const char* b[] = {"thax", "ombr", "ilix", "yuda", "esco"};
  std::vector<corpus::TermEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string stem = std::string(a[i % 10]) + b[(i / 10) % 5];
    std::string cap = stem;
    cap[0] = static_cast<char>(std::toupper(cap[0]));
    corpus::TermEntry e;
    char id[8];
    std::snprintf(id, sizeof(id), "D%02zu", i);
    e.disease_id = id;
    e.preferred_label = cap + " Syndrome";
    e.synonyms = {stem + "osis", std::string(1, static_cast<char>('A' + i % 26)) + stem.substr(0, 2)};
    out.push_back(std::move(e));
  }
  return out;
}

// Reference matcher written independently of the text module: ASCII only,
// splits on whitespace, strips ASCII punctuation at both ends of a word.
inline std::vector<std::string> naive_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) {
    std::size_t b = 0, e = w.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
    std::string x = w.substr(b, e - b);
    for (auto& c : x) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(x);
  }
  return out;
}

inline std::map<std::string, std::vector<std::string>> naive_index(const std::vector<corpus::Document>& docs,
                                                                   const std::vector<corpus::TermEntry>& terms) {
  std::map<std::string, std::set<std::string>> found;
  for (const auto& t : terms) {
    std::vector<std::string> names = {t.preferred_label};
    names.insert(names.end(), t.synonyms.begin(), t.synonyms.end());
    for (const auto& name : names) {
      const auto key_words = naive_words(name);
      std::string key;
      for (const auto& w : key_words) key += (key.empty() ? "" : " ") + w;
      for (const auto& d : docs) {
        const auto words = naive_words(d.text);
        for (std::size_t i = 0; i + key_words.size() <= words.size(); ++i) {
          if (std::equal(key_words.begin(), key_words.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
            found[key].insert(d.doc_id);
            break;
          }
        }
      }
    }
  }
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [key, docs] : found) out[key].assign(docs.begin(), docs.end());
  return out;
}

}  // namespace mvp::testing
