#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mvp::corpus {

struct Document {
  std::string doc_id;
  std::string text;

  bool operator==(const Document&) const = default;
};

struct TermEntry {
  std::string disease_id;
  std::string preferred_label;
  std::vector<std::string> synonyms;

  // Normalized matching keys: the preferred label followed by each synonym,
  // duplicates removed, order of first appearance kept.
  std::vector<std::string> match_keys() const;

  bool operator==(const TermEntry&) const = default;
};

// Gold annotation of one document.
struct GoldLabel {
  bool identification = false;
  std::string disease_id;

  bool operator==(const GoldLabel&) const = default;
};

using GoldTable = std::map<std::string, GoldLabel>;

// Term key -> doc ids containing it. Posting lists are strictly sorted.
struct InvertedIndex {
  std::map<std::string, std::vector<std::string>> postings;
  // Total whole-word occurrences of each term across the corpus.
  std::map<std::string, std::size_t> mention_counts;
  std::size_t corpus_size = 0;

  std::size_t doc_frequency(const std::string& term) const;

  nlohmann::json to_json() const;
  static InvertedIndex from_json(const nlohmann::json& j);

  bool operator==(const InvertedIndex&) const = default;
};

struct FilterConfig {
  std::size_t min_term_chars = 4;
  double max_doc_frequency = 0.005;

  void validate() const;
};

struct WindowRef {
  std::string doc_id;
  std::string disease_id;
  int window_words = 0;

  // "<doc_id>#<disease_id>@<window_words>"
  std::string id() const;
  static WindowRef parse(const std::string& id);

  auto operator<=>(const WindowRef&) const = default;
};

struct ContextWindow {
  WindowRef ref;
  std::string text;
  std::size_t word_count = 0;
  std::optional<bool> gold_identification;
  std::optional<std::string> gold_disease;

  nlohmann::json to_json() const;
  static ContextWindow from_json(const nlohmann::json& j);

  bool operator==(const ContextWindow&) const = default;
};

inline const std::vector<int> kDefaultWindowSizes = {32, 64, 128, 256};

std::vector<Document> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const std::vector<Document>& docs);

std::vector<TermEntry> load_term_list(const std::filesystem::path& path);
std::vector<TermEntry> parse_term_list(const std::string& content);

GoldTable load_gold(const std::filesystem::path& path);
void save_gold(const std::filesystem::path& path, const GoldTable& gold);

// Whole-word, case-insensitive phrase matching of every term key against
// every document. `threads` == 0 uses the hardware concurrency. The result is
// independent of the thread count.
InvertedIndex build_inverted_index(const std::vector<Document>& corpus, const std::vector<TermEntry>& terms,
                                   unsigned threads = 0);

// Drops terms shorter than `min_term_chars` characters, then terms whose
// document frequency is strictly above `max_doc_frequency * corpus_size`.
InvertedIndex apply_weak_supervision_filters(const InvertedIndex& index, const FilterConfig& cfg);

// Matched-document count of each disease: union over its term keys present in
// the index.
std::map<std::string, std::size_t> disease_doc_counts(const InvertedIndex& index,
                                                      const std::vector<TermEntry>& terms);

std::vector<std::string> select_top_diseases(const InvertedIndex& index, const std::vector<TermEntry>& terms,
                                             std::size_t k);

// Word span [first, last) of a `size`-word window centered on the mention
// occupying words [mention, mention + mention_len) in a document of
// `doc_words` words. When centering clips at an edge the window spills to the
// other side.
std::pair<std::size_t, std::size_t> center_window(std::size_t doc_words, std::size_t mention,
                                                  std::size_t mention_len, std::size_t size);

std::vector<ContextWindow> extract_context_windows(const std::vector<Document>& corpus, const InvertedIndex& index,
                                                   const std::vector<TermEntry>& terms,
                                                   const std::vector<std::string>& disease_ids,
                                                   const std::vector<int>& sizes, const GoldTable* gold = nullptr);

// Window around the first mention of any of `keys` in one document.
ContextWindow extract_window(const Document& doc, const std::string& disease_id,
                             const std::vector<std::string>& keys, int size);

}  // namespace mvp::corpus
