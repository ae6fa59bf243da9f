#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvp/answer.hpp"
#include "mvp/corpus.hpp"

namespace mvp::parse {

enum class Status { kCompliant, kPartial, kNonCompliant };

std::string to_string(Status s);
Status status_from_string(std::string_view s);

struct ExtractionResult {
  Status status = Status::kNonCompliant;
  std::optional<ParsedAnswer> answer;
  // Byte range [first, second) of the accepted JSON object in the raw text.
  std::optional<std::pair<std::size_t, std::size_t>> json_span;

  nlohmann::json to_json() const;
  static ExtractionResult from_json(const nlohmann::json& j);

  bool operator==(const ExtractionResult&) const = default;
};

struct DiseaseClass {
  std::string id;
  std::string label;
  std::vector<std::string> synonyms;
  std::vector<std::string> abbreviations;
};

// The configured disease classes plus the implicit Other class.
class ClassSet {
 public:
  ClassSet() = default;
  explicit ClassSet(std::vector<DiseaseClass> classes);

  // Classes for `ids`, taking labels and synonyms from the term list.
  static ClassSet from_terms(const std::vector<corpus::TermEntry>& terms, const std::vector<std::string>& ids,
                             const std::map<std::string, std::vector<std::string>>& abbreviations = {});

  const std::vector<DiseaseClass>& classes() const { return classes_; }
  std::vector<std::string> ids() const;
  // ids() followed by Other.
  std::vector<std::string> ids_with_other() const;
  bool is_valid_label(std::string_view label) const;
  const DiseaseClass* find(std::string_view id) const;
  std::string display_label(std::string_view id) const;

  nlohmann::json to_json() const;
  static ClassSet from_json(const nlohmann::json& j);

  // Class ids whose label, synonym or abbreviation occurs as a whole-word
  // phrase in the normalized text.
  std::vector<std::string> mentioned(std::string_view normalized) const;
  // Class id whose name equals the normalized text, if any.
  std::optional<std::string> exact(std::string_view normalized) const;

 private:
  std::vector<DiseaseClass> classes_;
  std::vector<std::pair<std::string, std::size_t>> names_;  // normalized name -> class index
};

// The four rare diseases used throughout the experiments.
ClassSet default_rare_disease_classes();

// Case-folds and replaces punctuation with spaces; words joined by one space.
std::string normalize_label_text(std::string_view text);

// true/false, "yes"/"no" (any case) and 1/0; anything else is nullopt.
std::optional<bool> interpret_identification(const nlohmann::json& value);

std::string normalize_disease_label(std::string_view text, const ClassSet& classes);

// Finds the first balanced-brace substring that parses as a JSON object and
// classifies it.
ExtractionResult extract_json(std::string_view raw_text, const ClassSet& classes, const AnswerKeys& keys = {});

struct ComplianceRecord {
  std::string backend_id;
  std::size_t total = 0;
  std::size_t failures = 0;
  double compliance_rate = 0.0;

  // Rate as a percentage with one decimal, e.g. "96.8%".
  std::string percent() const;
  nlohmann::json to_json() const;
};

struct ComplianceReport {
  std::vector<ComplianceRecord> per_backend;
  ComplianceRecord overall;

  std::string to_table() const;
  nlohmann::json to_json() const;
};

ComplianceReport compliance_report(const std::vector<std::pair<std::string, std::vector<Status>>>& results);
ComplianceReport compliance_report_from_counts(
    const std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>>& totals_and_failures);

std::string format_percent(double fraction);

}  // namespace mvp::parse
