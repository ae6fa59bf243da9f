#include "mvp/parse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "mvp/error.hpp"
#include "mvp/text.hpp"

namespace mvp::parse {

using nlohmann::json;

std::string to_string(Status s) {
  switch (s) {
    case Status::kCompliant:
      return "compliant";
    case Status::kPartial:
      return "partial";
    case Status::kNonCompliant:
      return "non-compliant";
  }
  return "non-compliant";
}

Status status_from_string(std::string_view s) {
  if (s == "compliant") return Status::kCompliant;
  if (s == "partial") return Status::kPartial;
  if (s == "non-compliant") return Status::kNonCompliant;
  throw ParseError("unknown extraction status '" + std::string(s) + "'");
}

json ExtractionResult::to_json() const {
  json j{{"status", to_string(status)}};
  if (answer) j["answer"] = answer->to_json();
  if (json_span) j["json_span"] = {json_span->first, json_span->second};
  return j;
}

ExtractionResult ExtractionResult::from_json(const json& j) {
  ExtractionResult r;
  r.status = status_from_string(j.at("status").get<std::string>());
  if (j.contains("answer")) r.answer = ParsedAnswer::from_json(j.at("answer"));
  if (j.contains("json_span")) r.json_span = {j.at("json_span").at(0).get<std::size_t>(), j.at("json_span").at(1).get<std::size_t>()};
  return r;
}

std::string normalize_label_text(std::string_view text) {
  const std::u32string cps = text::decode_utf8(text::fold_case(text));
  std::u32string cleaned;
  cleaned.reserve(cps.size());
  for (char32_t c : cps) cleaned.push_back(text::is_punct(c) || text::is_space(c) ? U' ' : c);
  std::vector<std::string> words;
  for (const auto& t : text::tokenize(text::encode_utf8(cleaned))) {
    if (!t.norm.empty()) words.push_back(t.norm);
  }
  return text::join(words, " ");
}

ClassSet::ClassSet(std::vector<DiseaseClass> classes) : classes_(std::move(classes)) {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    if (c.id.empty()) throw InvalidArgument("disease class with empty id");
    if (c.id == kOtherLabel) throw InvalidArgument("'Other' is reserved and cannot be a configured class");
    if (!ids.insert(c.id).second) throw DuplicateError("duplicate disease class '" + c.id + "'");
    std::vector<std::string> names = {c.id, c.label};
    names.insert(names.end(), c.synonyms.begin(), c.synonyms.end());
    names.insert(names.end(), c.abbreviations.begin(), c.abbreviations.end());
    for (const auto& n : names) {
      std::string key = normalize_label_text(n);
      if (!key.empty()) names_.emplace_back(std::move(key), i);
    }
  }
}

ClassSet ClassSet::from_terms(const std::vector<corpus::TermEntry>& terms, const std::vector<std::string>& ids,
                              const std::map<std::string, std::vector<std::string>>& abbreviations) {
  std::vector<DiseaseClass> classes;
  for (const auto& id : ids) {
    auto it = std::find_if(terms.begin(), terms.end(), [&](const auto& t) { return t.disease_id == id; });
    if (it == terms.end()) throw NotFoundError("disease '" + id + "' is not in the term list");
    DiseaseClass c{id, it->preferred_label, it->synonyms, {}};
    if (auto a = abbreviations.find(id); a != abbreviations.end()) c.abbreviations = a->second;
    classes.push_back(std::move(c));
  }
  return ClassSet(std::move(classes));
}

std::vector<std::string> ClassSet::ids() const {
  std::vector<std::string> out;
  for (const auto& c : classes_) out.push_back(c.id);
  return out;
}

std::vector<std::string> ClassSet::ids_with_other() const {
  auto out = ids();
  out.push_back(kOtherLabel);
  return out;
}

bool ClassSet::is_valid_label(std::string_view label) const { return label == kOtherLabel || find(label) != nullptr; }

const DiseaseClass* ClassSet::find(std::string_view id) const {
  for (const auto& c : classes_) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::string ClassSet::display_label(std::string_view id) const {
  const DiseaseClass* c = find(id);
  return c == nullptr ? std::string(id) : c->label;
}

json ClassSet::to_json() const {
  json arr = json::array();
  for (const auto& c : classes_) {
    arr.push_back({{"id", c.id}, {"label", c.label}, {"synonyms", c.synonyms}, {"abbreviations", c.abbreviations}});
  }
  return arr;
}

ClassSet ClassSet::from_json(const json& j) {
  std::vector<DiseaseClass> classes;
  for (const auto& c : j) {
    classes.push_back({c.at("id").get<std::string>(), c.value("label", c.at("id").get<std::string>()),
                       c.value("synonyms", std::vector<std::string>{}),
                       c.value("abbreviations", std::vector<std::string>{})});
  }
  return ClassSet(std::move(classes));
}

std::vector<std::string> ClassSet::mentioned(std::string_view normalized) const {
  const std::string padded = " " + std::string(normalized) + " ";
  std::set<std::size_t> hits;
  for (const auto& [name, idx] : names_) {
    if (padded.find(" " + name + " ") != std::string::npos) hits.insert(idx);
  }
  std::vector<std::string> out;
  for (std::size_t i : hits) out.push_back(classes_[i].id);
  return out;
}

std::optional<std::string> ClassSet::exact(std::string_view normalized) const {
  for (const auto& [name, idx] : names_) {
    if (name == normalized) return classes_[idx].id;
  }
  return std::nullopt;
}

ClassSet default_rare_disease_classes() {
  return ClassSet({
      {"B", "Babesiosis", {"babesia infection"}, {}},
      {"GCA", "Giant Cell Arteritis", {"temporal arteritis", "cranial arteritis", "Horton disease"}, {"GCA"}},
      {"GVHD", "Graft Versus Host Disease", {"graft-versus-host disease", "graft vs host disease"}, {"GVHD", "GVH"}},
      {"COP",
       "Cryptogenic Organizing Pneumonia",
       {"cryptogenic organising pneumonia", "bronchiolitis obliterans organizing pneumonia"},
       {"COP", "BOOP"}},
  });
}

std::optional<bool> interpret_identification(const json& value) {
  if (value.is_boolean()) return value.get<bool>();
  if (value.is_number_integer() || value.is_number_unsigned()) {
    const auto v = value.get<long long>();
    if (v == 1) return true;
    if (v == 0) return false;
    return std::nullopt;
  }
  if (value.is_number_float()) {
    const double v = value.get<double>();
    if (v == 1.0) return true;
    if (v == 0.0) return false;
    return std::nullopt;
  }
  if (value.is_string()) {
    const std::string s = text::fold_case(text::trim(value.get<std::string>()));
    if (s == "yes") return true;
    if (s == "no") return false;
  }
  return std::nullopt;
}

std::string normalize_disease_label(std::string_view label, const ClassSet& classes) {
  const std::string norm = normalize_label_text(label);
  if (norm.empty()) return kOtherLabel;
  if (auto id = classes.exact(norm)) return *id;
  const auto hits = classes.mentioned(norm);
  return hits.size() == 1 ? hits.front() : kOtherLabel;
}

namespace {

// End (exclusive) of the balanced object starting at `open`, honoring JSON
// string quoting, or npos.
std::size_t balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

const json* find_key(const json& obj, const std::string& key) {
  if (auto it = obj.find(key); it != obj.end()) return &*it;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (text::iequals(it.key(), key)) return &*it;
  }
  return nullptr;
}

}  // namespace

ExtractionResult extract_json(std::string_view raw, const ClassSet& classes, const AnswerKeys& keys) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const std::size_t end = balanced_end(raw, open);
    if (end == std::string_view::npos) continue;
    json obj = json::parse(raw.substr(open, end - open), nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) continue;

    ExtractionResult result;
    const json* ident = find_key(obj, keys.identification);
    const auto decision = ident ? interpret_identification(*ident) : std::nullopt;
    if (!decision) return result;

    ParsedAnswer answer;
    answer.identification = *decision;
    const json* disease = find_key(obj, keys.disease);
    if (disease != nullptr && disease->is_string() && !text::trim(disease->get<std::string>()).empty()) {
      answer.disease_label = normalize_disease_label(disease->get<std::string>(), classes);
      result.status = Status::kCompliant;
    } else {
      answer.disease_label = kOtherLabel;
      result.status = Status::kPartial;
    }
    result.answer = std::move(answer);
    result.json_span = {{open, end}};
    return result;
  }
  return {};
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", fraction * 100.0);
  return buf;
}

std::string ComplianceRecord::percent() const { return format_percent(compliance_rate); }

json ComplianceRecord::to_json() const {
  return {{"backend_id", backend_id}, {"total", total}, {"failures", failures}, {"compliance_rate", compliance_rate}};
}

std::string ComplianceReport::to_table() const {
  std::size_t width = overall.backend_id.size();
  for (const auto& r : per_backend) width = std::max(width, r.backend_id.size());
  std::ostringstream out;
  auto row = [&](const std::string& name, const std::string& fails, const std::string& rate) {
    out << name << std::string(width - std::min(width, name.size()) + 2, ' ') << std::string(8 - std::min<std::size_t>(8, fails.size()), ' ')
        << fails << "  " << std::string(10 - std::min<std::size_t>(10, rate.size()), ' ') << rate << '\n';
  };
  row("Model", "No JSON", "Compliance");
  for (const auto& r : per_backend) row(r.backend_id, std::to_string(r.failures), r.percent());
  row(overall.backend_id, std::to_string(overall.failures), overall.percent());
  return out.str();
}

json ComplianceReport::to_json() const {
  json j{{"per_backend", json::array()}, {"overall", overall.to_json()}};
  for (const auto& r : per_backend) j["per_backend"].push_back(r.to_json());
  return j;
}

ComplianceReport compliance_report_from_counts(
    const std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>>& totals_and_failures) {
  if (totals_and_failures.empty()) throw InvalidArgument("compliance report needs at least one backend");
  ComplianceReport report;
  report.overall.backend_id = "Overall";
  for (const auto& [id, tf] : totals_and_failures) {
    const auto [total, failures] = tf;
    if (total == 0) throw InvalidArgument("backend '" + id + "' has no results");
    if (failures > total) throw InvalidArgument("backend '" + id + "' has more failures than results");
    ComplianceRecord r{id, total, failures, 1.0 - static_cast<double>(failures) / static_cast<double>(total)};
    report.overall.total += total;
    report.overall.failures += failures;
    report.per_backend.push_back(std::move(r));
  }
  report.overall.compliance_rate =
      1.0 - static_cast<double>(report.overall.failures) / static_cast<double>(report.overall.total);
  return report;
}

ComplianceReport compliance_report(const std::vector<std::pair<std::string, std::vector<Status>>>& results) {
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> counts;
  for (const auto& [id, statuses] : results) {
    const auto failures = static_cast<std::size_t>(std::count(statuses.begin(), statuses.end(), Status::kNonCompliant));
    counts.push_back({id, {statuses.size(), failures}});
  }
  return compliance_report_from_counts(counts);
}

}  // namespace mvp::parse
