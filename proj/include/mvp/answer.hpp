#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace mvp {

// Catch-all classification label for predictions outside the configured
// disease classes.
inline const std::string kOtherLabel = "Other";

enum class AnswerSource { kAuto, kHuman };

struct ParsedAnswer {
  bool identification = false;
  std::string disease_label = kOtherLabel;
  AnswerSource source = AnswerSource::kAuto;

  nlohmann::json to_json() const;
  static ParsedAnswer from_json(const nlohmann::json& j);

  bool operator==(const ParsedAnswer&) const = default;
};

// Key names of the expected JSON answer object.
struct AnswerKeys {
  std::string identification = "answer";
  std::string disease = "disease";

  bool operator==(const AnswerKeys&) const = default;
};

}  // namespace mvp
