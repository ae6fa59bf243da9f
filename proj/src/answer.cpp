#include "mvp/answer.hpp"

#include "mvp/error.hpp"

namespace mvp {

nlohmann::json ParsedAnswer::to_json() const {
  return {{"answer", identification ? "yes" : "no"},
          {"disease", disease_label},
          {"source", source == AnswerSource::kHuman ? "human" : "auto"}};
}

ParsedAnswer ParsedAnswer::from_json(const nlohmann::json& j) {
  ParsedAnswer a;
  try {
    const auto& ans = j.at("answer");
    if (ans.is_boolean()) {
      a.identification = ans.get<bool>();
    } else {
      const auto s = ans.get<std::string>();
      if (s != "yes" && s != "no") throw ParseError("answer must be \"yes\" or \"no\"");
      a.identification = s == "yes";
    }
    a.disease_label = j.at("disease").get<std::string>();
    a.source = j.value("source", std::string("auto")) == "human" ? AnswerSource::kHuman : AnswerSource::kAuto;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid answer: ") + e.what());
  }
  return a;
}

}  // namespace mvp
