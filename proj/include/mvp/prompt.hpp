#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mvp/answer.hpp"
#include "mvp/corpus.hpp"
#include "mvp/error.hpp"

namespace mvp::prompt {

enum class Family { kLlama2, kAlpaca, kVicuna, kCustom };
enum class Mode { kIp, kCot };

std::string to_string(Family f);
std::string to_string(Mode m);
// Accepts "llama2-style" and the short form "llama2".
Family family_from_string(std::string_view s);
Mode mode_from_string(std::string_view s);

// One-shot worked example. `reasoning` holds the chain-of-thought steps shown
// before the exemplar answer.
struct Exemplar {
  std::string question;
  std::string reasoning;

  bool operator==(const Exemplar&) const = default;
};

struct PromptTemplate {
  std::string id;
  Family family = Family::kCustom;
  Mode mode = Mode::kIp;
  std::string body;
  std::string task_description;
  std::optional<Exemplar> cot_exemplar;
  std::string json_exemplar;
  AnswerKeys keys;

  bool operator==(const PromptTemplate&) const = default;
};

// Placeholders a template body may reference, written `$NAME$`.
inline const std::set<std::string> kPlaceholders = {"TASK_DESCRIPTION", "EXAMPLE_QUESTION", "EXPLANATION", "JSON",
                                                    "CONTEXT"};

struct RenderedPrompt {
  std::string text;
  std::string template_id;
  corpus::WindowRef window_ref;
  std::string content_hash;

  bool operator==(const RenderedPrompt&) const = default;
};

class TemplateError : public InvalidArgument {
 public:
  TemplateError(const std::string& what, std::vector<std::string> names)
      : InvalidArgument(what), names_(std::move(names)) {}
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

// Names of all `$NAME$` placeholders in `body`, in order of appearance.
std::vector<std::string> find_placeholders(std::string_view body);

// Single-pass substitution; substituted values are never rescanned. In IP
// mode, body lines referencing $EXPLANATION$ are dropped.
RenderedPrompt render_prompt(const PromptTemplate& tmpl, const corpus::ContextWindow& window);

std::vector<std::string> validate_template(const PromptTemplate& tmpl);

// Front matter (YAML between `---` lines) followed by the body.
PromptTemplate parse_template(const std::string& content);
PromptTemplate load_template(const std::filesystem::path& path);
std::string serialize_template(const PromptTemplate& tmpl);

const std::map<Family, PromptTemplate>& builtin_templates();

// A builtin family name, or a path to a template file.
PromptTemplate resolve_template(const std::string& name_or_path);

}  // namespace mvp::prompt
