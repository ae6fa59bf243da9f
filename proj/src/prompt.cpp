#include "mvp/prompt.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "mvp/hash.hpp"
#include "mvp/jsonl.hpp"
#include "mvp/text.hpp"

namespace mvp::prompt {

std::string to_string(Family f) {
  switch (f) {
    case Family::kLlama2:
      return "llama2-style";
    case Family::kAlpaca:
      return "alpaca-style";
    case Family::kVicuna:
      return "vicuna-style";
    case Family::kCustom:
      return "custom";
  }
  return "custom";
}

std::string to_string(Mode m) { return m == Mode::kCot ? "cot" : "ip"; }

Family family_from_string(std::string_view s) {
  const std::string f = text::fold_case(s);
  if (f == "llama2-style" || f == "llama2") return Family::kLlama2;
  if (f == "alpaca-style" || f == "alpaca") return Family::kAlpaca;
  if (f == "vicuna-style" || f == "vicuna") return Family::kVicuna;
  if (f == "custom") return Family::kCustom;
  throw InvalidArgument("unknown template family '" + std::string(s) + "'");
}

Mode mode_from_string(std::string_view s) {
  const std::string m = text::fold_case(s);
  if (m == "ip") return Mode::kIp;
  if (m == "cot") return Mode::kCot;
  throw InvalidArgument("unknown prompt mode '" + std::string(s) + "'");
}

namespace {

bool is_name_start(char c) { return c >= 'A' && c <= 'Z'; }
bool is_name_char(char c) { return is_name_start(c) || (c >= '0' && c <= '9') || c == '_'; }

// Length of the `$NAME$` token at `i`, or 0.
std::size_t placeholder_at(std::string_view body, std::size_t i) {
  if (body[i] != '$' || i + 1 >= body.size() || !is_name_start(body[i + 1])) return 0;
  std::size_t j = i + 1;
  while (j < body.size() && is_name_char(body[j])) ++j;
  if (j >= body.size() || body[j] != '$') return 0;
  return j - i + 1;
}

std::string drop_lines_with(std::string_view body, std::string_view needle) {
  std::string out;
  std::size_t start = 0;
  while (start <= body.size()) {
    std::size_t nl = body.find('\n', start);
    const bool last = nl == std::string_view::npos;
    std::string_view line = body.substr(start, last ? std::string_view::npos : nl - start);
    if (line.find(needle) == std::string_view::npos) {
      out += line;
      if (!last) out += '\n';
    }
    if (last) break;
    start = nl + 1;
  }
  return out;
}

}  // namespace

std::vector<std::string> find_placeholders(std::string_view body) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < body.size();) {
    const std::size_t len = placeholder_at(body, i);
    if (len == 0) {
      ++i;
      continue;
    }
    names.emplace_back(body.substr(i + 1, len - 2));
    i += len;
  }
  return names;
}

RenderedPrompt render_prompt(const PromptTemplate& tmpl, const corpus::ContextWindow& window) {
  if (window.text.empty()) throw InvalidArgument("window text is empty");

  std::vector<std::string> unknown;
  for (const auto& name : find_placeholders(tmpl.body)) {
    if (!kPlaceholders.count(name) && std::find(unknown.begin(), unknown.end(), name) == unknown.end()) {
      unknown.push_back(name);
    }
  }
  if (!unknown.empty()) {
    throw TemplateError("template '" + tmpl.id + "' uses unknown placeholders: " + text::join(unknown, ", "), unknown);
  }
  if (tmpl.mode == Mode::kCot && (!tmpl.cot_exemplar || tmpl.cot_exemplar->reasoning.empty())) {
    throw TemplateError("template '" + tmpl.id + "' is in CoT mode but has no cot_exemplar", {"EXPLANATION"});
  }

  const std::string body =
      tmpl.mode == Mode::kIp ? drop_lines_with(tmpl.body, "$EXPLANATION$") : tmpl.body;

  std::map<std::string, std::string> values;
  values["CONTEXT"] = window.text;
  if (!tmpl.task_description.empty()) values["TASK_DESCRIPTION"] = tmpl.task_description;
  if (!tmpl.json_exemplar.empty()) values["JSON"] = tmpl.json_exemplar;
  if (tmpl.cot_exemplar && !tmpl.cot_exemplar->question.empty()) values["EXAMPLE_QUESTION"] = tmpl.cot_exemplar->question;
  if (tmpl.cot_exemplar && !tmpl.cot_exemplar->reasoning.empty()) values["EXPLANATION"] = tmpl.cot_exemplar->reasoning;

  std::vector<std::string> missing;
  for (const auto& name : find_placeholders(body)) {
    if (!values.count(name) && std::find(missing.begin(), missing.end(), name) == missing.end()) missing.push_back(name);
  }
  if (!missing.empty()) {
    throw TemplateError("template '" + tmpl.id + "' has no value for: " + text::join(missing, ", "), missing);
  }

  std::string out;
  out.reserve(body.size() + window.text.size() + tmpl.task_description.size());
  for (std::size_t i = 0; i < body.size();) {
    const std::size_t len = placeholder_at(body, i);
    if (len == 0) {
      out += body[i++];
      continue;
    }
    out += values.at(body.substr(i + 1, len - 2));
    i += len;
  }

  RenderedPrompt rp;
  rp.content_hash = sha256_hex(out);
  rp.text = std::move(out);
  rp.template_id = tmpl.id;
  rp.window_ref = window.ref;
  return rp;
}

std::vector<std::string> validate_template(const PromptTemplate& tmpl) {
  std::vector<std::string> violations;
  std::set<std::string> reported;
  for (const auto& name : find_placeholders(tmpl.body)) {
    if (!kPlaceholders.count(name) && reported.insert(name).second) {
      violations.push_back("undeclared placeholder " + name);
    }
  }
  if (tmpl.mode == Mode::kCot && (!tmpl.cot_exemplar || tmpl.cot_exemplar->reasoning.empty())) {
    violations.push_back("missing cot_exemplar");
  }
  try {
    const auto j = nlohmann::json::parse(tmpl.json_exemplar);
    if (!j.is_object()) {
      violations.push_back("json_exemplar is not a JSON object");
    } else {
      for (const auto& key : {tmpl.keys.identification, tmpl.keys.disease}) {
        if (!j.contains(key)) violations.push_back("json_exemplar lacks key " + key);
      }
    }
  } catch (const nlohmann::json::parse_error&) {
    violations.push_back("unparsable json_exemplar");
  }
  return violations;
}

PromptTemplate parse_template(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "---") throw ParseError("template must start with a '---' front matter line");
  std::string front;
  bool closed = false;
  while (std::getline(in, line)) {
    if (text::trim(line) == "---") {
      closed = true;
      break;
    }
    front += line + '\n';
  }
  if (!closed) throw ParseError("unterminated template front matter");
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();

  PromptTemplate t;
  t.body = std::move(body);
  // Block scalars keep a final line break unless written with "|-".
  auto field = [](const YAML::Node& n) {
    std::string v = n.as<std::string>();
    while (!v.empty() && (v.back() == '\n' || v.back() == '\r')) v.pop_back();
    return v;
  };
  try {
    const YAML::Node fm = YAML::Load(front);
    t.id = fm["id"] ? fm["id"].as<std::string>() : "";
    t.family = fm["family"] ? family_from_string(fm["family"].as<std::string>()) : Family::kCustom;
    t.mode = fm["mode"] ? mode_from_string(fm["mode"].as<std::string>()) : Mode::kIp;
    if (t.id.empty()) t.id = to_string(t.family);
    if (fm["task_description"]) t.task_description = field(fm["task_description"]);
    if (fm["json"]) t.json_exemplar = field(fm["json"]);
    if (fm["answer_key"]) t.keys.identification = fm["answer_key"].as<std::string>();
    if (fm["disease_key"]) t.keys.disease = fm["disease_key"].as<std::string>();
    if (fm["example_question"] || fm["explanation"]) {
      Exemplar ex;
      if (fm["example_question"]) ex.question = field(fm["example_question"]);
      if (fm["explanation"]) ex.reasoning = field(fm["explanation"]);
      t.cot_exemplar = std::move(ex);
    }
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("invalid template front matter: ") + e.what());
  }
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) { return parse_template(jsonl::read_file(path)); }

std::string serialize_template(const PromptTemplate& tmpl) {
  YAML::Emitter fm;
  fm << YAML::BeginMap;
  fm << YAML::Key << "id" << YAML::Value << tmpl.id;
  fm << YAML::Key << "family" << YAML::Value << to_string(tmpl.family);
  fm << YAML::Key << "mode" << YAML::Value << to_string(tmpl.mode);
  fm << YAML::Key << "answer_key" << YAML::Value << tmpl.keys.identification;
  fm << YAML::Key << "disease_key" << YAML::Value << tmpl.keys.disease;
  if (!tmpl.task_description.empty()) fm << YAML::Key << "task_description" << YAML::Value << YAML::Literal << tmpl.task_description;
  if (tmpl.cot_exemplar) {
    fm << YAML::Key << "example_question" << YAML::Value << YAML::Literal << tmpl.cot_exemplar->question;
    fm << YAML::Key << "explanation" << YAML::Value << YAML::Literal << tmpl.cot_exemplar->reasoning;
  }
  if (!tmpl.json_exemplar.empty()) fm << YAML::Key << "json" << YAML::Value << YAML::Literal << tmpl.json_exemplar;
  fm << YAML::EndMap;
  return "---\n" + std::string(fm.c_str()) + "\n---\n" + tmpl.body + "\n";
}

namespace {

struct EmbeddedTemplate {
  const char* name;
  const char* content;
};

constexpr EmbeddedTemplate kEmbedded[] = {
#include "builtin_templates_data.inc"
};

}  // namespace

const std::map<Family, PromptTemplate>& builtin_templates() {
  static const std::map<Family, PromptTemplate> templates = [] {
    std::map<Family, PromptTemplate> out;
    for (const auto& e : kEmbedded) {
      PromptTemplate t = parse_template(e.content);
      out.emplace(t.family, std::move(t));
    }
    return out;
  }();
  return templates;
}

PromptTemplate resolve_template(const std::string& name_or_path) {
  if (std::filesystem::exists(name_or_path) && std::filesystem::is_regular_file(name_or_path)) {
    return load_template(name_or_path);
  }
  const Family f = family_from_string(name_or_path);
  const auto& builtins = builtin_templates();
  auto it = builtins.find(f);
  if (it == builtins.end()) throw NotFoundError("no builtin template for family '" + name_or_path + "'");
  return it->second;
}

}  // namespace mvp::prompt
