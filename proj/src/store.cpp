#include "mvp/store.hpp"

#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include "mvp/error.hpp"
#include "mvp/jsonl.hpp"

namespace mvp::orchestrator {

using nlohmann::json;

std::string to_string(TaskStatus s) { return s == TaskStatus::kPending ? "pending" : "labeled"; }

json AnnotationTask::to_json() const {
  json j = {{"task_id", task_id},
            {"window", window_ref.id()},
            {"doc_id", window_ref.doc_id},
            {"disease_id", window_ref.disease_id},
            {"context_size", window_ref.window_words},
            {"backend_id", backend_id},
            {"prompt_hash", prompt_hash},
            {"sample", sample},
            {"raw_text", raw_text},
            {"status", to_string(status)}};
  if (label) {
    j["label"] = label->to_json();
    j["annotator_id"] = annotator_id;
    j["labeled_at"] = labeled_at;
  }
  return j;
}

namespace {

GenKey gen_key(const json& e) {
  return {e.at("backend_id").get<std::string>(), e.at("prompt_hash").get<std::string>(),
          e.value("sample", std::size_t{0})};
}

}  // namespace

void RunState::apply(const json& e) {
  const std::string type = e.at("type").get<std::string>();
  if (type == "run_start") {
    if (!run_id.empty()) return;  // resumed runs keep their first start record
    run_id = e.at("run_id").get<std::string>();
    config_hash = e.at("config_hash").get<std::string>();
    config = e.at("config");
    classes = parse::ClassSet::from_json(e.at("classes"));
    ensemble = vote::EnsembleConfig::from_json(e.at("ensemble"));
    mode = e.value("mode", std::string("mvp"));
    started_at = e.value("at", std::string());
  } else if (type == "window") {
    auto w = corpus::ContextWindow::from_json(e.at("window"));
    const std::string id = w.ref.id();
    auto bound = e.at("prompts").get<std::map<std::string, std::string>>();
    for (const auto& [backend_id, hash] : bound) {
      if (!prompts.count(hash)) throw ParseError("window " + id + " references unknown prompt " + hash);
    }
    if (windows.emplace(id, std::move(w)).second) window_prompts[id] = std::move(bound);
  } else if (type == "prompt") {
    prompts.emplace(e.at("prompt_hash").get<std::string>(),
                    StoredPrompt{e.at("template_id").get<std::string>(), e.at("window").get<std::string>(),
                                 e.at("text").get<std::string>()});
  } else if (type == "generation") {
    const auto hash = e.at("prompt_hash").get<std::string>();
    if (!prompts.count(hash)) throw ParseError("generation for unknown prompt " + hash);
    generations.emplace(gen_key(e), StoredGeneration{e.at("window").get<std::string>(), e.at("raw_text").get<std::string>(),
                                                     e.value("attempt_count", 1)});
  } else if (type == "extraction") {
    const auto key = gen_key(e);
    if (!generations.count(key)) throw ParseError("extraction without generation");
    extractions.emplace(key, parse::ExtractionResult::from_json(e.at("result")));
  } else if (type == "task") {
    const auto key = gen_key(e);
    auto g = generations.find(key);
    if (g == generations.end()) throw ParseError("task without generation");
    AnnotationTask t;
    t.task_id = e.at("task_id").get<std::string>();
    t.window_ref = corpus::WindowRef::parse(e.at("window").get<std::string>());
    t.backend_id = std::get<0>(key);
    t.prompt_hash = std::get<1>(key);
    t.sample = std::get<2>(key);
    t.raw_text = g->second.raw_text;
    if (tasks.emplace(t.task_id, t).second) task_by_key.emplace(key, t.task_id);
  } else if (type == "label") {
    auto it = tasks.find(e.at("task_id").get<std::string>());
    if (it == tasks.end()) throw ParseError("label for unknown task");
    if (it->second.status == TaskStatus::kLabeled) throw ParseError("task " + it->first + " labeled twice");
    it->second.status = TaskStatus::kLabeled;
    it->second.label = ParsedAnswer::from_json(e.at("answer"));
    it->second.annotator_id = e.value("annotator_id", std::string());
    it->second.labeled_at = e.value("at", std::string());
  } else if (type == "verdict") {
    verdicts[e.at("window").get<std::string>()] = e;
  } else if (type == "run_end") {
    finished = true;
  } else {
    throw ParseError("unknown event type '" + type + "'");
  }
}

namespace {

[[noreturn]] void io_fail(const std::string& what, const std::filesystem::path& p) {
  throw IoError(what + " " + p.string() + ": " + std::strerror(errno));
}

}  // namespace

RunStore::RunStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) io_fail("cannot open", path_);

  const std::string content = jsonl::read_file(path_);
  std::size_t pos = 0;
  std::size_t line = 0;
  std::size_t good_end = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    ++line;
    if (nl == std::string::npos) break;  // torn tail, handled below
    const std::string_view text(content.data() + pos, nl - pos);
    if (text.find_first_not_of(" \t\r") != std::string_view::npos) {
      json e = json::parse(text, nullptr, false);
      if (e.is_discarded()) throw ParseError("malformed run log record in " + path_.string(), line);
      try {
        state_.apply(e);
      } catch (const json::exception& ex) {
        throw ParseError(std::string("bad run log record: ") + ex.what(), line);
      } catch (const ParseError& ex) {
        throw ParseError(ex.what(), line);
      }
      ++events_;
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < content.size()) {
    if (::ftruncate(fd_, static_cast<off_t>(good_end)) != 0) io_fail("cannot truncate", path_);
    if (::fsync(fd_) != 0) io_fail("cannot sync", path_);
  }
}

RunStore::~RunStore() {
  if (fd_ >= 0) ::close(fd_);
}

void RunStore::write_locked(const std::vector<json>& events) {
  if (events.empty()) return;
  // Validate against a copy first so a bad event never reaches disk.
  RunState next = state_;
  std::string buf;
  for (const auto& e : events) {
    next.apply(e);
    buf += e.dump();
    buf += '\n';
  }
  std::size_t off = 0;
  while (off < buf.size()) {
    const ssize_t n = ::write(fd_, buf.data() + off, buf.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail("cannot append to", path_);
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) io_fail("cannot sync", path_);
  state_ = std::move(next);
  events_ += events.size();
}

void RunStore::append(const json& event) { append(std::vector<json>{event}); }

void RunStore::append(const std::vector<json>& events) {
  std::unique_lock lock(mu_);
  write_locked(events);
}

std::vector<json> RunStore::transact(const std::function<std::vector<json>(const RunState&)>& fn) {
  std::unique_lock lock(mu_);
  auto events = fn(state_);
  write_locked(events);
  return events;
}

RunState RunStore::snapshot() const {
  std::shared_lock lock(mu_);
  return state_;
}

std::size_t RunStore::event_count() const {
  std::shared_lock lock(mu_);
  return events_;
}

}  // namespace mvp::orchestrator
