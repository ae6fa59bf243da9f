#pragma once

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvp/answer.hpp"
#include "mvp/corpus.hpp"
#include "mvp/parse.hpp"
#include "mvp/vote.hpp"

namespace mvp::orchestrator {

// (backend_id, prompt_hash, sample index)
using GenKey = std::tuple<std::string, std::string, std::size_t>;

enum class TaskStatus { kPending, kLabeled };
std::string to_string(TaskStatus s);

struct AnnotationTask {
  std::string task_id;
  corpus::WindowRef window_ref;
  std::string backend_id;
  std::string prompt_hash;
  std::size_t sample = 0;
  std::string raw_text;
  TaskStatus status = TaskStatus::kPending;
  std::optional<ParsedAnswer> label;
  std::string annotator_id;
  std::string labeled_at;

  GenKey key() const { return {backend_id, prompt_hash, sample}; }
  nlohmann::json to_json() const;

  bool operator==(const AnnotationTask&) const = default;
};

struct StoredPrompt {
  std::string template_id;
  std::string window_id;
  std::string text;
};

struct StoredGeneration {
  std::string window_id;
  std::string raw_text;
  int attempt_count = 1;
};

// Everything known about a run, folded from its event log.
struct RunState {
  std::string run_id;
  std::string config_hash;
  nlohmann::json config;
  std::string started_at;
  parse::ClassSet classes;
  // Members voting on each window; "mvp" or "self-consistency".
  vote::EnsembleConfig ensemble;
  std::string mode = "mvp";
  std::map<std::string, corpus::ContextWindow> windows;  // window id -> window
  // window id -> backend id -> prompt hash. Windows with identical text share
  // a prompt and therefore its generations.
  std::map<std::string, std::map<std::string, std::string>> window_prompts;
  std::map<std::string, StoredPrompt> prompts;           // prompt hash -> prompt
  std::map<GenKey, StoredGeneration> generations;
  std::map<GenKey, parse::ExtractionResult> extractions;
  std::map<std::string, AnnotationTask> tasks;
  std::map<GenKey, std::string> task_by_key;
  std::map<std::string, nlohmann::json> verdicts;  // window id -> verdict event
  bool finished = false;

  // Throws ParseError on an event that does not fit the state.
  void apply(const nlohmann::json& event);
};

// Append-only line-delimited JSON event log. Every append is flushed and
// fsync'ed before returning. Writers are serialized; readers see a consistent
// RunState.
class RunStore {
 public:
  // Opens (creating if needed) the log at `path`. A torn final line left by
  // a crash is cut off; damage anywhere else is a ParseError.
  explicit RunStore(std::filesystem::path path);
  ~RunStore();
  RunStore(const RunStore&) = delete;
  RunStore& operator=(const RunStore&) = delete;

  const std::filesystem::path& path() const { return path_; }

  void append(const nlohmann::json& event);
  void append(const std::vector<nlohmann::json>& events);

  // Runs `fn` with exclusive access; `fn` may read the state and return the
  // events to append atomically with the read.
  std::vector<nlohmann::json> transact(const std::function<std::vector<nlohmann::json>(const RunState&)>& fn);

  RunState snapshot() const;
  template <typename F>
  auto read(F&& fn) const {
    std::shared_lock lock(mu_);
    return fn(state_);
  }

  std::size_t event_count() const;

 private:
  void write_locked(const std::vector<nlohmann::json>& events);

  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::shared_mutex mu_;
  RunState state_;
  std::size_t events_ = 0;
};

}  // namespace mvp::orchestrator
