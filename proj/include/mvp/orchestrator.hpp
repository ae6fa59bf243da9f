#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvp/backend.hpp"
#include "mvp/corpus.hpp"
#include "mvp/eval.hpp"
#include "mvp/parse.hpp"
#include "mvp/store.hpp"
#include "mvp/vote.hpp"

namespace mvp::orchestrator {

enum class RunMode { kMvp, kSelfConsistency };
std::string to_string(RunMode m);
RunMode run_mode_from_string(const std::string& s);

struct RunConfig {
  std::string run_id;
  std::filesystem::path corpus;
  std::filesystem::path terms;
  std::filesystem::path gold;  // optional
  // Disease ids to study; when empty the `top_k` most frequent survivors of
  // the filters are used.
  std::vector<std::string> classes;
  std::size_t top_k = 4;
  std::map<std::string, std::vector<std::string>> abbreviations;
  std::vector<int> context_sizes = corpus::kDefaultWindowSizes;
  vote::EnsembleConfig ensemble;
  std::vector<backend::BackendSpec> backends;
  RunMode mode = RunMode::kMvp;
  std::size_t samples = 1;  // self-consistency draws per window
  std::uint64_t seed = 0;
  std::filesystem::path run_dir = "runs";
  corpus::FilterConfig filter;
  std::size_t parallelism = 4;
  std::optional<std::size_t> limit;  // first n windows only

  void validate() const;
  // Canonical form; also the input of the configuration hash.
  nlohmann::json to_json() const;
  std::string config_hash() const;
  // Relative paths resolve against `base_dir`. Mock backends without an
  // explicit seed inherit the run seed.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  std::filesystem::path log_path() const { return run_dir / run_id / "events.jsonl"; }
  // Members voting on each window: backend ids, or backend#i per draw.
  vote::EnsembleConfig effective_ensemble() const;
};

std::string member_id(RunMode mode, const std::string& backend_id, std::size_t sample);

// Returns an ISO-8601 UTC timestamp; injectable for reproducible logs.
using Clock = std::function<std::string()>;
std::string utc_now();

struct RunOptions {
  // Stop after this many new generations, leaving the run resumable.
  std::optional<std::size_t> stop_after;
  Clock clock = utc_now;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct RunEntry {
  corpus::WindowRef window;
  std::string backend_id;
  std::size_t sample = 0;
  std::string prompt_hash;
  std::string raw_text;
  parse::Status status = parse::Status::kNonCompliant;
  std::optional<ParsedAnswer> answer;  // auto-parsed or human label
  std::optional<std::string> task_id;

  nlohmann::json to_json() const;
};

// Canonical view of a run log: entries sorted by (window, backend, sample),
// so it is independent of scheduling and of how often the run was resumed.
struct RunRecord {
  std::string run_id;
  std::string config_hash;
  std::string started_at;
  std::vector<RunEntry> entries;
  std::map<std::string, nlohmann::json> verdicts;
  bool finished = false;

  nlohmann::json to_json() const;
  bool operator==(const RunRecord& o) const { return to_json() == o.to_json(); }
};

RunRecord run_record(const RunState& state);

RunRecord run_experiment(const RunConfig& cfg, const RunOptions& opts = {});

// One pending task per non-compliant generation in `failures`; existing tasks
// are returned unchanged.
std::vector<AnnotationTask> enqueue_manual_annotation(RunStore& store, const std::string& run_id,
                                                      const std::vector<GenKey>& failures, const Clock& clock = utc_now);

// First writer wins. Throws NotFoundError, ConflictError (already labeled) or
// InvalidArgument (label outside the class set).
AnnotationTask submit_label(RunStore& store, const std::string& task_id, ParsedAnswer label,
                            const std::string& annotator_id, const Clock& clock = utc_now);

struct LoadedRun {
  RunState state;
  vote::EnsembleConfig ensemble;
  std::vector<std::string> classes;
  // Windows whose ballot is complete and whose gold labels are known.
  std::vector<eval::EvalSample> samples;
  std::size_t windows = 0;

  double coverage() const { return windows == 0 ? 0.0 : static_cast<double>(samples.size()) / windows; }
  // Extraction outcomes per backend, in ensemble order.
  parse::ComplianceReport compliance() const;
};

LoadedRun load_run(const RunState& state);

LoadedRun load_run(const std::filesystem::path& log_path);

// Results table rows of a loaded run: every member and the ensemble, for each
// task and context size present.
std::vector<eval::ResultRow> results_rows(const LoadedRun& run);

// Accepts a log path, a run directory or a run id under `runs_root`.
std::filesystem::path resolve_run_log(const std::string& run, const std::filesystem::path& runs_root = "runs");

}  // namespace mvp::orchestrator
