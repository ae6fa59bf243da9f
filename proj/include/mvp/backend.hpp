#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvp/corpus.hpp"
#include "mvp/error.hpp"
#include "mvp/parse.hpp"
#include "mvp/prompt.hpp"

namespace mvp::backend {

class BackendError : public Error {
 public:
  using Error::Error;
};

// Transport failures persisted through every retry.
class BackendUnavailableError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Missing or rejected credentials. Messages never carry the secret.
class CredentialError : public BackendError {
 public:
  using BackendError::BackendError;
};

class MissingReplayEntryError : public NotFoundError {
 public:
  using NotFoundError::NotFoundError;
};

enum class Kind { kLive, kScriptedMock, kReplay };
std::string to_string(Kind k);
Kind kind_from_string(const std::string& s);

enum class MockBehavior { kAlwaysCorrect, kAlwaysWrong, kAccuracy, kCannedMap };
std::string to_string(MockBehavior b);
MockBehavior mock_behavior_from_string(const std::string& s);

struct MockScript {
  MockBehavior behavior = MockBehavior::kAlwaysCorrect;
  // Probability that an answer is correct (kAccuracy).
  double accuracy = 1.0;
  std::uint64_t seed = 0;
  // Probability that a generation carries no JSON at all.
  double noncompliant_rate = 0.0;
  std::map<std::string, std::string> canned;  // prompt hash -> text
  std::shared_ptr<const corpus::GoldTable> gold;
  parse::ClassSet classes = parse::default_rare_disease_classes();
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::milliseconds max_backoff{4000};

  std::chrono::milliseconds backoff(int attempt) const;
};

struct BackendSpec {
  std::string backend_id;
  Kind kind = Kind::kScriptedMock;
  std::string endpoint;
  // Model name sent on the wire; defaults to backend_id.
  std::string model;
  int max_tokens = 1024;
  double temperature = 0.0;
  // Name of the environment variable holding the API key.
  std::string credentials_ref;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{120000};
  MockScript mock;
  std::filesystem::path replay_path;
  // Builtin family or template path used to prompt this backend.
  std::string template_name = "alpaca-style";

  void validate() const;
  nlohmann::json to_json() const;
  // `base_dir` resolves relative paths.
  static BackendSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

struct GenerationResult {
  std::string backend_id;
  std::string prompt_hash;
  std::size_t sample = 0;
  std::string raw_text;
  std::chrono::microseconds latency{0};
  int attempt_count = 1;
};

// prompt hash -> raw text per backend; line-delimited JSON on disk.
class ReplayArchive {
 public:
  using Key = std::tuple<std::string, std::string, std::size_t>;  // backend, hash, sample

  static ReplayArchive load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Throws ConflictError when the key already holds a different text.
  void add(const std::string& backend_id, const std::string& prompt_hash, std::size_t sample, const std::string& text);
  std::optional<std::string> lookup(const std::string& backend_id, const std::string& prompt_hash,
                                    std::size_t sample = 0) const;
  std::size_t size() const;

  ReplayArchive() = default;
  ReplayArchive(const ReplayArchive& other);
  ReplayArchive& operator=(const ReplayArchive& other);

 private:
  mutable std::shared_mutex mu_;
  std::map<Key, std::string> entries_;
};

class Backend {
 public:
  explicit Backend(BackendSpec spec) : spec_(std::move(spec)) {}
  virtual ~Backend() = default;

  const BackendSpec& spec() const { return spec_; }
  const std::string& id() const { return spec_.backend_id; }

  // Safe to call concurrently.
  virtual GenerationResult generate(const prompt::RenderedPrompt& prompt, std::size_t sample = 0) = 0;

 protected:
  BackendSpec spec_;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

GenerationResult generate(const BackendSpec& spec, const prompt::RenderedPrompt& prompt, std::size_t sample = 0);

// Request body for the chat/completions wire format.
nlohmann::json build_chat_request(const BackendSpec& spec, const std::string& prompt_text);
// Text of the first choice of a chat/completions (or completions) response.
std::string parse_chat_response(const nlohmann::json& body);

struct BatchEntry {
  std::string backend_id;
  std::string prompt_hash;
  std::size_t sample = 0;
  std::optional<GenerationResult> result;
  std::string error_kind;
  std::string error;

  bool ok() const { return result.has_value(); }
};

struct WorkItem {
  std::size_t backend = 0;
  std::size_t prompt = 0;
  std::size_t sample = 0;
};

// Runs every work item with at most `parallelism` concurrent requests.
// Failures are reported per item. Entries are returned in item order.
std::vector<BatchEntry> run_work(const std::vector<Backend*>& backends, const std::vector<prompt::RenderedPrompt>& prompts,
                                 const std::vector<WorkItem>& items, std::size_t parallelism);

// Every (backend, prompt) pair; entries sorted by (backend_id, prompt_hash).
std::vector<BatchEntry> generate_batch(const std::vector<BackendSpec>& specs,
                                       const std::vector<prompt::RenderedPrompt>& prompts, std::size_t parallelism);

ReplayArchive record_replay_capture(const BackendSpec& spec, const std::vector<prompt::RenderedPrompt>& prompts,
                                    const std::filesystem::path& out);

}  // namespace mvp::backend
