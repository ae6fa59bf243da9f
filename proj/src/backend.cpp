#include "mvp/backend.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "mvp/hash.hpp"
#include "mvp/jsonl.hpp"

namespace mvp::backend {

using nlohmann::json;

std::string to_string(Kind k) {
  switch (k) {
    case Kind::kLive:
      return "live";
    case Kind::kScriptedMock:
      return "scripted-mock";
    case Kind::kReplay:
      return "replay";
  }
  return "?";
}

Kind kind_from_string(const std::string& s) {
  if (s == "live") return Kind::kLive;
  if (s == "scripted-mock" || s == "mock") return Kind::kScriptedMock;
  if (s == "replay") return Kind::kReplay;
  throw InvalidArgument("unknown backend kind '" + s + "'");
}

std::string to_string(MockBehavior b) {
  switch (b) {
    case MockBehavior::kAlwaysCorrect:
      return "always-correct";
    case MockBehavior::kAlwaysWrong:
      return "always-wrong";
    case MockBehavior::kAccuracy:
      return "accuracy-p";
    case MockBehavior::kCannedMap:
      return "canned-map";
  }
  return "?";
}

MockBehavior mock_behavior_from_string(const std::string& s) {
  if (s == "always-correct") return MockBehavior::kAlwaysCorrect;
  if (s == "always-wrong") return MockBehavior::kAlwaysWrong;
  if (s == "accuracy-p" || s == "accuracy") return MockBehavior::kAccuracy;
  if (s == "canned-map" || s == "canned") return MockBehavior::kCannedMap;
  throw InvalidArgument("unknown mock behavior '" + s + "'");
}

std::chrono::milliseconds RetryPolicy::backoff(int attempt) const {
  auto d = initial_backoff;
  for (int i = 1; i < attempt && d < max_backoff; ++i) d *= 2;
  return std::min(d, max_backoff);
}

void BackendSpec::validate() const {
  if (backend_id.empty()) throw InvalidArgument("backend_id is empty");
  if (max_tokens < 1) throw InvalidArgument(backend_id + ": max_tokens must be at least 1");
  if (!(temperature >= 0.0)) throw InvalidArgument(backend_id + ": temperature must be non-negative");
  if (retry.max_attempts < 1) throw InvalidArgument(backend_id + ": retry.max_attempts must be at least 1");
  switch (kind) {
    case Kind::kLive:
      if (endpoint.empty()) throw InvalidArgument(backend_id + ": live backend needs an endpoint");
      break;
    case Kind::kScriptedMock:
    case Kind::kReplay:
      if (!endpoint.empty()) throw InvalidArgument(backend_id + ": " + to_string(kind) + " backend takes no endpoint");
      break;
  }
  if (kind == Kind::kReplay && replay_path.empty()) throw InvalidArgument(backend_id + ": replay backend needs a path");
  if (kind == Kind::kScriptedMock) {
    if (!(mock.accuracy >= 0.0 && mock.accuracy <= 1.0)) throw InvalidArgument(backend_id + ": accuracy outside [0, 1]");
    if (!(mock.noncompliant_rate >= 0.0 && mock.noncompliant_rate <= 1.0)) {
      throw InvalidArgument(backend_id + ": noncompliant_rate outside [0, 1]");
    }
  }
}

json BackendSpec::to_json() const {
  json j = {{"backend_id", backend_id},
            {"kind", to_string(kind)},
            {"max_tokens", max_tokens},
            {"temperature", temperature},
            {"template", template_name}};
  if (!endpoint.empty()) j["endpoint"] = endpoint;
  if (!model.empty()) j["model"] = model;
  if (!credentials_ref.empty()) j["credentials_ref"] = credentials_ref;
  j["retry"] = {{"max_attempts", retry.max_attempts},
                {"initial_backoff_ms", retry.initial_backoff.count()},
                {"max_backoff_ms", retry.max_backoff.count()}};
  j["timeout_ms"] = timeout.count();
  if (kind == Kind::kScriptedMock) {
    json m = {{"behavior", to_string(mock.behavior)},
              {"accuracy", mock.accuracy},
              {"seed", mock.seed},
              {"noncompliant_rate", mock.noncompliant_rate}};
    if (!mock.canned.empty()) m["canned"] = mock.canned;
    j["mock"] = m;
  }
  if (kind == Kind::kReplay) j["replay_path"] = replay_path.string();
  return j;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

BackendSpec BackendSpec::from_json(const json& j, const std::filesystem::path& base_dir) {
  BackendSpec s;
  s.backend_id = j.at("backend_id").get<std::string>();
  s.kind = kind_from_string(j.value("kind", std::string("scripted-mock")));
  s.endpoint = j.value("endpoint", std::string());
  s.model = j.value("model", std::string());
  s.max_tokens = j.value("max_tokens", 1024);
  s.temperature = j.value("temperature", 0.0);
  s.credentials_ref = j.value("credentials_ref", std::string());
  s.template_name = j.value("template", std::string("alpaca-style"));
  if (j.contains("retry")) {
    const auto& r = j.at("retry");
    s.retry.max_attempts = r.value("max_attempts", s.retry.max_attempts);
    s.retry.initial_backoff = std::chrono::milliseconds(r.value("initial_backoff_ms", s.retry.initial_backoff.count()));
    s.retry.max_backoff = std::chrono::milliseconds(r.value("max_backoff_ms", s.retry.max_backoff.count()));
  }
  s.timeout = std::chrono::milliseconds(j.value("timeout_ms", s.timeout.count()));
  if (j.contains("mock")) {
    const auto& m = j.at("mock");
    s.mock.behavior = mock_behavior_from_string(m.value("behavior", std::string("always-correct")));
    s.mock.accuracy = m.value("accuracy", 1.0);
    s.mock.seed = m.value("seed", std::uint64_t{0});
    s.mock.noncompliant_rate = m.value("noncompliant_rate", 0.0);
    if (m.contains("canned")) s.mock.canned = m.at("canned").get<std::map<std::string, std::string>>();
    if (m.contains("gold")) {
      s.mock.gold = std::make_shared<corpus::GoldTable>(corpus::load_gold(resolve(base_dir, m.at("gold"))));
    }
    if (m.contains("classes")) s.mock.classes = parse::ClassSet::from_json(m.at("classes"));
  }
  if (j.contains("replay_path")) s.replay_path = resolve(base_dir, j.at("replay_path").get<std::string>());
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Replay archive

ReplayArchive::ReplayArchive(const ReplayArchive& other) {
  std::shared_lock lock(other.mu_);
  entries_ = other.entries_;
}

ReplayArchive& ReplayArchive::operator=(const ReplayArchive& other) {
  if (this == &other) return *this;
  std::map<Key, std::string> copy;
  {
    std::shared_lock lock(other.mu_);
    copy = other.entries_;
  }
  std::unique_lock lock(mu_);
  entries_ = std::move(copy);
  return *this;
}

ReplayArchive ReplayArchive::load(const std::filesystem::path& path) {
  ReplayArchive a;
  jsonl::for_each(path, [&](const json& r, std::size_t line) {
    try {
      a.add(r.at("backend_id").get<std::string>(), r.at("prompt_hash").get<std::string>(),
            r.value("sample", std::size_t{0}), r.at("raw_text").get<std::string>());
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad replay record: ") + e.what(), line);
    } catch (const ConflictError& e) {
      throw ParseError(e.what(), line);
    }
  });
  return a;
}

void ReplayArchive::save(const std::filesystem::path& path) const {
  std::vector<json> records;
  {
    std::shared_lock lock(mu_);
    for (const auto& [key, text] : entries_) {
      json r = {{"prompt_hash", std::get<1>(key)}, {"backend_id", std::get<0>(key)}, {"raw_text", text}};
      if (std::get<2>(key) != 0) r["sample"] = std::get<2>(key);
      records.push_back(std::move(r));
    }
  }
  jsonl::write(path, records);
}

void ReplayArchive::add(const std::string& backend_id, const std::string& prompt_hash, std::size_t sample,
                        const std::string& text) {
  std::unique_lock lock(mu_);
  auto [it, inserted] = entries_.emplace(Key{backend_id, prompt_hash, sample}, text);
  if (!inserted && it->second != text) {
    throw ConflictError("replay collision: differing texts for " + backend_id + " / " + prompt_hash);
  }
}

std::optional<std::string> ReplayArchive::lookup(const std::string& backend_id, const std::string& prompt_hash,
                                                 std::size_t sample) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(Key{backend_id, prompt_hash, sample});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t ReplayArchive::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Backends

namespace {

using Clock = std::chrono::steady_clock;

std::chrono::microseconds since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0);
}

std::string json_string(const std::string& s) { return json(s).dump(); }

class MockBackend : public Backend {
 public:
  using Backend::Backend;

  GenerationResult generate(const prompt::RenderedPrompt& prompt, std::size_t sample) override {
    const auto t0 = Clock::now();
    GenerationResult r{id(), prompt.content_hash, sample, respond(prompt, sample), {}, 1};
    r.latency = since(t0);
    return r;
  }

 private:
  // Independent uniform draw per (seed, backend, prompt, sample, purpose).
  double draw(const prompt::RenderedPrompt& p, std::size_t sample, std::string_view purpose) const {
    const std::string key = id() + '\n' + p.content_hash + '\n' + std::to_string(sample) + '\n' + std::string(purpose);
    return unit_interval(mix64(spec_.mock.seed ^ stable_key(key)));
  }

  std::string respond(const prompt::RenderedPrompt& p, std::size_t sample) const {
    const MockScript& m = spec_.mock;
    if (m.behavior == MockBehavior::kCannedMap) {
      auto it = m.canned.find(p.content_hash);
      if (it == m.canned.end()) throw NotFoundError(id() + ": no canned text for prompt " + p.content_hash);
      return it->second;
    }
    if (!m.gold) throw InvalidArgument(id() + ": scripted mock has no gold source");
    auto g = m.gold->find(p.window_ref.doc_id);
    if (g == m.gold->end()) throw NotFoundError(id() + ": no gold label for " + p.window_ref.doc_id);

    bool correct = m.behavior == MockBehavior::kAlwaysCorrect;
    if (m.behavior == MockBehavior::kAccuracy) correct = draw(p, sample, "correct") < m.accuracy;

    const auto labels = m.classes.ids_with_other();
    const std::string gold = m.classes.find(g->second.disease_id) ? g->second.disease_id : kOtherLabel;
    bool ident = g->second.identification;
    std::string disease = gold;
    if (!correct) {
      ident = !ident;
      std::vector<std::string> others;
      for (const auto& l : labels) {
        if (l != gold) others.push_back(l);
      }
      if (!others.empty()) {
        disease = others[static_cast<std::size_t>(draw(p, sample, "wrong") * static_cast<double>(others.size()))];
      }
    }
    const std::string shown = disease == kOtherLabel ? "none" : m.classes.display_label(disease);
    const char* yn = ident ? "yes" : "no";
    if (draw(p, sample, "format") < m.noncompliant_rate) {
      return std::string("Based on the excerpt the answer is ") + yn + " and the condition discussed is " + shown + ".";
    }
    return std::string("Explanation: the excerpt was checked for a current diagnosis.\n{\"answer\": \"") + yn +
           "\", \"disease\": " + json_string(shown) + "}";
  }
};

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(BackendSpec spec) : Backend(std::move(spec)), archive_(ReplayArchive::load(spec_.replay_path)) {}

  GenerationResult generate(const prompt::RenderedPrompt& prompt, std::size_t sample) override {
    const auto t0 = Clock::now();
    auto text = archive_.lookup(id(), prompt.content_hash, sample);
    if (!text) throw MissingReplayEntryError(id() + ": replay archive has no entry for prompt " + prompt.content_hash);
    GenerationResult r{id(), prompt.content_hash, sample, std::move(*text), {}, 1};
    r.latency = since(t0);
    return r;
  }

 private:
  ReplayArchive archive_;
};

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("endpoint '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

// Replaces every occurrence of the secret; a defensive pass over anything
// that ends up in an error message.
std::string scrub(std::string s, const std::string& secret) {
  if (secret.empty()) return s;
  for (auto pos = s.find(secret); pos != std::string::npos; pos = s.find(secret, pos)) {
    s.replace(pos, secret.size(), "***");
    pos += 3;
  }
  return s;
}

bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

class LiveBackend : public Backend {
 public:
  explicit LiveBackend(BackendSpec spec) : Backend(std::move(spec)), endpoint_(split_endpoint(spec_.endpoint)) {}

  GenerationResult generate(const prompt::RenderedPrompt& prompt, std::size_t sample) override {
    std::string secret;
    if (!spec_.credentials_ref.empty()) {
      const char* v = std::getenv(spec_.credentials_ref.c_str());
      if (v == nullptr || *v == '\0') {
        throw CredentialError(id() + ": environment variable " + spec_.credentials_ref + " is not set");
      }
      secret = v;
    }
    const std::string body = build_chat_request(spec_, prompt.text).dump();
    httplib::Headers headers;
    if (!secret.empty()) headers.emplace("Authorization", "Bearer " + secret);

    const auto t0 = Clock::now();
    std::string last_error;
    for (int attempt = 1; attempt <= spec_.retry.max_attempts; ++attempt) {
      if (attempt > 1) std::this_thread::sleep_for(spec_.retry.backoff(attempt - 1));
      httplib::Client client(endpoint_.origin);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(spec_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(spec_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());

      auto res = client.Post(endpoint_.path, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 401 || res->status == 403) {
        throw CredentialError(id() + ": credentials from " + spec_.credentials_ref + " were rejected (HTTP " +
                              std::to_string(res->status) + ")");
      }
      if (transient_status(res->status)) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        throw BackendError(scrub(id() + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), secret));
      }
      std::string text;
      try {
        text = parse_chat_response(json::parse(res->body));
      } catch (const json::exception& e) {
        throw BackendError(id() + ": malformed response body: " + e.what());
      }
      return GenerationResult{id(), prompt.content_hash, sample, std::move(text), since(t0), attempt};
    }
    throw BackendUnavailableError(scrub(id() + ": unavailable after " + std::to_string(spec_.retry.max_attempts) +
                                            " attempts (" + last_error + ")",
                                        secret));
  }

 private:
  Endpoint endpoint_;
};

}  // namespace

json build_chat_request(const BackendSpec& spec, const std::string& prompt_text) {
  return {{"model", spec.model.empty() ? spec.backend_id : spec.model},
          {"messages", json::array({{{"role", "user"}, {"content", prompt_text}}})},
          {"max_tokens", spec.max_tokens},
          {"temperature", spec.temperature}};
}

std::string parse_chat_response(const json& body) {
  const auto& choice = body.at("choices").at(0);
  if (choice.contains("message")) {
    const auto& content = choice.at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  }
  const auto& t = choice.at("text");
  return t.is_null() ? std::string() : t.get<std::string>();
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case Kind::kLive:
      return std::make_unique<LiveBackend>(spec);
    case Kind::kScriptedMock:
      return std::make_unique<MockBackend>(spec);
    case Kind::kReplay:
      return std::make_unique<ReplayBackend>(spec);
  }
  throw InvalidArgument("unknown backend kind");
}

GenerationResult generate(const BackendSpec& spec, const prompt::RenderedPrompt& prompt, std::size_t sample) {
  return make_backend(spec)->generate(prompt, sample);
}

// ---------------------------------------------------------------------------
// Batches

namespace {

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const CredentialError*>(&e)) return "credential";
  if (dynamic_cast<const BackendUnavailableError*>(&e)) return "unavailable";
  if (dynamic_cast<const MissingReplayEntryError*>(&e)) return "missing-replay-entry";
  if (dynamic_cast<const NotFoundError*>(&e)) return "not-found";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid-argument";
  return "backend";
}

}  // namespace

std::vector<BatchEntry> run_work(const std::vector<Backend*>& backends, const std::vector<prompt::RenderedPrompt>& prompts,
                                 const std::vector<WorkItem>& items, std::size_t parallelism) {
  if (parallelism < 1) throw InvalidArgument("parallelism must be at least 1");
  std::vector<BatchEntry> out(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      const WorkItem& w = items[i];
      Backend& b = *backends.at(w.backend);
      const auto& p = prompts.at(w.prompt);
      BatchEntry& e = out[i];
      e.backend_id = b.id();
      e.prompt_hash = p.content_hash;
      e.sample = w.sample;
      try {
        e.result = b.generate(p, w.sample);
      } catch (const std::exception& ex) {
        e.error_kind = error_kind(ex);
        e.error = ex.what();
      }
    }
  };
  const std::size_t n = std::min(parallelism, std::max<std::size_t>(items.size(), 1));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  return out;
}

std::vector<BatchEntry> generate_batch(const std::vector<BackendSpec>& specs,
                                       const std::vector<prompt::RenderedPrompt>& prompts, std::size_t parallelism) {
  if (parallelism < 1) throw InvalidArgument("parallelism must be at least 1");
  std::vector<std::unique_ptr<Backend>> owned;
  std::vector<Backend*> backends;
  std::vector<BatchEntry> setup_errors;
  std::vector<WorkItem> items;
  for (const auto& spec : specs) {
    std::unique_ptr<Backend> b;
    try {
      b = make_backend(spec);
    } catch (const std::exception& ex) {
      for (const auto& p : prompts) setup_errors.push_back({spec.backend_id, p.content_hash, 0, {}, error_kind(ex), ex.what()});
      continue;
    }
    for (std::size_t i = 0; i < prompts.size(); ++i) items.push_back({backends.size(), i, 0});
    backends.push_back(b.get());
    owned.push_back(std::move(b));
  }
  auto out = run_work(backends, prompts, items, parallelism);
  out.insert(out.end(), setup_errors.begin(), setup_errors.end());
  std::sort(out.begin(), out.end(), [](const BatchEntry& a, const BatchEntry& b) {
    return std::tie(a.backend_id, a.prompt_hash, a.sample) < std::tie(b.backend_id, b.prompt_hash, b.sample);
  });
  return out;
}

ReplayArchive record_replay_capture(const BackendSpec& spec, const std::vector<prompt::RenderedPrompt>& prompts,
                                    const std::filesystem::path& out) {
  if (spec.kind == Kind::kReplay) throw InvalidArgument("cannot capture from a replay backend");
  auto b = make_backend(spec);
  ReplayArchive archive;
  for (const auto& p : prompts) {
    auto r = b->generate(p, 0);
    archive.add(r.backend_id, r.prompt_hash, 0, r.raw_text);
  }
  archive.save(out);
  return archive;
}

}  // namespace mvp::backend
