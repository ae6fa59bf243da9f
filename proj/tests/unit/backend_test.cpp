#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "mvp/backend.hpp"
#include "mvp/error.hpp"
#include "mvp/hash.hpp"
#include "mvp/parse.hpp"
#include "mvp/prompt.hpp"
#include "support.hpp"

namespace mvp::backend {
namespace {

using mvp::testing::TempDir;
using nlohmann::json;

prompt::RenderedPrompt make_prompt(const std::string& doc, const std::string& text) {
  prompt::RenderedPrompt p;
  p.text = text;
  p.template_id = "t";
  p.window_ref = {doc, "B", 32};
  p.content_hash = sha256_hex(text);
  return p;
}

std::shared_ptr<corpus::GoldTable> gold_for(int n, bool ident = true, const std::string& disease = "B") {
  auto g = std::make_shared<corpus::GoldTable>();
  for (int i = 0; i < n; ++i) (*g)["d" + std::to_string(i)] = {ident, disease};
  return g;
}

std::vector<prompt::RenderedPrompt> prompts(int n) {
  std::vector<prompt::RenderedPrompt> out;
  for (int i = 0; i < n; ++i) out.push_back(make_prompt("d" + std::to_string(i), "prompt number " + std::to_string(i)));
  return out;
}

BackendSpec mock(const std::string& id, MockBehavior b, double accuracy = 1.0, std::uint64_t seed = 1) {
  BackendSpec s;
  s.backend_id = id;
  s.kind = Kind::kScriptedMock;
  s.mock.behavior = b;
  s.mock.accuracy = accuracy;
  s.mock.seed = seed;
  s.mock.gold = gold_for(200);
  return s;
}

// ---------------------------------------------------------------------------
// Scripted mocks

TEST(Mock, AlwaysCorrectEmitsGoldAnswer) {
  const auto r = generate(mock("m", MockBehavior::kAlwaysCorrect), make_prompt("d1", "x"));
  EXPECT_NE(r.raw_text.find(R"({"answer": "yes", "disease": "Babesiosis"})"), std::string::npos);
  EXPECT_EQ(r.backend_id, "m");
  EXPECT_EQ(r.prompt_hash, sha256_hex("x"));
  EXPECT_EQ(r.attempt_count, 1);
  const auto parsed = parse::extract_json(r.raw_text, parse::default_rare_disease_classes());
  ASSERT_EQ(parsed.status, parse::Status::kCompliant);
  EXPECT_EQ(parsed.answer->disease_label, "B");
}

TEST(Mock, AlwaysWrongFlipsBothTasks) {
  const auto classes = parse::default_rare_disease_classes();
  for (const auto& p : prompts(30)) {
    const auto r = generate(mock("w", MockBehavior::kAlwaysWrong), p);
    const auto parsed = parse::extract_json(r.raw_text, classes);
    ASSERT_EQ(parsed.status, parse::Status::kCompliant);
    EXPECT_FALSE(parsed.answer->identification);
    EXPECT_NE(parsed.answer->disease_label, "B");
  }
}

TEST(Mock, AccuracyIsDeterministicAndCalibrated) {
  const auto classes = parse::default_rare_disease_classes();
  auto spec = mock("acc", MockBehavior::kAccuracy, 0.7, 99);
  spec.mock.gold = gold_for(2000);
  const auto ps = prompts(2000);
  auto backend = make_backend(spec);
  std::size_t correct = 0;
  for (const auto& p : ps) {
    const auto a = backend->generate(p);
    EXPECT_EQ(a.raw_text, backend->generate(p).raw_text);
    correct += parse::extract_json(a.raw_text, classes).answer->identification;
  }
  EXPECT_NEAR(static_cast<double>(correct) / 2000.0, 0.7, 0.04);

  // Another seed gives a different stream; other samples of the same prompt
  // are independent draws.
  auto other = spec;
  other.mock.seed = 100;
  auto b2 = make_backend(other);
  std::size_t differ = 0, differ_sample = 0;
  for (const auto& p : ps) {
    differ += b2->generate(p).raw_text != backend->generate(p).raw_text;
    differ_sample += backend->generate(p, 1).raw_text != backend->generate(p, 0).raw_text;
  }
  EXPECT_GT(differ, 100u);
  EXPECT_GT(differ_sample, 100u);
}

TEST(Mock, NoncompliantRate) {
  auto spec = mock("nc", MockBehavior::kAlwaysCorrect);
  spec.mock.noncompliant_rate = 0.25;
  spec.mock.gold = gold_for(2000);
  auto b = make_backend(spec);
  std::size_t failures = 0;
  for (const auto& p : prompts(2000)) {
    failures += parse::extract_json(b->generate(p).raw_text, parse::default_rare_disease_classes()).status ==
                parse::Status::kNonCompliant;
  }
  EXPECT_NEAR(static_cast<double>(failures) / 2000.0, 0.25, 0.03);
}

TEST(Mock, CannedMapAndMissingGold) {
  BackendSpec s;
  s.backend_id = "canned";
  s.mock.behavior = MockBehavior::kCannedMap;
  const auto p = make_prompt("d0", "hello");
  s.mock.canned[p.content_hash] = "fixed text";
  EXPECT_EQ(generate(s, p).raw_text, "fixed text");
  EXPECT_THROW(generate(s, make_prompt("d0", "other")), NotFoundError);

  auto no_gold = mock("ng", MockBehavior::kAlwaysCorrect);
  no_gold.mock.gold.reset();
  EXPECT_THROW(generate(no_gold, p), InvalidArgument);
  EXPECT_THROW(generate(mock("x", MockBehavior::kAlwaysCorrect), make_prompt("unknown-doc", "t")), NotFoundError);
}

// ---------------------------------------------------------------------------
// Specs

TEST(BackendSpec, ValidationAndJson) {
  BackendSpec s;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.backend_id = "x";
  s.kind = Kind::kLive;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  s.credentials_ref = "SOME_KEY_VAR";
  s.max_tokens = 512;
  EXPECT_NO_THROW(s.validate());
  const auto back = BackendSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.max_tokens, 512);

  auto m = mock("m", MockBehavior::kAccuracy, 1.5);
  EXPECT_THROW(m.validate(), InvalidArgument);
  BackendSpec r;
  r.backend_id = "r";
  r.kind = Kind::kReplay;
  EXPECT_THROW(r.validate(), InvalidArgument);
  EXPECT_THROW(kind_from_string("telepathy"), InvalidArgument);
}

TEST(BackendSpec, DefaultsMaxTokens) {
  const auto s = BackendSpec::from_json({{"backend_id", "a"}});
  EXPECT_EQ(s.max_tokens, 1024);
  EXPECT_EQ(s.kind, Kind::kScriptedMock);
}

TEST(Retry, BackoffDoublesUpToCap) {
  RetryPolicy r;
  EXPECT_EQ(r.backoff(1).count(), 250);
  EXPECT_EQ(r.backoff(2).count(), 500);
  EXPECT_EQ(r.backoff(3).count(), 1000);
  EXPECT_EQ(r.backoff(20).count(), 4000);
}

// ---------------------------------------------------------------------------
// Replay

TEST(Replay, ArchiveRoundTripAndConflicts) {
  TempDir dir;
  ReplayArchive a;
  a.add("b1", "h1", 0, "text one");
  a.add("b1", "h1", 1, "text two");
  a.add("b2", "h1", 0, "other");
  a.add("b1", "h1", 0, "text one");  // same text again is fine
  EXPECT_THROW(a.add("b1", "h1", 0, "different"), ConflictError);
  a.save(dir / "r.jsonl");
  const auto b = ReplayArchive::load(dir / "r.jsonl");
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.lookup("b1", "h1", 1), "text two");
  EXPECT_FALSE(b.lookup("b1", "h2").has_value());
}

TEST(Replay, CaptureThenReplayIsIdentity) {
  TempDir dir;
  auto live_like = mock("cap", MockBehavior::kAccuracy, 0.6, 5);
  const auto ps = prompts(25);
  const auto archive = record_replay_capture(live_like, ps, dir / "cap.jsonl");
  EXPECT_EQ(archive.size(), 25u);

  BackendSpec replay;
  replay.backend_id = "cap";
  replay.kind = Kind::kReplay;
  replay.replay_path = dir / "cap.jsonl";
  auto rb = make_backend(replay);
  for (const auto& p : ps) EXPECT_EQ(rb->generate(p).raw_text, generate(live_like, p).raw_text);

  try {
    rb->generate(make_prompt("d0", "never captured"));
    FAIL();
  } catch (const MissingReplayEntryError& e) {
    EXPECT_NE(std::string(e.what()).find(sha256_hex("never captured")), std::string::npos);
  }
  EXPECT_THROW(record_replay_capture(replay, ps, dir / "again.jsonl"), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Batches

TEST(Batch, EveryPairOnceInCanonicalOrder) {
  std::vector<BackendSpec> specs;
  for (int i = 0; i < 4; ++i) specs.push_back(mock("b" + std::to_string(i), MockBehavior::kAccuracy, 0.5, i));
  const auto ps = prompts(2);
  const auto one = generate_batch(specs, ps, 1);
  const auto eight = generate_batch(specs, ps, 8);
  ASSERT_EQ(one.size(), 8u);
  std::set<std::pair<std::string, std::string>> keys;
  for (std::size_t i = 0; i < one.size(); ++i) {
    ASSERT_TRUE(one[i].ok());
    keys.insert({one[i].backend_id, one[i].prompt_hash});
    EXPECT_EQ(one[i].backend_id, eight[i].backend_id);
    EXPECT_EQ(one[i].prompt_hash, eight[i].prompt_hash);
    EXPECT_EQ(one[i].result->raw_text, eight[i].result->raw_text);
    if (i > 0) {
      EXPECT_LE(std::tie(one[i - 1].backend_id, one[i - 1].prompt_hash), std::tie(one[i].backend_id, one[i].prompt_hash));
    }
  }
  EXPECT_EQ(keys.size(), 8u);
  EXPECT_THROW(generate_batch(specs, ps, 0), InvalidArgument);
}

int closed_port() {
  httplib::Server s;
  const int port = s.bind_to_any_port("127.0.0.1");
  return port;  // released when `s` is destroyed
}

BackendSpec live(const std::string& id, int port, const std::string& cred_var = "") {
  BackendSpec s;
  s.backend_id = id;
  s.kind = Kind::kLive;
  s.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  s.credentials_ref = cred_var;
  s.retry.max_attempts = 3;
  s.retry.initial_backoff = std::chrono::milliseconds(1);
  s.retry.max_backoff = std::chrono::milliseconds(4);
  s.timeout = std::chrono::milliseconds(2000);
  return s;
}

TEST(Batch, UnreachableBackendFailsOnlyItsOwnPairs) {
  std::vector<BackendSpec> specs = {mock("a", MockBehavior::kAlwaysCorrect), mock("b", MockBehavior::kAlwaysWrong),
                                    mock("c", MockBehavior::kAlwaysCorrect), live("dead", closed_port())};
  const auto out = generate_batch(specs, prompts(2), 4);
  ASSERT_EQ(out.size(), 8u);
  std::size_t ok = 0;
  for (const auto& e : out) {
    if (e.ok()) {
      ++ok;
    } else {
      EXPECT_EQ(e.backend_id, "dead");
      EXPECT_EQ(e.error_kind, "unavailable");
    }
  }
  EXPECT_EQ(ok, 6u);
}

// ---------------------------------------------------------------------------
// Live backend against an in-process server

class FakeServer {
 public:
  explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  int port() const { return port_; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

const char* kSecret = "sk-test-5f1c9e0a7b";

class EnvVar {
 public:
  EnvVar(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~EnvVar() { ::unsetenv(name_); }

 private:
  const char* name_;
};

json ok_body(const std::string& content) { return {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}; }

TEST(Live, SendsChatRequestWithBearerToken) {
  EnvVar env("MVP_TEST_KEY", kSecret);
  json seen;
  std::string auth;
  FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(ok_body("{\"answer\": \"no\", \"disease\": \"none\"}").dump(), "application/json");
  });
  auto spec = live("llama", server.port(), "MVP_TEST_KEY");
  spec.model = "llama-2-13b-chat";
  const auto r = generate(spec, make_prompt("d0", "the prompt"));
  EXPECT_EQ(r.raw_text, "{\"answer\": \"no\", \"disease\": \"none\"}");
  EXPECT_EQ(r.attempt_count, 1);
  EXPECT_EQ(seen.at("max_tokens"), 1024);
  EXPECT_EQ(seen.at("model"), "llama-2-13b-chat");
  EXPECT_EQ(seen.at("messages").at(0).at("content"), "the prompt");
  EXPECT_EQ(seen.at("temperature"), 0.0);
  EXPECT_EQ(auth, std::string("Bearer ") + kSecret);
}

TEST(Live, RetriesTransientFailures) {
  std::atomic<int> calls{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(ok_body("done").dump(), "application/json");
  });
  const auto r = generate(live("flaky", server.port()), make_prompt("d0", "p"));
  EXPECT_EQ(r.raw_text, "done");
  EXPECT_EQ(r.attempt_count, 3);
  EXPECT_EQ(calls.load(), 3);
}

TEST(Live, ExhaustedRetriesReportUnavailable) {
  std::atomic<int> calls{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 429;
  });
  EXPECT_THROW(generate(live("busy", server.port()), make_prompt("d0", "p")), BackendUnavailableError);
  EXPECT_EQ(calls.load(), 3);
}

TEST(Live, RejectedCredentialsNeverLeakTheSecret) {
  EnvVar env("MVP_TEST_KEY", kSecret);
  FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    res.status = req.has_header("X-Echo") ? 400 : 401;
    res.set_content("bad key " + req.get_header_value("Authorization"), "text/plain");
  });
  try {
    generate(live("auth", server.port(), "MVP_TEST_KEY"), make_prompt("d0", "p"));
    FAIL();
  } catch (const CredentialError& e) {
    EXPECT_EQ(std::string(e.what()).find(kSecret), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("MVP_TEST_KEY"), std::string::npos);
  }
}

TEST(Live, ClientErrorBodyIsScrubbed) {
  EnvVar env("MVP_TEST_KEY", kSecret);
  FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    res.status = 400;
    res.set_content("invalid request from " + req.get_header_value("Authorization"), "text/plain");
  });
  try {
    generate(live("echo", server.port(), "MVP_TEST_KEY"), make_prompt("d0", "p"));
    FAIL();
  } catch (const CredentialError&) {
    FAIL() << "400 is not a credential failure";
  } catch (const BackendError& e) {
    EXPECT_EQ(std::string(e.what()).find(kSecret), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("***"), std::string::npos);
  }
}

TEST(Live, MissingCredentialVariable) {
  ::unsetenv("MVP_TEST_MISSING_KEY");
  FakeServer server([&](const httplib::Request&, httplib::Response& res) { res.set_content(ok_body("x").dump(), "application/json"); });
  EXPECT_THROW(generate(live("nokey", server.port(), "MVP_TEST_MISSING_KEY"), make_prompt("d0", "p")), CredentialError);
}

TEST(Live, MalformedResponseIsABackendError) {
  FakeServer server([&](const httplib::Request&, httplib::Response& res) { res.set_content("not json", "text/plain"); });
  EXPECT_THROW(generate(live("garbled", server.port()), make_prompt("d0", "p")), BackendError);
}

TEST(Wire, ResponseShapes) {
  EXPECT_EQ(parse_chat_response(ok_body("hi")), "hi");
  EXPECT_EQ(parse_chat_response({{"choices", {{{"text", "legacy"}}}}}), "legacy");
  EXPECT_EQ(parse_chat_response({{"choices", {{{"message", {{"content", nullptr}}}}}}}), "");
  EXPECT_THROW(parse_chat_response(json::object()), json::exception);
}

}  // namespace
}  // namespace mvp::backend
