#include <gtest/gtest.h>

#include <fstream>

#include "mvp/error.hpp"
#include "mvp/jsonl.hpp"
#include "mvp/orchestrator.hpp"
#include "run_fixture.hpp"

namespace mvp::orchestrator {
namespace {

using mvp::testing::mock_backend;
using mvp::testing::RunFixture;
using nlohmann::json;

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines, std::size_t n) {
  std::ofstream out(p, std::ios::trunc);
  for (std::size_t i = 0; i < n; ++i) out << lines[i] << '\n';
}

json mixed_backends() {
  return {mock_backend("alpha", "accuracy-p", 0.8, 0.2, "llama2-style"),
          mock_backend("beta", "accuracy-p", 0.7, 0.3, "vicuna-style")};
}

TEST(Run, PerfectMocksScorePerfectly) {
  RunFixture fx(60, 3,
                {mock_backend("a", "always-correct"), mock_backend("b", "always-correct", 1.0, 0.0, "llama2-style"),
                 mock_backend("c", "always-correct", 1.0, 0.0, "vicuna-style")});
  fx.config["limit"] = 100;
  const auto record = run_experiment(fx.cfg(), fx.opts());
  EXPECT_TRUE(record.finished);
  const auto run = load_run(fx.cfg().log_path());
  EXPECT_EQ(run.windows, 100u);
  EXPECT_EQ(run.samples.size(), 100u);
  EXPECT_TRUE(run.state.tasks.empty());
  for (const auto& [key, s] : eval::ensemble_scores(run.samples, run.ensemble, run.classes)) {
    EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(s.f_score, 1.0);
  }
  EXPECT_EQ(run.state.verdicts.size(), 100u);
  EXPECT_DOUBLE_EQ(run.coverage(), 1.0);
}

TEST(Run, RerunningAFinishedRunChangesNothing) {
  RunFixture fx(20, 5, mixed_backends());
  const auto first = run_experiment(fx.cfg(), fx.opts());
  const auto events = read_lines(fx.cfg().log_path()).size();
  const auto again = run_experiment(fx.cfg(), fx.opts());
  EXPECT_EQ(first, again);
  EXPECT_EQ(read_lines(fx.cfg().log_path()).size(), events);
}

TEST(Run, InterruptedRunResumesToTheSameRecord) {
  RunFixture fx(30, 9, mixed_backends());
  const auto expected = run_experiment(fx.cfg(), fx.opts());
  std::filesystem::remove_all(fx.dir / "runs");

  const std::size_t total = expected.entries.size();
  const auto half = run_experiment(fx.cfg(), fx.opts(total / 2));
  EXPECT_FALSE(half.finished);
  EXPECT_LT(half.entries.size(), total);
  EXPECT_GE(half.entries.size(), total / 2);
  const auto resumed = run_experiment(fx.cfg(), fx.opts());
  EXPECT_EQ(resumed.to_json(), expected.to_json());
}

TEST(Run, ParallelismDoesNotChangeTheRecord) {
  RunFixture fx(25, 4, mixed_backends());
  fx.config["parallelism"] = 1;
  const auto serial_cfg = fx.cfg();
  const auto serial = run_experiment(serial_cfg, fx.opts());
  std::filesystem::remove_all(fx.dir / "runs");
  fx.config["parallelism"] = 8;
  EXPECT_EQ(serial_cfg.config_hash(), fx.cfg().config_hash());
  EXPECT_EQ(run_experiment(fx.cfg(), fx.opts()), serial);
}

TEST(Run, TruncationAtEveryRecordBoundaryResumes) {
  RunFixture fx(6, 12, mixed_backends(), {32});
  const auto expected = run_experiment(fx.cfg(), fx.opts());
  const auto log = fx.cfg().log_path();
  const auto lines = read_lines(log);
  ASSERT_GT(lines.size(), 10u);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    write_lines(log, lines, k);
    const auto got = run_experiment(fx.cfg(), fx.opts());
    ASSERT_EQ(got.to_json(), expected.to_json()) << "cut after " << k << " records";
  }
}

TEST(Run, TornFinalLineIsDiscarded) {
  RunFixture fx(6, 12, mixed_backends(), {32});
  const auto expected = run_experiment(fx.cfg(), fx.opts());
  const auto log = fx.cfg().log_path();
  const auto lines = read_lines(log);
  write_lines(log, lines, lines.size() / 2);
  {
    std::ofstream out(log, std::ios::app);
    out << lines[lines.size() / 2].substr(0, lines[lines.size() / 2].size() / 2);
  }
  EXPECT_EQ(run_experiment(fx.cfg(), fx.opts()).to_json(), expected.to_json());
}

TEST(Run, CorruptionBeforeTheTailIsAnError) {
  RunFixture fx(6, 12, mixed_backends(), {32});
  run_experiment(fx.cfg(), fx.opts());
  const auto log = fx.cfg().log_path();
  auto lines = read_lines(log);
  lines[2] = "{not json";
  write_lines(log, lines, lines.size());
  try {
    RunStore store(log);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Run, DifferentConfigIntoSameRunIsAConflict) {
  RunFixture fx(6, 12, mixed_backends(), {32});
  run_experiment(fx.cfg(), fx.opts());
  fx.config["context_sizes"] = {32, 64};
  EXPECT_THROW(run_experiment(fx.cfg(), fx.opts()), ConflictError);
}

TEST(Run, ConservationOfGenerations) {
  RunFixture fx(30, 21, mixed_backends());
  const auto record = run_experiment(fx.cfg(), fx.opts());
  const auto st = RunStore(fx.cfg().log_path()).snapshot();
  EXPECT_EQ(record.entries.size(), st.windows.size() * 2);
  std::size_t failures = 0;
  for (const auto& e : record.entries) {
    if (e.status == parse::Status::kNonCompliant) {
      ++failures;
      EXPECT_TRUE(e.task_id.has_value());
      EXPECT_FALSE(e.answer.has_value());
    } else {
      EXPECT_FALSE(e.task_id.has_value());
      EXPECT_TRUE(e.answer.has_value());
    }
  }
  std::size_t nc = 0;
  for (const auto& [k, x] : st.extractions) nc += x.status == parse::Status::kNonCompliant;
  EXPECT_EQ(st.tasks.size(), nc);
  EXPECT_EQ(st.generations.size(), st.extractions.size());
  // Shared generations are counted once per window that uses them.
  EXPECT_GE(failures, nc);
  const auto run = load_run(st);
  EXPECT_EQ(run.samples.size(), st.verdicts.size());
  EXPECT_LT(run.samples.size(), run.windows);
}

TEST(Run, MissingRunLogIsNotFound) {
  mvp::testing::TempDir dir;
  EXPECT_THROW(load_run(dir / "nope.jsonl"), NotFoundError);
  EXPECT_THROW(resolve_run_log("absent", dir.path()), NotFoundError);
}

TEST(Run, ResolveRunLogForms) {
  RunFixture fx(6, 12, mixed_backends(), {32});
  run_experiment(fx.cfg(), fx.opts());
  const auto log = fx.cfg().log_path();
  EXPECT_EQ(resolve_run_log(log.string()), log);
  EXPECT_EQ(resolve_run_log(log.parent_path().string()), log);
  EXPECT_EQ(resolve_run_log("test-run", fx.dir / "runs"), log);
}

// ---------------------------------------------------------------------------
// Annotation queue

struct QueueFixture : ::testing::Test {
  // One backend always answers in prose, the other always in JSON.
  RunFixture fx{4, 31, {mock_backend("json", "always-correct"), mock_backend("prose", "always-correct", 1.0, 1.0)}, {32}};
  RunConfig cfg = fx.cfg();
  void SetUp() override { run_experiment(cfg, fx.opts()); }
};

TEST_F(QueueFixture, OneTaskPerFailure) {
  RunStore store(cfg.log_path());
  const auto st = store.snapshot();
  EXPECT_EQ(st.tasks.size(), st.windows.size());
  for (const auto& [id, t] : st.tasks) {
    EXPECT_EQ(t.backend_id, "prose");
    EXPECT_EQ(t.status, TaskStatus::kPending);
    EXPECT_EQ(id.substr(0, 2), "t-");
  }
  // No verdicts until the labels arrive.
  EXPECT_TRUE(st.verdicts.empty());
  EXPECT_EQ(load_run(st).samples.size(), 0u);
}

TEST_F(QueueFixture, EnqueueIsIdempotent) {
  RunStore store(cfg.log_path());
  std::vector<GenKey> keys;
  for (const auto& [id, t] : store.snapshot().tasks) keys.push_back(t.key());
  const auto before = store.event_count();
  const auto tasks = enqueue_manual_annotation(store, cfg.run_id, keys, mvp::testing::fixed_clock);
  EXPECT_EQ(tasks.size(), keys.size());
  EXPECT_EQ(store.event_count(), before);
  EXPECT_TRUE(enqueue_manual_annotation(store, cfg.run_id, {}, mvp::testing::fixed_clock).empty());
  EXPECT_THROW(enqueue_manual_annotation(store, "other-run", keys, mvp::testing::fixed_clock), NotFoundError);

  GenKey compliant;
  for (const auto& [k, x] : store.snapshot().extractions) {
    if (x.status == parse::Status::kCompliant) compliant = k;
  }
  EXPECT_THROW(enqueue_manual_annotation(store, cfg.run_id, {compliant}, mvp::testing::fixed_clock), InvalidArgument);
}

ParsedAnswer label(bool y, const std::string& d) {
  ParsedAnswer a;
  a.identification = y;
  a.disease_label = d;
  return a;
}

TEST_F(QueueFixture, LabelTransitionsAndErrors) {
  RunStore store(cfg.log_path());
  const auto task_id = store.snapshot().tasks.begin()->first;
  const std::string first = cfg.classes.front(), second = cfg.classes.back();
  const auto t = submit_label(store, task_id, label(true, first), "ann-1", mvp::testing::fixed_clock);
  EXPECT_EQ(t.status, TaskStatus::kLabeled);
  EXPECT_EQ(t.label->source, AnswerSource::kHuman);
  EXPECT_EQ(t.annotator_id, "ann-1");
  EXPECT_THROW(submit_label(store, task_id, label(false, second), "ann-2", mvp::testing::fixed_clock), ConflictError);
  EXPECT_EQ(store.snapshot().tasks.at(task_id).label->disease_label, first);
  EXPECT_THROW(submit_label(store, "t-missing", label(true, second), "a", mvp::testing::fixed_clock), NotFoundError);
  const auto other = std::next(store.snapshot().tasks.begin())->first;
  EXPECT_THROW(submit_label(store, other, label(true, "SARC"), "a", mvp::testing::fixed_clock), InvalidArgument);
  EXPECT_EQ(store.snapshot().tasks.at(other).status, TaskStatus::kPending);

  // The label survives reopening the log.
  RunStore reopened(cfg.log_path());
  EXPECT_EQ(reopened.snapshot().tasks.at(task_id).status, TaskStatus::kLabeled);
}

TEST_F(QueueFixture, LastLabelCompletesTheVerdict) {
  RunStore store(cfg.log_path());
  const auto st = store.snapshot();
  std::size_t labeled = 0;
  for (const auto& [id, t] : st.tasks) {
    const auto& w = st.windows.at(t.window_ref.id());
    submit_label(store, id, label(*w.gold_identification, *w.gold_disease), "ann", mvp::testing::fixed_clock);
    ++labeled;
    EXPECT_EQ(store.snapshot().verdicts.count(t.window_ref.id()), 1u);
  }
  const auto run = load_run(store.snapshot());
  EXPECT_EQ(run.samples.size(), run.windows);
  for (const auto& [key, s] : eval::ensemble_scores(run.samples, run.ensemble, run.classes)) EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
  // The human answer is what the record carries for the failed generation.
  for (const auto& e : run_record(store.snapshot()).entries) {
    ASSERT_TRUE(e.answer.has_value());
    EXPECT_EQ(e.answer->source, e.backend_id == "prose" ? AnswerSource::kHuman : AnswerSource::kAuto);
  }
}

TEST(Queue, NoFailuresNoTasks) {
  RunFixture fx(5, 2, {mock_backend("a", "always-correct")}, {32});
  run_experiment(fx.cfg(), fx.opts());
  EXPECT_TRUE(RunStore(fx.cfg().log_path()).snapshot().tasks.empty());
}

TEST(Queue, ThreeFailuresThreeTasks) {
  RunFixture fx(3, 2, {mock_backend("a", "always-correct", 1.0, 1.0)}, {32});
  run_experiment(fx.cfg(), fx.opts());
  EXPECT_EQ(RunStore(fx.cfg().log_path()).snapshot().tasks.size(), 3u);
}

TEST(Queue, TaskCountTracksFailureRate) {
  // 4096 generations at a 14.1% failure rate land near 577 tasks.
  std::vector<json> backends;
  for (int i = 0; i < 4; ++i) backends.push_back(mock_backend("m" + std::to_string(i), "always-correct", 1.0, 0.141));
  RunFixture fx(256, 17, backends, {32, 64, 128, 256});
  fx.config["limit"] = 1024;
  const auto cfg = fx.cfg();
  run_experiment(cfg, fx.opts());
  const auto st = RunStore(cfg.log_path()).snapshot();
  EXPECT_EQ(st.windows.size(), 1024u);
  std::size_t nc = 0;
  for (const auto& [k, x] : st.extractions) nc += x.status == parse::Status::kNonCompliant;
  EXPECT_EQ(st.tasks.size(), nc);
  const double rate = static_cast<double>(nc) / static_cast<double>(st.generations.size());
  EXPECT_NEAR(rate, 0.141, 0.02);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, Validation) {
  RunFixture fx(3, 1, mixed_backends(), {32});
  auto j = fx.config;
  j["context_sizes"] = {48};
  EXPECT_THROW(RunConfig::from_json(j), InvalidArgument);
  j = fx.config;
  j["context_sizes"] = {32, 32};
  EXPECT_THROW(RunConfig::from_json(j), DuplicateError);
  j = fx.config;
  j["backends"] = json::array();
  EXPECT_THROW(RunConfig::from_json(j), InvalidArgument);
  j = fx.config;
  j["backends"] = {mock_backend("x", "always-correct"), mock_backend("x", "always-correct")};
  EXPECT_THROW(RunConfig::from_json(j), DuplicateError);
  j = fx.config;
  j["ensemble"] = {{"members", {"alpha"}}};
  EXPECT_THROW(RunConfig::from_json(j), InvalidArgument);
  j = fx.config;
  j["run_id"] = "../escape";
  EXPECT_THROW(RunConfig::from_json(j), InvalidArgument);
  j = fx.config;
  j.erase("corpus");
  EXPECT_THROW(RunConfig::from_json(j), ParseError);
}

TEST(Config, MocksInheritTheRunSeed) {
  RunFixture fx(3, 77, mixed_backends(), {32});
  const auto cfg = fx.cfg();
  EXPECT_EQ(cfg.backends[0].mock.seed, 77u);
  auto j = fx.config;
  j["backends"][0]["mock"]["seed"] = 5;
  EXPECT_EQ(RunConfig::from_json(j).backends[0].mock.seed, 5u);
  EXPECT_EQ(RunConfig::from_json(cfg.to_json()).config_hash(), cfg.config_hash());
}

TEST(Config, SelfConsistencyRules) {
  RunFixture fx(3, 1, {mock_backend("solo", "accuracy-p", 0.7)}, {32});
  auto j = fx.config;
  j["mode"] = "self-consistency";
  j["samples"] = 3;
  EXPECT_THROW(RunConfig::from_json(j), InvalidArgument);  // temperature 0
  j["backends"][0]["temperature"] = 0.7;
  const auto cfg = RunConfig::from_json(j);
  EXPECT_EQ(cfg.effective_ensemble().member_ids, (std::vector<std::string>{"solo#0", "solo#1", "solo#2"}));
  j["samples"] = 1;
  EXPECT_THROW(RunConfig::from_json(j), InvalidArgument);
  j["samples"] = 3;
  j["backends"].push_back(mock_backend("second", "always-correct"));
  EXPECT_THROW(RunConfig::from_json(j), InvalidArgument);
  auto mvp = fx.config;
  mvp["samples"] = 2;
  EXPECT_THROW(RunConfig::from_json(mvp), InvalidArgument);
}

TEST(Run, SelfConsistencyVotesOverSamples) {
  RunFixture fx(10, 6, {mock_backend("solo", "accuracy-p", 0.7)}, {32});
  fx.config["mode"] = "self-consistency";
  fx.config["samples"] = 5;
  fx.config["backends"][0]["temperature"] = 0.8;
  const auto record = run_experiment(fx.cfg(), fx.opts());
  const auto run = load_run(fx.cfg().log_path());
  EXPECT_EQ(record.entries.size(), run.windows * 5);
  ASSERT_FALSE(run.samples.empty());
  EXPECT_EQ(run.samples[0].votes.size(), 5u);
  EXPECT_TRUE(run.samples[0].votes.count("solo#4"));
  EXPECT_EQ(run.ensemble.member_ids.size(), 5u);
}

}  // namespace
}  // namespace mvp::orchestrator
