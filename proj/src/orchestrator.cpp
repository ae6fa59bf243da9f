#include "mvp/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>

#include "mvp/hash.hpp"
#include "mvp/jsonl.hpp"
#include "mvp/prompt.hpp"

namespace mvp::orchestrator {

using nlohmann::json;

std::string to_string(RunMode m) { return m == RunMode::kMvp ? "mvp" : "self-consistency"; }

RunMode run_mode_from_string(const std::string& s) {
  if (s == "mvp") return RunMode::kMvp;
  if (s == "self-consistency" || s == "self_consistency") return RunMode::kSelfConsistency;
  throw InvalidArgument("unknown run mode '" + s + "'");
}

std::string member_id(RunMode mode, const std::string& backend_id, std::size_t sample) {
  return mode == RunMode::kMvp ? backend_id : backend_id + "#" + std::to_string(sample);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Configuration

vote::EnsembleConfig RunConfig::effective_ensemble() const {
  vote::EnsembleConfig e;
  e.identification_threshold = ensemble.identification_threshold;
  if (mode == RunMode::kSelfConsistency) {
    for (std::size_t i = 0; i < samples; ++i) e.member_ids.push_back(member_id(mode, backends.at(0).backend_id, i));
  } else if (!ensemble.member_ids.empty()) {
    e.member_ids = ensemble.member_ids;
  } else {
    for (const auto& b : backends) e.member_ids.push_back(b.backend_id);
  }
  return e;
}

void RunConfig::validate() const {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." || run_id == "..") {
    throw InvalidArgument("run_id must be a non-empty name without '/'");
  }
  if (corpus.empty() || terms.empty()) throw InvalidArgument("corpus and terms paths are required");
  if (classes.empty() && top_k == 0) throw InvalidArgument("no classes configured and top_k is 0");
  if (context_sizes.empty()) throw InvalidArgument("no context sizes configured");
  std::set<int> seen;
  for (int s : context_sizes) {
    if (std::find(corpus::kDefaultWindowSizes.begin(), corpus::kDefaultWindowSizes.end(), s) ==
        corpus::kDefaultWindowSizes.end()) {
      throw InvalidArgument("context size " + std::to_string(s) + " is not one of 32, 64, 128, 256");
    }
    if (!seen.insert(s).second) throw DuplicateError("context size " + std::to_string(s) + " listed twice");
  }
  if (parallelism < 1) throw InvalidArgument("parallelism must be at least 1");
  filter.validate();
  if (backends.empty()) throw InvalidArgument("no backends configured");
  std::set<std::string> ids;
  for (const auto& b : backends) {
    b.validate();
    if (!ids.insert(b.backend_id).second) throw DuplicateError("backend '" + b.backend_id + "' listed twice");
  }
  if (mode == RunMode::kSelfConsistency) {
    if (backends.size() != 1) throw InvalidArgument("self-consistency runs use exactly one backend");
    if (samples < 2) throw InvalidArgument("self-consistency needs at least 2 samples");
    if (!(backends[0].temperature > 0.0)) throw InvalidArgument("self-consistency needs temperature > 0");
  } else {
    if (samples != 1) throw InvalidArgument("samples applies to self-consistency runs only");
    if (!ensemble.member_ids.empty()) {
      std::set<std::string> members(ensemble.member_ids.begin(), ensemble.member_ids.end());
      if (members != ids) throw InvalidArgument("ensemble members must match the configured backends");
    }
  }
  effective_ensemble().validate();
}

json RunConfig::to_json() const {
  json j = {{"run_id", run_id},
            {"corpus", corpus.string()},
            {"terms", terms.string()},
            {"classes", classes},
            {"top_k", top_k},
            {"abbreviations", abbreviations},
            {"context_sizes", context_sizes},
            {"mode", to_string(mode)},
            {"samples", samples},
            {"seed", seed},
            {"run_dir", run_dir.string()},
            {"filter", {{"min_term_chars", filter.min_term_chars}, {"max_doc_frequency", filter.max_doc_frequency}}},
            {"parallelism", parallelism}};
  if (!gold.empty()) j["gold"] = gold.string();
  if (!ensemble.member_ids.empty() || ensemble.identification_threshold) j["ensemble"] = ensemble.to_json();
  if (limit) j["limit"] = *limit;
  json bs = json::array();
  for (const auto& b : backends) bs.push_back(b.to_json());
  j["backends"] = bs;
  return j;
}

std::string RunConfig::config_hash() const {
  json j = to_json();
  // Scheduling knobs do not change results.
  j.erase("parallelism");
  return sha256_hex(j.dump());
}

namespace {

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? (base / path).lexically_normal() : path;
}

bool looks_like_path(const std::string& s) {
  return s.find('/') != std::string::npos || (s.size() > 5 && s.substr(s.size() - 5) == ".tmpl");
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    c.run_id = j.at("run_id").get<std::string>();
    c.corpus = resolve_path(base_dir, j.at("corpus").get<std::string>());
    c.terms = resolve_path(base_dir, j.at("terms").get<std::string>());
    if (j.contains("gold")) c.gold = resolve_path(base_dir, j.at("gold").get<std::string>());
    c.classes = j.value("classes", std::vector<std::string>{});
    c.top_k = j.value("top_k", c.top_k);
    c.abbreviations = j.value("abbreviations", c.abbreviations);
    c.context_sizes = j.value("context_sizes", c.context_sizes);
    if (j.contains("ensemble")) {
      const auto& e = j.at("ensemble");
      c.ensemble.member_ids = e.value("members", std::vector<std::string>{});
      if (e.contains("identification_threshold") && !e.at("identification_threshold").is_null()) {
        c.ensemble.identification_threshold = e.at("identification_threshold").get<std::size_t>();
      }
    }
    c.mode = run_mode_from_string(j.value("mode", std::string("mvp")));
    c.samples = j.value("samples", std::size_t{1});
    c.seed = j.value("seed", std::uint64_t{0});
    c.run_dir = resolve_path(base_dir, j.value("run_dir", std::string("runs")));
    if (j.contains("filter")) {
      const auto& f = j.at("filter");
      c.filter.min_term_chars = f.value("min_term_chars", c.filter.min_term_chars);
      c.filter.max_doc_frequency = f.value("max_doc_frequency", c.filter.max_doc_frequency);
    }
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("limit") && !j.at("limit").is_null()) c.limit = j.at("limit").get<std::size_t>();
    for (const auto& bj : j.at("backends")) {
      auto b = backend::BackendSpec::from_json(bj, base_dir);
      if (b.kind == backend::Kind::kScriptedMock && !(bj.contains("mock") && bj.at("mock").contains("seed"))) {
        b.mock.seed = c.seed;
      }
      if (looks_like_path(b.template_name)) b.template_name = resolve_path(base_dir, b.template_name).string();
      c.backends.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json j = json::parse(jsonl::read_file(path), nullptr, false);
  if (j.is_discarded()) throw ParseError("run config " + path.string() + " is not valid JSON");
  return from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Ballots and records

namespace {

std::optional<ParsedAnswer> answer_for(const RunState& st, const GenKey& key) {
  auto x = st.extractions.find(key);
  if (x == st.extractions.end()) return std::nullopt;
  if (x->second.status != parse::Status::kNonCompliant) return x->second.answer;
  auto t = st.task_by_key.find(key);
  if (t == st.task_by_key.end()) return std::nullopt;
  return st.tasks.at(t->second).label;
}

std::size_t samples_of(const RunState& st) { return st.config.value("samples", std::size_t{1}); }

struct MemberSlot {
  std::string member;
  GenKey key;
};

std::vector<MemberSlot> member_slots(const RunState& st, const std::string& window_id) {
  std::vector<MemberSlot> out;
  const RunMode mode = run_mode_from_string(st.mode);
  const std::size_t k = samples_of(st);
  auto wp = st.window_prompts.find(window_id);
  if (wp == st.window_prompts.end()) return out;
  for (const auto& [backend_id, hash] : wp->second) {
    for (std::size_t s = 0; s < k; ++s) out.push_back({member_id(mode, backend_id, s), {backend_id, hash, s}});
  }
  return out;
}

// Complete ballot of a window, or nullopt while any member's answer is missing.
std::optional<vote::Ballot<ParsedAnswer>> window_ballot(const RunState& st, const std::string& window_id) {
  vote::Ballot<ParsedAnswer> ballot;
  for (const auto& slot : member_slots(st, window_id)) {
    auto a = answer_for(st, slot.key);
    if (!a) return std::nullopt;
    ballot.emplace(slot.member, *a);
  }
  for (const auto& m : st.ensemble.member_ids) {
    if (!ballot.count(m)) return std::nullopt;
  }
  return ballot;
}

std::optional<json> verdict_event(const RunState& st, const std::string& window_id) {
  auto ballot = window_ballot(st, window_id);
  if (!ballot) return std::nullopt;
  vote::Ballot<bool> idents;
  vote::Ballot<std::string> labels;
  for (const auto& [m, a] : *ballot) {
    idents.emplace(m, a.identification);
    labels.emplace(m, a.disease_label);
  }
  return json{{"type", "verdict"},
              {"window", window_id},
              {"identification", vote::vote_identification(idents, st.ensemble).to_json()},
              {"classification", vote::vote_classification(labels, st.ensemble).to_json()}};
}

std::string task_id_for(const std::string& run_id, const GenKey& key) {
  const auto& [backend_id, hash, sample] = key;
  return "t-" + sha256_hex(run_id + '\n' + backend_id + '\n' + hash + '\n' + std::to_string(sample)).substr(0, 16);
}

json gen_fields(const GenKey& key) {
  return {{"backend_id", std::get<0>(key)}, {"prompt_hash", std::get<1>(key)}, {"sample", std::get<2>(key)}};
}

}  // namespace

json RunEntry::to_json() const {
  json j = {{"window", window.id()},
            {"backend_id", backend_id},
            {"sample", sample},
            {"prompt_hash", prompt_hash},
            {"raw_text", raw_text},
            {"status", parse::to_string(status)}};
  if (answer) j["answer"] = answer->to_json();
  if (task_id) j["task_id"] = *task_id;
  return j;
}

json RunRecord::to_json() const {
  json es = json::array();
  for (const auto& e : entries) es.push_back(e.to_json());
  json vs = json::object();
  for (const auto& [w, v] : verdicts) vs[w] = v;
  return {{"run_id", run_id}, {"config_hash", config_hash}, {"started_at", started_at},
          {"entries", es},    {"verdicts", vs},             {"finished", finished}};
}

RunRecord run_record(const RunState& st) {
  RunRecord r;
  r.run_id = st.run_id;
  r.config_hash = st.config_hash;
  r.started_at = st.started_at;
  r.finished = st.finished;
  for (const auto& [window_id, window] : st.windows) {
    for (const auto& slot : member_slots(st, window_id)) {
      auto g = st.generations.find(slot.key);
      if (g == st.generations.end()) continue;
      RunEntry e;
      e.window = window.ref;
      e.backend_id = std::get<0>(slot.key);
      e.prompt_hash = std::get<1>(slot.key);
      e.sample = std::get<2>(slot.key);
      e.raw_text = g->second.raw_text;
      if (auto x = st.extractions.find(slot.key); x != st.extractions.end()) e.status = x->second.status;
      e.answer = answer_for(st, slot.key);
      if (auto t = st.task_by_key.find(slot.key); t != st.task_by_key.end()) e.task_id = t->second;
      r.entries.push_back(std::move(e));
    }
  }
  for (const auto& [w, v] : st.verdicts) r.verdicts.emplace(w, v);
  return r;
}

// ---------------------------------------------------------------------------
// Annotation queue

std::vector<AnnotationTask> enqueue_manual_annotation(RunStore& store, const std::string& run_id,
                                                      const std::vector<GenKey>& failures, const Clock& clock) {
  std::vector<std::string> ids;
  store.transact([&](const RunState& st) {
    if (st.run_id != run_id) throw NotFoundError("unknown run '" + run_id + "'");
    std::vector<json> events;
    std::set<std::string> fresh;
    for (const auto& key : failures) {
      if (auto t = st.task_by_key.find(key); t != st.task_by_key.end()) {
        ids.push_back(t->second);
        continue;
      }
      auto g = st.generations.find(key);
      if (g == st.generations.end()) throw NotFoundError("no generation for " + std::get<0>(key) + " / " + std::get<1>(key));
      auto x = st.extractions.find(key);
      if (x == st.extractions.end() || x->second.status != parse::Status::kNonCompliant) {
        throw InvalidArgument("generation " + std::get<0>(key) + " / " + std::get<1>(key) + " is not an extraction failure");
      }
      const std::string id = task_id_for(run_id, key);
      ids.push_back(id);
      if (!fresh.insert(id).second) continue;
      json e = gen_fields(key);
      e["type"] = "task";
      e["task_id"] = id;
      e["window"] = g->second.window_id;
      e["at"] = clock();
      events.push_back(std::move(e));
    }
    return events;
  });
  return store.read([&](const RunState& st) {
    std::vector<AnnotationTask> out;
    for (const auto& id : ids) out.push_back(st.tasks.at(id));
    return out;
  });
}

AnnotationTask submit_label(RunStore& store, const std::string& task_id, ParsedAnswer label,
                            const std::string& annotator_id, const Clock& clock) {
  label.source = AnswerSource::kHuman;
  store.transact([&](const RunState& st) {
    auto it = st.tasks.find(task_id);
    if (it == st.tasks.end()) throw NotFoundError("unknown task '" + task_id + "'");
    if (it->second.status == TaskStatus::kLabeled) throw ConflictError("task '" + task_id + "' is already labeled");
    if (!st.classes.is_valid_label(label.disease_label)) {
      throw InvalidArgument("disease label '" + label.disease_label + "' is not a configured class or Other");
    }
    std::vector<json> events{{{"type", "label"},
                              {"task_id", task_id},
                              {"answer", label.to_json()},
                              {"annotator_id", annotator_id},
                              {"at", clock()}}};
    // A label may complete ballots of every window sharing the prompt.
    RunState next = st;
    next.apply(events.front());
    const GenKey key = it->second.key();
    for (const auto& [window_id, bound] : next.window_prompts) {
      auto b = bound.find(std::get<0>(key));
      if (b == bound.end() || b->second != std::get<1>(key) || next.verdicts.count(window_id)) continue;
      if (auto v = verdict_event(next, window_id)) events.push_back(std::move(*v));
    }
    return events;
  });
  return store.read([&](const RunState& st) { return st.tasks.at(task_id); });
}

// ---------------------------------------------------------------------------
// Running

namespace {

std::vector<json> verdict_events(const RunState& st) {
  std::vector<json> out;
  for (const auto& [window_id, w] : st.windows) {
    if (st.verdicts.count(window_id)) continue;
    if (auto v = verdict_event(st, window_id)) out.push_back(std::move(*v));
  }
  return out;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

RunRecord run_experiment(const RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const Clock clock = opts.clock ? opts.clock : Clock(utc_now);

  const auto docs = corpus::load_corpus(cfg.corpus);
  const auto terms = corpus::load_term_list(cfg.terms);
  std::optional<corpus::GoldTable> gold;
  if (!cfg.gold.empty()) gold = corpus::load_gold(cfg.gold);

  const auto index = corpus::apply_weak_supervision_filters(corpus::build_inverted_index(docs, terms), cfg.filter);
  const auto class_ids = cfg.classes.empty() ? corpus::select_top_diseases(index, terms, cfg.top_k) : cfg.classes;
  if (class_ids.empty()) throw InvalidArgument("no disease survives the weak-supervision filters");
  const auto classes = parse::ClassSet::from_terms(terms, class_ids, cfg.abbreviations);

  auto windows = corpus::extract_context_windows(docs, index, terms, class_ids, cfg.context_sizes, gold ? &*gold : nullptr);
  if (cfg.limit && windows.size() > *cfg.limit) windows.resize(*cfg.limit);

  // Backends and their templates.
  auto shared_gold = gold ? std::make_shared<const corpus::GoldTable>(*gold) : nullptr;
  std::vector<std::unique_ptr<backend::Backend>> owned;
  std::vector<backend::Backend*> backends;
  std::vector<prompt::PromptTemplate> templates;
  for (auto spec : cfg.backends) {
    if (spec.kind == backend::Kind::kScriptedMock) {
      if (!spec.mock.gold) spec.mock.gold = shared_gold;
      spec.mock.classes = classes;
    }
    templates.push_back(prompt::resolve_template(spec.template_name));
    owned.push_back(backend::make_backend(spec));
    backends.push_back(owned.back().get());
  }

  // Render every prompt up front; prompts[w * B + b].
  std::vector<prompt::RenderedPrompt> prompts;
  prompts.reserve(windows.size() * backends.size());
  for (const auto& w : windows) {
    for (const auto& t : templates) prompts.push_back(prompt::render_prompt(t, w));
  }

  RunStore store(cfg.log_path());
  const auto effective = cfg.effective_ensemble();
  store.transact([&](const RunState& st) {
    std::vector<json> events;
    if (st.run_id.empty()) {
      events.push_back({{"type", "run_start"},
                        {"run_id", cfg.run_id},
                        {"config_hash", cfg.config_hash()},
                        {"config", cfg.to_json()},
                        {"classes", classes.to_json()},
                        {"ensemble", effective.to_json()},
                        {"mode", to_string(cfg.mode)},
                        {"at", clock()}});
    } else if (st.run_id != cfg.run_id || st.config_hash != cfg.config_hash()) {
      throw ConflictError("run log " + cfg.log_path().string() + " belongs to a different configuration");
    }
    std::set<std::string> new_prompts;
    for (const auto& p : prompts) {
      if (st.prompts.count(p.content_hash) || !new_prompts.insert(p.content_hash).second) continue;
      events.push_back({{"type", "prompt"},
                        {"prompt_hash", p.content_hash},
                        {"template_id", p.template_id},
                        {"window", p.window_ref.id()},
                        {"text", p.text}});
    }
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const std::string id = windows[w].ref.id();
      if (st.windows.count(id)) continue;
      json bound = json::object();
      for (std::size_t b = 0; b < backends.size(); ++b) bound[backends[b]->id()] = prompts[w * backends.size() + b].content_hash;
      events.push_back({{"type", "window"}, {"window", windows[w].to_json()}, {"prompts", bound}});
    }
    return events;
  });

  // Repair a log cut between a generation and its extraction or task.
  {
    const RunState st = store.snapshot();
    std::vector<json> events;
    std::vector<GenKey> failures;
    for (const auto& [key, g] : st.generations) {
      auto x = st.extractions.find(key);
      parse::Status status;
      if (x == st.extractions.end()) {
        const auto& tmpl = templates.at(std::distance(
            cfg.backends.begin(), std::find_if(cfg.backends.begin(), cfg.backends.end(),
                                               [&](const auto& b) { return b.backend_id == std::get<0>(key); })));
        auto r = parse::extract_json(g.raw_text, classes, tmpl.keys);
        status = r.status;
        json e = gen_fields(key);
        e["type"] = "extraction";
        e["result"] = r.to_json();
        events.push_back(std::move(e));
      } else {
        status = x->second.status;
      }
      if (status == parse::Status::kNonCompliant && !st.task_by_key.count(key)) failures.push_back(key);
    }
    store.append(events);
    if (!failures.empty()) enqueue_manual_annotation(store, cfg.run_id, failures, clock);
  }

  // Pending work in canonical order, skipping answered (backend, prompt, sample).
  std::vector<backend::WorkItem> pending;
  {
    const RunState st = store.snapshot();
    std::set<GenKey> planned;
    for (std::size_t w = 0; w < windows.size(); ++w) {
      for (std::size_t b = 0; b < backends.size(); ++b) {
        const std::size_t p = w * backends.size() + b;
        for (std::size_t s = 0; s < cfg.samples; ++s) {
          GenKey key{backends[b]->id(), prompts[p].content_hash, s};
          if (st.generations.count(key) || !planned.insert(key).second) continue;
          pending.push_back({b, p, s});
        }
      }
    }
  }
  const std::size_t budget = opts.stop_after ? std::min(*opts.stop_after, pending.size()) : pending.size();
  const std::size_t chunk = std::max<std::size_t>(16, cfg.parallelism * 4);

  for (std::size_t start = 0; start < budget; start += chunk) {
    const std::size_t end = std::min(budget, start + chunk);
    std::vector<backend::WorkItem> items(pending.begin() + static_cast<std::ptrdiff_t>(start),
                                         pending.begin() + static_cast<std::ptrdiff_t>(end));
    auto results = backend::run_work(backends, prompts, items, cfg.parallelism);

    std::vector<json> events;
    std::vector<GenKey> failures;
    const backend::BatchEntry* first_error = nullptr;
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      if (!r.ok()) {
        if (!first_error) first_error = &r;
        continue;
      }
      const GenKey key{r.backend_id, r.prompt_hash, r.sample};
      const auto& p = prompts[items[i].prompt];
      json g = gen_fields(key);
      g["type"] = "generation";
      g["window"] = p.window_ref.id();
      g["raw_text"] = r.result->raw_text;
      g["attempt_count"] = r.result->attempt_count;
      events.push_back(std::move(g));
      auto x = parse::extract_json(r.result->raw_text, classes, templates[items[i].backend].keys);
      if (x.status == parse::Status::kNonCompliant) failures.push_back(key);
      json e = gen_fields(key);
      e["type"] = "extraction";
      e["result"] = x.to_json();
      events.push_back(std::move(e));
    }
    store.append(events);
    if (!failures.empty()) enqueue_manual_annotation(store, cfg.run_id, failures, clock);
    if (first_error) {
      throw backend::BackendError("run aborted, partial log kept: " + first_error->backend_id + ": " +
                                  first_line(first_error->error));
    }
    if (opts.progress) opts.progress(end, pending.size());
  }

  if (budget == pending.size()) {
    store.transact([&](const RunState& st) {
      auto events = verdict_events(st);
      if (!st.finished) {
        std::size_t failures = 0;
        for (const auto& [k, x] : st.extractions) failures += x.status == parse::Status::kNonCompliant;
        events.push_back({{"type", "run_end"},
                          {"windows", st.windows.size()},
                          {"generations", st.generations.size()},
                          {"non_compliant", failures},
                          {"at", clock()}});
      }
      return events;
    });
  }
  return run_record(store.snapshot());
}

// ---------------------------------------------------------------------------
// Loading

parse::ComplianceReport LoadedRun::compliance() const {
  std::map<std::string, std::vector<parse::Status>> by_backend;
  for (const auto& [key, x] : state.extractions) by_backend[std::get<0>(key)].push_back(x.status);
  std::vector<std::pair<std::string, std::vector<parse::Status>>> rows;
  std::set<std::string> listed;
  for (const auto& b : state.config.value("backends", json::array())) {
    const auto id = b.at("backend_id").get<std::string>();
    if (listed.insert(id).second) rows.push_back({id, by_backend[id]});
  }
  for (auto& [id, statuses] : by_backend) {
    if (listed.insert(id).second) rows.push_back({id, statuses});
  }
  return parse::compliance_report(rows);
}

LoadedRun load_run(const RunState& state) {
  LoadedRun out;
  out.state = state;
  out.ensemble = state.ensemble;
  out.classes = state.classes.ids();
  out.windows = state.windows.size();
  for (const auto& [window_id, w] : state.windows) {
    if (!w.gold_identification || !w.gold_disease) continue;
    auto ballot = window_ballot(state, window_id);
    if (!ballot) continue;
    out.samples.push_back({w.ref, corpus::GoldLabel{*w.gold_identification, *w.gold_disease}, std::move(*ballot)});
  }
  return out;
}

std::vector<eval::ResultRow> results_rows(const LoadedRun& run) {
  const auto mvp = eval::ensemble_scores(run.samples, run.ensemble, run.classes);
  std::vector<std::pair<std::string, eval::ScoreGrid>> members;
  for (const auto& m : run.ensemble.member_ids) members.push_back({m, eval::member_scores(run.samples, m, run.classes)});
  std::vector<eval::ResultRow> rows;
  for (const eval::Task task : {eval::Task::kIdentification, eval::Task::kClassification}) {
    std::set<int> contexts;
    for (const auto& [key, s] : mvp) {
      if (key.first == task) contexts.insert(key.second);
    }
    for (int c : contexts) {
      std::vector<std::pair<std::string, eval::AprfScores>> per_model;
      for (const auto& [m, grid] : members) per_model.push_back({m, grid.at({task, c})});
      auto block = eval::build_results_table(per_model, mvp.at({task, c}), c, task);
      rows.insert(rows.end(), block.begin(), block.end());
    }
  }
  return rows;
}

LoadedRun load_run(const std::filesystem::path& log_path) {
  if (!std::filesystem::exists(log_path)) throw NotFoundError("no run log at " + log_path.string());
  RunStore store(log_path);
  return load_run(store.snapshot());
}

std::filesystem::path resolve_run_log(const std::string& run, const std::filesystem::path& runs_root) {
  const std::filesystem::path p(run);
  if (std::filesystem::is_regular_file(p)) return p;
  if (std::filesystem::is_directory(p) && std::filesystem::exists(p / "events.jsonl")) return p / "events.jsonl";
  const auto under_root = runs_root / run / "events.jsonl";
  if (std::filesystem::exists(under_root)) return under_root;
  throw NotFoundError("unknown run '" + run + "'");
}

}  // namespace mvp::orchestrator
