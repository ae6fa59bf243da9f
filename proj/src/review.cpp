#include "mvp/review.hpp"

#include <algorithm>
#include <set>

#include <httplib.h>

#include "mvp/parse.hpp"

namespace mvp::review {

using nlohmann::json;
using orchestrator::AnnotationTask;
using orchestrator::RunState;
using orchestrator::TaskStatus;

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason, const std::string& message) {
  send(res, status, {{"error", reason}, {"message", message}});
}

// Unsigned query parameter; nullopt when absent, throws when malformed.
std::optional<std::size_t> query_size(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string v = req.get_param_value(name);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos || v.size() > 9) {
    throw InvalidArgument("query parameter '" + name + "' must be a non-negative integer");
  }
  return static_cast<std::size_t>(std::stoul(v));
}

json task_view(const RunState& st, const AnnotationTask& t) {
  json j = t.to_json();
  if (auto w = st.windows.find(t.window_ref.id()); w != st.windows.end()) j["window_text"] = w->second.text;
  json classes = json::array();
  for (const auto& c : st.classes.classes()) classes.push_back({{"id", c.id}, {"label", c.label}, {"synonyms", c.synonyms}});
  classes.push_back({{"id", kOtherLabel}, {"label", kOtherLabel}, {"synonyms", json::array()}});
  j["classes"] = classes;
  return j;
}

}  // namespace

json stats(const RunState& state) {
  const auto loaded = orchestrator::load_run(state);
  std::size_t pending = 0;
  for (const auto& [id, t] : state.tasks) pending += t.status == TaskStatus::kPending;
  return {{"run_id", state.run_id},
          {"compliance", loaded.compliance().to_json()},
          {"tasks", {{"total", state.tasks.size()}, {"pending", pending}, {"labeled", state.tasks.size() - pending}}},
          {"windows", loaded.windows},
          {"complete_ballots", loaded.samples.size()},
          {"coverage", loaded.coverage()},
          {"finished", state.finished}};
}

ReviewServer::ReviewServer(orchestrator::RunStore& store, ServerOptions opts)
    : store_(store), opts_(std::move(opts)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const IoError& e) {
      send_error(res, 500, "store-failure", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  s.Get("/tasks", [this](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::size_t> page, page_size, context;
    try {
      page = query_size(req, "page");
      page_size = query_size(req, "page_size");
      context = query_size(req, "context");
    } catch (const InvalidArgument& e) {
      return send_error(res, 400, "bad-query", e.what());
    }
    const std::string status = req.has_param("status") ? req.get_param_value("status") : "pending";
    if (status != "pending" && status != "labeled" && status != "all") {
      return send_error(res, 400, "bad-query", "status must be pending, labeled or all");
    }
    const std::size_t p = page.value_or(1);
    const std::size_t size = page_size.value_or(opts_.default_page_size);
    if (p < 1 || size < 1 || size > opts_.max_page_size) {
      return send_error(res, 400, "bad-query", "page must be >= 1 and page_size within [1, " +
                                                   std::to_string(opts_.max_page_size) + "]");
    }
    const std::string backend = req.has_param("backend") ? req.get_param_value("backend") : "";

    json body = store_.read([&](const RunState& st) {
      std::vector<const AnnotationTask*> hits;
      for (const auto& [id, t] : st.tasks) {
        if (status != "all" && orchestrator::to_string(t.status) != status) continue;
        if (!backend.empty() && t.backend_id != backend) continue;
        if (context && t.window_ref.window_words != static_cast<int>(*context)) continue;
        hits.push_back(&t);
      }
      std::sort(hits.begin(), hits.end(), [](const AnnotationTask* a, const AnnotationTask* b) {
        return std::tie(a->window_ref, a->backend_id, a->sample, a->task_id) <
               std::tie(b->window_ref, b->backend_id, b->sample, b->task_id);
      });
      json tasks = json::array();
      for (std::size_t i = (p - 1) * size; i < hits.size() && i < p * size; ++i) tasks.push_back(hits[i]->to_json());
      return json{{"tasks", tasks}, {"total", hits.size()}, {"page", p}, {"page_size", size}};
    });
    send(res, 200, body);
  });

  s.Get(R"(/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    auto body = store_.read([&](const RunState& st) -> std::optional<json> {
      auto it = st.tasks.find(id);
      if (it == st.tasks.end()) return std::nullopt;
      return task_view(st, it->second);
    });
    if (!body) return send_error(res, 404, "not-found", "unknown task '" + id + "'");
    send(res, 200, *body);
  });

  s.Post(R"(/tasks/([^/]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const json in = json::parse(req.body, nullptr, false);
    if (in.is_discarded() || !in.is_object()) return send_error(res, 400, "malformed-request", "body must be a JSON object");
    if (!in.contains("answer")) return send_error(res, 400, "malformed-request", "missing 'answer'");
    if (!in.contains("disease") || !in.at("disease").is_string()) {
      return send_error(res, 400, "malformed-request", "missing or non-string 'disease'");
    }
    const auto ident = parse::interpret_identification(in.at("answer"));
    if (!ident) return send_error(res, 400, "invalid-label", "'answer' must be yes or no");

    ParsedAnswer label;
    label.identification = *ident;
    label.disease_label = in.at("disease").get<std::string>();
    label.source = AnswerSource::kHuman;
    const std::string annotator = in.value("annotator_id", std::string());

    try {
      auto task = orchestrator::submit_label(store_, id, label, annotator, opts_.clock);
      send(res, 200, task.to_json());
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not-found", e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const InvalidArgument& e) {
      send_error(res, 400, "invalid-label", e.what());
    }
  });

  s.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
    send(res, 200, store_.read([](const RunState& st) { return stats(st); }));
  });

  if (!opts_.static_dir.empty()) s.set_mount_point("/", opts_.static_dir.string());
}

bool ReviewServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

int ReviewServer::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool ReviewServer::listen_after_bind() { return server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_) server_->stop();
}

void ReviewServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace mvp::review
