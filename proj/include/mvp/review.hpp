#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "mvp/orchestrator.hpp"
#include "mvp/store.hpp"

namespace httplib {
class Server;
}

namespace mvp::review {

struct ServerOptions {
  std::filesystem::path static_dir;  // optional UI bundle served at /
  std::size_t default_page_size = 20;
  std::size_t max_page_size = 200;
  orchestrator::Clock clock = orchestrator::utc_now;
};

// HTTP API over one run store:
//   GET  /tasks               ?status=pending|labeled|all&backend=&context=&page=&page_size=
//   GET  /tasks/{id}
//   POST /tasks/{id}/label    {"answer": "yes"|"no", "disease": "<class id>|Other", "annotator_id": "..."}
//   GET  /stats
// Errors carry {"error": <reason>, "message": <text>}.
class ReviewServer {
 public:
  ReviewServer(orchestrator::RunStore& store, ServerOptions opts = {});
  ~ReviewServer();

  // Binds and serves until stop(); returns false if binding failed.
  bool listen(const std::string& host, int port);
  // Binds to a free port and returns it; serve with listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();

  orchestrator::RunStore& store_;
  ServerOptions opts_;
  std::unique_ptr<httplib::Server> server_;
};

// Payload of GET /stats.
nlohmann::json stats(const orchestrator::RunState& state);

}  // namespace mvp::review
