#include <atomic>
#include <cstdio>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "medqa/service.hpp"

namespace medqa::service {

using nlohmann::json;

struct QaServer::Impl {
  std::shared_ptr<const Pipeline> pipeline;
  int max_concurrent;
  httplib::Server server;
  std::thread runner;
  std::atomic<int> in_flight{0};

  Impl(std::shared_ptr<const Pipeline> pipe, int max_conc)
      : pipeline(std::move(pipe)), max_concurrent(max_conc) {
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      json j{{"status", "ok"},
             {"trees", pipeline->knowledge->trees().size()},
             {"model_loaded", pipeline->model != nullptr}};
      res.set_content(j.dump(), "application/json");
    });

    server.Post("/question", [this](const httplib::Request& req, httplib::Response& res) {
      if (in_flight.load() >= max_concurrent) {
        res.status = 503;
        res.set_content(json{{"error", "server at capacity"}}.dump(), "application/json");
        return;
      }
      in_flight.fetch_add(1);
      struct Guard {
        std::atomic<int>& n;
        ~Guard() { n.fetch_sub(1); }
      } guard{in_flight};

      json j;
      try {
        j = json::parse(req.body);
      } catch (const json::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", std::string("malformed json: ") + e.what()}}.dump(),
                        "application/json");
        return;
      }
      QuestionRequest qr;
      qr.qid = j.value("qid", "");
      qr.title = j.value("title", "");
      qr.body = j.value("body", "");
      if (qr.qid.empty()) {
        res.status = 400;
        res.set_content(json{{"error", "missing qid"}}.dump(), "application/json");
        return;
      }
      if (qr.title.empty() && qr.body.empty()) {
        res.status = 400;
        res.set_content(json{{"error", "missing question text"}}.dump(), "application/json");
        return;
      }

      const auto ans = handle_question(qr, *pipeline);
      json prov = json::array();
      for (const auto& p : ans.provenance)
        prov.push_back(json{{"source", p.source}, {"entity", p.entity}, {"type", p.type}});
      json out{{"qid", qr.qid},
               {"answer", ans.text},
               {"elapsed_ms", ans.elapsed.count()},
               {"provenance", std::move(prov)}};
      res.set_content(out.dump(), "application/json");
    });
  }
};

QaServer::QaServer(std::shared_ptr<const Pipeline> pipeline, int max_concurrent)
    : impl_(std::make_unique<Impl>(std::move(pipeline), max_concurrent)) {}

QaServer::~QaServer() { stop(); }

int QaServer::start(int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port("0.0.0.0");
  } else if (!impl_->server.bind_to_port("0.0.0.0", port)) {
    throw ConfigError("cannot bind to port " + std::to_string(port));
  }
  impl_->runner = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void QaServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (impl_ && impl_->runner.joinable()) impl_->runner.join();
}

int serve(const PipelineConfig& config) {
  auto pipeline = std::make_shared<const Pipeline>(Pipeline::load(config));
  QaServer server(pipeline, config.max_concurrent);
  const int port = server.start(config.port);
  std::fprintf(stderr, "[medqa] serving on port %d (%zu trees, model %s)\n", port,
               pipeline->knowledge->trees().size(), pipeline->model ? "loaded" : "absent");
  // Block until interrupted.
  while (true) std::this_thread::sleep_for(std::chrono::seconds(1));
  return 0;
}

}  // namespace medqa::service
