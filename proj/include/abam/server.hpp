// HTTP API over an AnnotationStore for the annotation UI.
//
//   GET  /api/tasks/next?annotator=ID   next unanswered task (204 when done)
//   GET  /api/tasks/{task_id}           one task record
//   POST /api/responses                 submit a response record
//   GET  /api/responses                 full response log, JSONL
//   GET  /api/progress?annotator=ID     progress and agreement so far
//
// Task and response bodies are the JSONL records, one object per payload.

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>

#include "abam/annotation.hpp"
#include "httplib.h"

namespace abam {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Agreement over the tasks that currently have exactly two annotators.
inline std::optional<IaaReport> iaa_so_far(const AnnotationStore& store) {
  const auto snap = store.snapshot();
  std::vector<AnnotationTask> done;
  for (const auto& t : store.tasks()) {
    auto it = snap.find(t.id);
    if (it != snap.end() && it->second.size() == 2) done.push_back(t);
  }
  if (done.empty()) return std::nullopt;
  return iaa_report(snap, done);
}

class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationStore& store, std::optional<std::filesystem::path> static_dir = {})
      : store_(store) {
    routes();
    if (static_dir) server_.set_mount_point("/", static_dir->string());
  }

  /// Binds to a free port and returns it.
  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  /// Blocks until stop().
  bool serve() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void routes() {
    server_.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      const auto annotator = req.get_param_value("annotator");
      if (annotator.empty()) return json_reply(res, 400, {{"error", "missing annotator parameter"}});
      const auto* task = store_.next_task(annotator);
      if (!task) {
        res.status = 204;
        return;
      }
      json_reply(res, 200, to_json(*task));
    });

    server_.Get(R"(/api/tasks/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto* task = store_.find_task(req.matches[1]);
      if (!task) return json_reply(res, 404, {{"error", "unknown task id " + std::string(req.matches[1])}});
      json_reply(res, 200, to_json(*task));
    });

    server_.Post("/api/responses", [this](const httplib::Request& req, httplib::Response& res) {
      AnnotatorResponse r;
      try {
        r = response_from_json(nlohmann::json::parse(req.body));
      } catch (const nlohmann::json::exception& e) {
        return json_reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
      } catch (const AnnotationError& e) {
        return json_reply(res, 400, {{"error", e.what()}});
      }
      if (r.timestamp.empty()) r.timestamp = utc_timestamp();
      try {
        auto ack = store_.record(r);
        json_reply(res, 201, {{"status", "ok"}, {"sequence", ack.sequence}, {"superseded", ack.superseded}});
      } catch (const AnnotationError& e) {
        json_reply(res, e.kind() == AnnotationError::Kind::UnknownTask ? 404 : 400, {{"error", e.what()}});
      }
    });

    server_.Get("/api/responses", [this](const httplib::Request&, httplib::Response& res) {
      std::string body;
      for (const auto& r : store_.log()) body += to_json(r).dump() + "\n";
      res.set_content(body, "application/x-ndjson");
    });

    server_.Get("/api/progress", [this](const httplib::Request& req, httplib::Response& res) {
      const auto annotator = req.get_param_value("annotator");
      nlohmann::json body{{"tasks", store_.tasks().size()}};
      if (!annotator.empty()) {
        auto p = store_.progress(annotator);
        body["annotator"] = annotator;
        body["answered"] = p.answered;
        body["total"] = p.total;
      }
      auto iaa = iaa_so_far(store_);
      body["iaa"] = iaa ? to_json(*iaa) : nlohmann::json(nullptr);
      json_reply(res, 200, body);
    });
  }

  AnnotationStore& store_;
  httplib::Server server_;
};

}  // namespace abam
