#pragma once

// HTTP routes for the adjudication service. Requires cpp-httplib.

#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hhlink/adjudication.hpp"
#include "hhlink/data_io.hpp"

namespace hhlink {

namespace detail {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Exhausted: return 410;
    case ErrorCode::UnknownTask: return 404;
    case ErrorCode::InvalidIds: return 422;
    case ErrorCode::Schema:
    case ErrorCode::Parse:
    case ErrorCode::InvalidArgument: return 400;
    default: return 500;
  }
}

inline void send_error(httplib::Response& res, const Error& e) {
  res.status = http_status(e.code());
  res.set_content(nlohmann::json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump(),
                  "application/json");
}

}  // namespace detail

/// Mounts /api/next-task, /api/decision, /api/export and /api/stats.
/// Export warnings go to `warn`.
inline void register_adjudication_routes(httplib::Server& server, AdjudicationService& service,
                                         std::function<void(const std::string&)> warn = {}) {
  server.Get("/api/next-task", [&service](const httplib::Request& req, httplib::Response& res) {
    try {
      if (!req.has_param("session") || req.get_param_value("session").empty()) {
        throw Error(ErrorCode::InvalidArgument, "session parameter is required");
      }
      res.set_content(task_to_json(service.next_task(req.get_param_value("session"))).dump(), "application/json");
    } catch (const Error& e) {
      detail::send_error(res, e);
    }
  });
  server.Post("/api/decision", [&service](const httplib::Request& req, httplib::Response& res) {
    try {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("decision body: ") + e.what());
      }
      service.submit_decision(AdjudicationService::decision_from_json(body));
      res.set_content(R"({"status":"ok"})", "application/json");
    } catch (const Error& e) {
      detail::send_error(res, e);
    }
  });
  server.Get("/api/export", [&service, warn](const httplib::Request&, httplib::Response& res) {
    try {
      const auto exported = service.export_truth();
      if (warn)
        for (const auto& w : exported.warnings) warn(w);
      res.set_content(io::format_truth(exported.truth), "text/csv");
    } catch (const Error& e) {
      detail::send_error(res, e);
    }
  });
  server.Get("/api/stats", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(stats_to_json(service.stats()).dump(), "application/json");
  });
}

}  // namespace hhlink
