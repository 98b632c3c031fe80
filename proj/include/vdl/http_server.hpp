#pragma once

#include <functional>
#include <string>

// Eigen must come first: httplib pulls in <resolv.h>, whose `_res` macro
// collides with Eigen parameter names.
#include "vdl/session_service.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace vdl {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"code", status}, {"message", message}});
}

/// Runs `fn`, translating service and parse failures into `{code, message}` bodies.
inline void guarded(httplib::Response& res, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    send_error(res, e.status(), e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace detail

/**
 * Routes:
 *   POST /sessions                 -> 201 {"session_id"}
 *   GET  /sessions/{id}/display    -> 200 current display
 *   POST /sessions/{id}/labels     -> 200 iteration summary
 *   GET  /sessions/{id}/metrics    -> 200 [MetricRecord]
 *   GET  /assets/...               -> thumbnails under the asset root
 */
inline void mount_routes(httplib::Server& server, SessionService& service) {
  server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const std::string id = service.create_session(json::parse(req.body));
      detail::send_json(res, 201, {{"session_id", id}});
    });
  });
  server.Get(R"(/sessions/([^/]+)/display)", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, service.get_display(req.matches[1])); });
  });
  server.Post(R"(/sessions/([^/]+)/labels)", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, service.submit_labels(req.matches[1], json::parse(req.body))); });
  });
  server.Get(R"(/sessions/([^/]+)/metrics)", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, service.get_metrics(req.matches[1])); });
  });
  if (!service.asset_root().empty()) server.set_mount_point("/assets", service.asset_root().string());
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) detail::send_error(res, res.status, "not found");
  });
}

}  // namespace vdl
