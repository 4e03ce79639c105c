#include <chrono>

// Eigen before httplib: <resolv.h> defines a `_res` macro that clashes with it.
#include "weedid/error.hpp"
#include "weedid/serve/service.hpp"

#include <httplib.h>

namespace weedid::serve {

struct HttpFrontend::Impl {
  PredictionService& service;
  httplib::Server server;

  explicit Impl(PredictionService& s) : service(s) {}
};

namespace {

double monotonic_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void send(httplib::Response& res, const HttpReply& r) {
  res.status = r.status;
  for (const auto& [k, v] : r.headers) res.set_header(k, v);
  res.set_content(r.body, "application/json");
}

}  // namespace

HttpFrontend::HttpFrontend(PredictionService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  const auto& cfg = svc.config();
  const int threads = cfg.threads;
  srv.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  srv.set_payload_max_length(cfg.max_body_bytes);

  srv.Post("/v1/predict", [&svc, header = cfg.api_key_header](const httplib::Request& req, httplib::Response& res) {
    const auto key = req.get_header_value(header);
    const std::string client = key.empty() ? "addr:" + req.remote_addr : "key:" + key;
    send(res, svc.predict(req.body, client, monotonic_seconds()));
  });
  srv.Get("/v1/health", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.health()); });
  srv.Get("/v1/model", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.model_info()); });

  // Statuses produced by httplib itself (404, 413 on oversized bodies) get a
  // JSON body too.
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string code = res.status == 413 ? "payload_too_large" : res.status == 404 ? "not_found" : "error";
    res.set_content(nlohmann::json{{"error", code}, {"message", httplib::status_message(res.status)}}.dump(),
                    "application/json");
  });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpFrontend::run() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace weedid::serve
