#include "clonebot/http_server.hpp"

#include <httplib.h>

#include "clonebot/error.hpp"

namespace clonebot {

namespace {

void send(httplib::Response& res, const ServiceResponse& r) {
  res.status = r.status;
  if (r.status != 204) res.set_content(r.body.dump(), "application/json; charset=utf-8");
}

}  // namespace

HttpServer::HttpServer(ChatService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});

  s.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) { send(res, service_.health()); });
  s.Get("/v1/speakers", [this](const httplib::Request&, httplib::Response& res) { send(res, service_.speakers()); });
  s.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.create_session(req.body));
  });
  s.Post(R"(/v1/sessions/([^/]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.post_message(req.matches[1], req.body));
  });
  s.Delete(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, service_.delete_session(req.matches[1]));
  });
  s.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    nlohmann::ordered_json body;
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      res.status = 422;
      body["error"] = "data-error";
      body["message"] = e.what();
    } catch (const std::exception& e) {
      res.status = 500;
      body["error"] = "internal";
      body["message"] = e.what();
    }
    res.set_content(body.dump(), "application/json; charset=utf-8");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen_after_bind() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

bool HttpServer::is_running() const { return server_->is_running(); }

std::pair<std::string, int> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "127.0.0.1" : addr.substr(0, colon);
  const std::string port = colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used == port.size() && p >= 0 && p <= 65535) return {host, p};
  } catch (const std::exception&) {
  }
  throw ParameterError("invalid address: " + addr);
}

}  // namespace clonebot
