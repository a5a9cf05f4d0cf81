#pragma once

#include <memory>
#include <string>

#include "clonebot/service.hpp"

namespace httplib {
class Server;
}

namespace clonebot {

/// HTTP/1.1 + JSON front end for ChatService.
///
///   POST   /v1/sessions
///   POST   /v1/sessions/{id}/messages
///   DELETE /v1/sessions/{id}
///   GET    /v1/speakers
///   GET    /v1/health
///
/// Responses carry permissive CORS headers so a browser UI served from
/// another origin can call the API.
class HttpServer {
 public:
  explicit HttpServer(ChatService& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds to `port` (0 picks a free one); returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool listen_after_bind();
  void stop();
  bool is_running() const;

 private:
  ChatService& service_;
  std::unique_ptr<httplib::Server> server_;
};

/// Splits "host:port"; a bare port means 127.0.0.1.
std::pair<std::string, int> parse_address(const std::string& addr);

}  // namespace clonebot
