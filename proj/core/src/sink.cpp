#include <mutex>
#include <thread>

#include "crucible/servers.hpp"
#include "httplib.h"

namespace crucible::servers {

Json to_json(const SinkCapture& c) {
  Json j{{"seq", c.seq},         {"received_at", c.received_at}, {"method", c.method},
         {"path", c.path},       {"headers", c.headers},         {"body", c.body}};
  if (c.body_json) j["body_json"] = *c.body_json;
  return j;
}

struct Sink::Impl {
  httplib::Server server;
  std::thread listener;
  std::string host;
  int port = 0;
  mutable std::mutex mu;
  std::vector<SinkCapture> captures;

  void record(const httplib::Request& req) {
    SinkCapture c;
    c.method = req.method;
    c.path = req.path;
    for (const auto& [k, v] : req.headers) c.headers[k] = v;
    c.body = req.body;
    if (!req.body.empty()) {
      try {
        c.body_json = Json::parse(req.body);
      } catch (const Json::exception&) {
      }
    }
    std::lock_guard lock(mu);
    c.seq = static_cast<std::int64_t>(captures.size()) + 1;
    c.received_at = utc_now_iso8601();
    captures.push_back(std::move(c));
  }
};

Sink::Sink(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

Sink::~Sink() { stop(); }

std::unique_ptr<Sink> Sink::start(int port, std::string host) {
  auto impl = std::make_unique<Impl>();
  Impl* self = impl.get();
  auto& srv = impl->server;

  srv.set_keep_alive_max_count(1);
  // httplib's default also sets SO_REUSEPORT, which would let a second sink
  // share the port silently.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  srv.set_pre_routing_handler([](const httplib::Request& req, httplib::Response& res) {
    using httplib::Server;
    if (req.method == "GET" && req.path == "/__captures") return Server::HandlerResponse::Unhandled;
    if (req.method != "POST") {
      res.status = 405;
      res.set_header("Allow", "POST");
      res.set_content(R"({"ok":false,"error":"method not allowed"})", "application/json");
      return Server::HandlerResponse::Handled;
    }
    if (req.has_header("Transfer-Encoding") || !req.has_header("Content-Length")) {
      res.status = 411;
      res.set_content(R"({"ok":false,"error":"Content-Length required"})", "application/json");
      return Server::HandlerResponse::Handled;
    }
    return Server::HandlerResponse::Unhandled;
  });
  srv.Post(".*", [self](const httplib::Request& req, httplib::Response& res) {
    self->record(req);
    res.status = 200;
    res.set_content(R"({"ok":true})", "application/json");
  });
  srv.Get("/__captures", [self](const httplib::Request&, httplib::Response& res) {
    Json out = Json::array();
    {
      std::lock_guard lock(self->mu);
      for (const auto& c : self->captures) out.push_back(to_json(c));
    }
    res.set_content(out.dump(), "application/json");
  });

  impl->host = host;
  if (port == 0) {
    impl->port = srv.bind_to_any_port(host);
    if (impl->port < 0) throw BindError("cannot bind sink on " + host);
  } else {
    if (!srv.bind_to_port(host, port)) throw BindError("cannot bind sink on " + host + ":" + std::to_string(port));
    impl->port = port;
  }
  impl->listener = std::thread([self] { self->server.listen_after_bind(); });
  srv.wait_until_ready();
  return std::unique_ptr<Sink>(new Sink(std::move(impl)));
}

int Sink::port() const { return impl_->port; }

std::string Sink::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port) + "/capture";
}

std::vector<SinkCapture> Sink::captures() const {
  std::lock_guard lock(impl_->mu);
  return impl_->captures;
}

std::size_t Sink::capture_count() const {
  std::lock_guard lock(impl_->mu);
  return impl_->captures.size();
}

void Sink::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

}  // namespace crucible::servers
