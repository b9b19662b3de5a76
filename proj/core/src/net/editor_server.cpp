#include "refgrid/net/editor_server.hpp"

#include <httplib.h>

namespace refgrid::net {

struct EditorServer::Impl {
  std::shared_ptr<EditorService> service;
  std::string host;
  httplib::Server server;
};

EditorServer::EditorServer(std::shared_ptr<EditorService> service, std::string host)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  impl_->host = std::move(host);
  auto handler = [svc = impl_->service](const httplib::Request& req, httplib::Response& res) {
    ApiResponse r = svc->handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  const std::string any = R"(/.*)";
  impl_->server.Get(any, handler);
  impl_->server.Post(any, handler);
  impl_->server.Put(any, handler);
  impl_->server.Delete(any, handler);
  impl_->server.Options(any, [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  impl_->server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS"},
                                     {"Access-Control-Allow-Headers", "Content-Type"}});
}

EditorServer::~EditorServer() { stop(); }

int EditorServer::bind(int port) {
  if (port == 0) return impl_->server.bind_to_any_port(impl_->host);
  return impl_->server.bind_to_port(impl_->host, port) ? port : -1;
}

void EditorServer::run() { impl_->server.listen_after_bind(); }

void EditorServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace refgrid::net
