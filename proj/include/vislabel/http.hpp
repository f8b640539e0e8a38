#pragma once

// HTTP binding for AnnotationService. Kept apart from service.hpp so the core
// library does not pull in the socket layer.

#include <httplib.h>

#include <string>

#include "vislabel/service.hpp"

namespace vislabel {

inline void bind_routes(httplib::Server& server, AnnotationService& service) {
  auto forward = [&service](const httplib::Request& in, httplib::Response& out) {
    Request req{in.method, in.path, in.body, in.get_header_value("Authorization")};
    auto res = service.handle(req);
    out.status = res.status;
    if (res.status != 204) out.set_content(res.body, res.content_type.c_str());
  };
  server.Get(R"(/v1(/.*)?)", forward);
  server.Post(R"(/v1(/.*)?)", forward);
}

// Blocks until the server stops.
inline bool serve(AnnotationService& service, const std::string& host, int port) {
  httplib::Server server;
  bind_routes(server, service);
  return server.listen(host, port);
}

}  // namespace vislabel
