#pragma once

#include "genonet/orchestrator.hpp"

#include <memory>
#include <string>

namespace genonet {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    /// Empty disables auth; otherwise every route but /health needs `Authorization: Bearer <token>`.
    std::string auth_token;
    std::size_t max_attachment_bytes = 8u << 20;
    std::size_t max_body_bytes = 32u << 20;

    /// GENONET_BIND_ADDR (`host` or `host:port`), GENONET_AUTH_TOKEN and
    /// GENONET_MAX_ATTACHMENT_BYTES.
    static ServiceConfig from_env();
};

/// HTTP front end of an orchestrator:
///   GET  /health
///   POST /sessions                      {"overrides": {...}}       -> 201 session
///   POST /sessions/{id}/messages        {"message", "attachments"} -> SSE stage events, then `turn`
///   GET  /sessions/{id}/transcript
/// Errors are `{"code", "message"}`. A messages request with
/// `Accept: application/json` gets the turn as one JSON document instead of a stream.
class Service {
public:
    Service(Orchestrator& orchestrator, ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket; port 0 picks a free one. Returns the port.
    int bind();
    /// Serves until stop(). Requires bind().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace genonet
