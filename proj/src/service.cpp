#include "genonet/service.hpp"

#include "genonet/text.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>

namespace genonet {

ServiceConfig ServiceConfig::from_env()
{
    ServiceConfig c;
    auto addr = env_or("GENONET_BIND_ADDR", "");
    if (!addr.empty()) {
        // host, host:port, [v6] or [v6]:port; a bare v6 address has no port.
        std::string port;
        if (addr.front() == '[') {
            auto close = addr.find(']');
            if (close == std::string::npos) throw InvalidArgument("GENONET_BIND_ADDR: unbalanced '[' in " + addr);
            c.host = addr.substr(1, close - 1);
            if (close + 1 < addr.size()) {
                if (addr[close + 1] != ':') throw InvalidArgument("GENONET_BIND_ADDR: expected ':' after ']' in " + addr);
                port = addr.substr(close + 2);
            }
        } else if (std::count(addr.begin(), addr.end(), ':') == 1) {
            c.host = addr.substr(0, addr.find(':'));
            port = addr.substr(addr.find(':') + 1);
        } else {
            c.host = addr;
        }
        if (!port.empty()) {
            int n = -1;
            auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), n);
            if (ec != std::errc() || end != port.data() + port.size() || n < 0 || n > 65535)
                throw InvalidArgument("GENONET_BIND_ADDR: bad port in " + addr);
            c.port = n;
        }
    }
    c.auth_token = env_or("GENONET_AUTH_TOKEN", "");
    auto cap = env_or("GENONET_MAX_ATTACHMENT_BYTES", "");
    if (!cap.empty()) c.max_attachment_bytes = std::stoull(cap);
    c.max_body_bytes = std::max(c.max_body_bytes, c.max_attachment_bytes * 4 + (1u << 20));
    return c;
}

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message)
{
    res.status = status;
    res.set_content(nlohmann::json{{"code", code}, {"message", message}}.dump(), "application/json");
}

int status_for(const Error& e)
{
    const auto& code = e.code();
    if (code == "SessionNotFound") return 404;
    if (code == "InvalidOverride" || code == "InvalidArgument") return 400;
    return 500;
}

std::string sse_event(const std::string& event, const nlohmann::json& data)
{
    return "event: " + event + "\ndata: " + data.dump() + "\n\n";
}

} // namespace

struct Service::Impl {
    Orchestrator& orch;
    ServiceConfig config;
    httplib::Server server;
    int port = -1;

    Impl(Orchestrator& o, ServiceConfig c) : orch(o), config(std::move(c)) { routes(); }

    bool authorized(const httplib::Request& req) const
    {
        if (config.auth_token.empty()) return true;
        return req.get_header_value("Authorization") == "Bearer " + config.auth_token;
    }

    void routes()
    {
        server.set_payload_max_length(config.max_body_bytes);

        server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (req.path == "/health" || authorized(req)) return httplib::Server::HandlerResponse::Unhandled;
            send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
            res.set_header("WWW-Authenticate", "Bearer");
            return httplib::Server::HandlerResponse::Handled;
        });

        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            switch (res.status) {
            case 404: send_error(res, 404, "NotFound", "no such route"); break;
            case 413: send_error(res, 413, "PayloadTooLarge", "request body over the configured cap"); break;
            default: send_error(res, res.status, "HttpError", "HTTP status " + std::to_string(res.status)); break;
            }
        });

        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const Error& e) {
                send_error(res, status_for(e), e.code(), e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "Internal", e.what());
            }
        });

        server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            const auto& d = orch.defaults();
            res.set_content(nlohmann::json{{"status", "ok"},
                                           {"provider", llm::to_string(d.provider)},
                                           {"backend", to_string(d.backend)},
                                           {"model", orch.gateway().config().model},
                                           {"cassette_entries", orch.gateway().cassette().size()},
                                           {"auth", !config.auth_token.empty()}}
                                .dump(),
                            "application/json");
        });

        server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json overrides = nlohmann::json::object();
            if (!trim(req.body).empty()) {
                auto body = nlohmann::json::parse(req.body, nullptr, false);
                if (body.is_discarded() || !body.is_object())
                    return send_error(res, 400, "InvalidArgument", "body must be a JSON object");
                overrides = body.value("overrides", nlohmann::json::object());
            }
            auto info = orch.create_session(overrides);
            res.status = 201;
            res.set_header("Location", "/sessions/" + info.id);
            res.set_content(to_json(info).dump(), "application/json");
        });

        server.Get(R"(/sessions/([A-Za-z0-9_-]+)/transcript)", [this](const httplib::Request& req, httplib::Response& res) {
            res.set_content(orch.transcript(req.matches[1])->to_json().dump(), "application/json");
        });

        server.Post(R"(/sessions/([A-Za-z0-9_-]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
            std::string id = req.matches[1];
            orch.transcript(id); // SessionNotFound before any streaming

            auto body = nlohmann::json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object())
                return send_error(res, 400, "InvalidArgument", "body must be a JSON object");
            TurnInput input;
            if (body.contains("message") && !body["message"].is_string())
                return send_error(res, 400, "InvalidArgument", "message must be a string");
            input.message = body.value("message", "");
            for (const auto& a : body.value("attachments", nlohmann::json::array())) {
                if (!a.is_object() || !a.contains("content") || !a["content"].is_string())
                    return send_error(res, 400, "InvalidArgument", "attachments need a string content");
                Attachment att{a.value("name", "attachment"), a["content"].get<std::string>()};
                if (att.content.size() > config.max_attachment_bytes)
                    return send_error(res, 413, "PayloadTooLarge",
                                      "attachment '" + att.name + "' is " + std::to_string(att.content.size()) +
                                          " bytes; the cap is " + std::to_string(config.max_attachment_bytes));
                input.attachments.push_back(std::move(att));
            }
            if (trim(input.message).empty() && input.attachments.empty())
                return send_error(res, 400, "InvalidArgument", "empty message");

            if (req.get_header_value("Accept").find("application/json") != std::string::npos) {
                auto r = orch.handle_turn(id, input);
                res.set_content(nlohmann::json{{"turn", r.turn}, {"reply", r.reply}, {"ok", r.ok}}.dump(),
                                "application/json");
                return;
            }

            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [this, id, input](std::size_t, httplib::DataSink& sink) {
                bool open = true;
                auto write = [&](const std::string& chunk) {
                    if (open) open = sink.write(chunk.data(), chunk.size());
                };
                try {
                    auto r = orch.handle_turn(id, input, [&](const std::string& stage, const nlohmann::json& data) {
                        write(sse_event(stage, data));
                    });
                    write(sse_event("turn", {{"turn", r.turn}, {"reply", r.reply}, {"ok", r.ok}}));
                } catch (const Error& e) {
                    write(sse_event("error", {{"code", e.code()}, {"message", e.what()}}));
                } catch (const std::exception& e) {
                    write(sse_event("error", {{"code", "Internal"}, {"message", e.what()}}));
                }
                sink.done();
                return true;
            });
        });
    }
};

Service::Service(Orchestrator& orchestrator, ServiceConfig config)
    : impl_(std::make_unique<Impl>(orchestrator, std::move(config)))
{
}

Service::~Service()
{
    stop();
}

int Service::bind()
{
    auto& i = *impl_;
    if (i.config.port == 0)
        i.port = i.server.bind_to_any_port(i.config.host);
    else
        i.port = i.server.bind_to_port(i.config.host, i.config.port) ? i.config.port : -1;
    if (i.port < 0) throw IoError("cannot bind " + i.config.host + ":" + std::to_string(i.config.port));
    return i.port;
}

void Service::run()
{
    if (impl_->port < 0) throw InvalidArgument("Service::run before bind");
    impl_->server.listen_after_bind();
}

void Service::stop()
{
    if (impl_) impl_->server.stop();
}

} // namespace genonet
