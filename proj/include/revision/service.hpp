#pragma once

#include <stdexcept>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "revision/dispatch.hpp"

namespace revision {

// HTTP face of the dispatcher. Bad input is a transport-level 400; a tool
// failing during dispatch is domain data and still a 200 — the caller gets
// the failed outcomes and the baseline products.
class DispatchService {
public:
    explicit DispatchService(Dispatcher& dispatcher) : dispatcher_(dispatcher) { wire_routes(); }

    httplib::Server& server() { return server_; }

    // Binds an OS-assigned port and returns it; serve with listen_after_bind()
    // on a worker thread. Fixed-port deployments use listen() directly.
    int bind_any(const std::string& host = "127.0.0.1") {
        int port = server_.bind_to_any_port(host);
        if (port <= 0) throw std::runtime_error("dispatch service: cannot bind a port");
        return port;
    }

    bool listen_after_bind() { return server_.listen_after_bind(); }
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    bool is_running() const { return server_.is_running(); }
    void stop() { server_.stop(); }

private:
    static void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void reply_error(httplib::Response& res, int status, const std::string& code,
                            const std::string& message) {
        reply_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
    }

    void wire_routes() {
        server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
            reply_json(res, 200, {{"status", "ok"}});
        });

        server_.Get("/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
            reply_json(res, 200, dispatcher_.metrics().snapshot());
        });

        server_.Post("/v1/cache/flush", [this](const httplib::Request&, httplib::Response& res) {
            auto flushed = dispatcher_.cache().size();
            dispatcher_.cache().clear();
            reply_json(res, 200, {{"flushed", flushed}});
        });

        server_.Post("/v1/dispatch", [this](const httplib::Request& req, httplib::Response& res) {
            RequestLog log;
            try {
                log = nlohmann::json::parse(req.body).get<RequestLog>();
                validate(log, /*require_products=*/false);
            } catch (const std::exception& e) {
                reply_error(res, 400, "bad_request", e.what());
                return;
            }
            try {
                reply_json(res, 200, dispatcher_.dispatch(log));
            } catch (const std::exception& e) {
                // Nothing in dispatch should reach here; if it does, say so
                // rather than dropping the connection.
                reply_error(res, 500, "internal", e.what());
            }
        });
    }

    Dispatcher& dispatcher_;
    httplib::Server server_;
};

}  // namespace revision
