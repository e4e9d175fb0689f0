#ifndef QUENCHWATCH_SERVICE_HTTP_HPP
#define QUENCHWATCH_SERVICE_HTTP_HPP

#include <functional>
#include <optional>
#include <string>
#include <thread>

// must precede httplib.h: <resolv.h> defines a `_res` macro that breaks Eigen
#include "quenchwatch/service/service.hpp"

#include <httplib.h>
#include <json.hpp>

namespace quenchwatch::service {

inline constexpr const char* api_version = "v1";

inline int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::EmptyRange: return 416;
    case ErrorCode::SpecInfeasible:
    case ErrorCode::IncompatibleModel:
    case ErrorCode::KTooLarge:
    case ErrorCode::DivergenceDetected: return 422;
    case ErrorCode::IoError: return 500;
    default: return 400;
    }
}

namespace detail {

inline void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

inline json parse_body(const httplib::Request& req) {
    if (req.body.empty())
        return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("request body: ") + e.what());
    }
}

/// Idempotency-Key header, else an "idempotency_token" body field (removed from the body).
inline std::string take_token(const httplib::Request& req, json& body) {
    std::string token = req.get_header_value("Idempotency-Key");
    if (body.is_object() && body.contains("idempotency_token")) {
        if (token.empty())
            token = body["idempotency_token"].get<std::string>();
        body.erase("idempotency_token");
    }
    return token;
}

inline std::optional<std::size_t> query_index(const httplib::Request& req, const char* name) {
    if (!req.has_param(name))
        return std::nullopt;
    return parse_index(req.get_param_value(name), name);
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

/// Maps library errors onto status codes with a uniform error body.
inline Handler guarded(Handler inner) {
    return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
        try {
            inner(req, res);
        } catch (const Error& e) {
            send_error(res, http_status(e.code()), to_string(e.code()), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "InvalidArgument", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "Internal", e.what());
        }
    };
}

} // namespace detail

inline void install_routes(httplib::Server& server, Service& svc) {
    using detail::guarded;
    using detail::send;
    using Req = httplib::Request;
    using Res = httplib::Response;

    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type, Idempotency-Key"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/v1/.*)", [](const Req&, Res& res) { res.status = 204; });

    server.Get("/v1/health", guarded([](const Req&, Res& res) {
                   send(res, 200, {{"status", "ok"}, {"api", api_version}});
               }));

    server.Post("/v1/datasets", guarded([&svc](const Req& req, Res& res) {
                    auto body = detail::parse_body(req);
                    const auto token = detail::take_token(req, body);
                    auto reply = svc.create_dataset(body, token);
                    send(res, reply.status, reply.body);
                }));
    server.Get("/v1/datasets", guarded([&svc](const Req&, Res& res) { send(res, 200, svc.list_datasets()); }));
    server.Get(R"(/v1/datasets/([^/]+))", guarded([&svc](const Req& req, Res& res) {
                   send(res, 200, svc.get_dataset(req.matches[1]));
               }));
    server.Post(R"(/v1/datasets/([^/]+)/cluster)", guarded([&svc](const Req& req, Res& res) {
                    auto body = detail::parse_body(req);
                    const auto token = detail::take_token(req, body);
                    auto reply = svc.cluster(req.matches[1], body, token);
                    send(res, reply.status, reply.body);
                }));

    server.Get(R"(/v1/series/([^/]+))", guarded([&svc](const Req& req, Res& res) {
                   const auto decimate = detail::query_index(req, "decimate").value_or(1);
                   send(res, 200,
                        svc.series(req.matches[1], detail::query_index(req, "from"), detail::query_index(req, "to"),
                                   decimate));
               }));

    server.Post("/v1/jobs", guarded([&svc](const Req& req, Res& res) {
                    auto body = detail::parse_body(req);
                    const auto token = detail::take_token(req, body);
                    auto reply = svc.submit_job(body, token);
                    send(res, reply.status, reply.body);
                }));
    server.Get("/v1/jobs", guarded([&svc](const Req&, Res& res) { send(res, 200, svc.list_jobs()); }));
    server.Get(R"(/v1/jobs/([^/]+))", guarded([&svc](const Req& req, Res& res) {
                   send(res, 200, svc.get_job(req.matches[1]));
               }));

    server.Get("/v1/models", guarded([&svc](const Req&, Res& res) { send(res, 200, svc.list_models()); }));
    server.Get(R"(/v1/models/([^/]+))", guarded([&svc](const Req& req, Res& res) {
                   send(res, 200, svc.get_model(req.matches[1]));
               }));
    server.Get(R"(/v1/models/([^/]+)/snapshot)", guarded([&svc](const Req& req, Res& res) {
                   send(res, 200, svc.get_model_snapshot(req.matches[1]));
               }));
    server.Post(R"(/v1/models/([^/]+)/analyze)", guarded([&svc](const Req& req, Res& res) {
                    auto body = detail::parse_body(req);
                    const auto token = detail::take_token(req, body);
                    auto reply = svc.analyze(req.matches[1], body, token);
                    send(res, reply.status, reply.body);
                }));
    server.Get(R"(/v1/analyses/([^/]+))", guarded([&svc](const Req& req, Res& res) {
                   send(res, 200, svc.get_analysis(req.matches[1]));
               }));
}

/// A Service plus an HTTP listener on a background thread.
class HttpServer {
public:
    explicit HttpServer(ServiceConfig config) : service_(std::move(config)) { install_routes(server_, service_); }

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    ~HttpServer() { stop(); }

    /// Binds and starts listening; port 0 picks a free port. Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (port_ < 0)
            throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    /// Serves on the calling thread until stop() is called elsewhere.
    void run(const std::string& host, int port) {
        if (!server_.bind_to_port(host, port))
            throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
        port_ = port;
        server_.listen_after_bind();
    }

    void stop() {
        server_.stop();
        if (thread_.joinable())
            thread_.join();
        service_.shutdown();
    }

    int port() const noexcept { return port_; }
    Service& service() noexcept { return service_; }

private:
    Service service_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
};

} // namespace quenchwatch::service

#endif // QUENCHWATCH_SERVICE_HTTP_HPP
