#include "sqlenv/service/service.hpp"

#include "sqlenv/util/error.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace sqlenv::service {

struct HttpFrontend::Impl {
    httplib::Server server;
};

HttpFrontend::HttpFrontend(EnvService& service, std::size_t workers) : impl_(std::make_unique<Impl>()) {
    const std::size_t n = std::max<std::size_t>(1, workers);
    impl_->server.new_task_queue = [n] { return new httplib::ThreadPool(n); };
    impl_->server.Post("/v1/env", [&service](const httplib::Request& req, httplib::Response& res) {
        res.set_content(service.handle_text(req.body), "application/json");
    });
    impl_->server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("ok", "text/plain");
    });
    // Unknown routes still answer in protocol shape.
    impl_->server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        res.set_content(error_reply("BadRequest", "no route " + req.method + " " + req.path).dump(),
                        "application/json");
    });
    impl_->server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "unknown failure";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            msg = e.what();
        } catch (...) {
        }
        res.status = 200;
        res.set_content(error_reply("Internal", msg).dump(), "application/json");
    });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    spdlog::info("listening on {}:{}", host, bound);
    return bound;
}

void HttpFrontend::run() {
    if (!impl_->server.listen_after_bind()) throw IoError("server loop failed");
}

void HttpFrontend::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace sqlenv::service
