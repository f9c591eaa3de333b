#include "sqlenv/policy/policy.hpp"

#include "sqlenv/util/error.hpp"

#include <httplib.h>

#include <cstdlib>

namespace sqlenv::policy {

RemoteConfig remote_config_from_env() {
    RemoteConfig c;
    if (const char* u = std::getenv("POLICY_URL")) c.url = u;
    if (const char* t = std::getenv("POLICY_TOKEN")) c.token = t;
    return c;
}

RemotePolicy::RemotePolicy(RemoteConfig config) : config_(std::move(config)) {
    if (config_.url.empty()) throw ConfigError("policy url is empty (set POLICY_URL)");
    auto scheme_end = config_.url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("policy url needs a scheme: " + config_.url);
    if (config_.url.compare(0, scheme_end, "http") != 0)
        throw ConfigError("only http:// policy endpoints are supported: " + config_.url);
    auto path_start = config_.url.find('/', scheme_end + 3);
    scheme_host_ = config_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
    if (config_.max_inflight == 0) config_.max_inflight = 1;
}

namespace {

std::string extract_text(const json& body) {
    if (body.contains("text") && body["text"].is_string()) return body["text"].get<std::string>();
    if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
        const auto& c = body["choices"][0];
        if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string())
            return c["message"]["content"].get<std::string>();
        if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
    }
    throw PolicyUnavailable("malformed response: no text field");
}

}  // namespace

GenerationResult RemotePolicy::generate(const GenerationRequest& request) {
    if (request.messages.empty()) throw PolicyUnavailable("empty conversation");
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return inflight_ < config_.max_inflight; });
        ++inflight_;
    }
    struct Release {
        RemotePolicy* self;
        ~Release() {
            std::lock_guard lock(self->mu_);
            --self->inflight_;
            self->cv_.notify_one();
        }
    } release{this};

    json msgs = json::array();
    for (const auto& m : request.messages) msgs.push_back({{"role", m.role}, {"content", m.text}});
    json payload = {{"messages", msgs},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_new},
                    {"stop", request.stop_markers}};
    if (request.seed) payload["seed"] = *request.seed;

    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        httplib::Client cli(scheme_host_);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
        cli.set_connection_timeout(secs.count(), usecs.count());
        cli.set_read_timeout(secs.count(), usecs.count());
        cli.set_write_timeout(secs.count(), usecs.count());
        if (!config_.token.empty()) cli.set_bearer_token_auth(config_.token);
        auto res = cli.Post(path_, payload.dump(), "application/json");
        if (!res) {
            last_error = "request failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "endpoint returned HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            auto text = extract_text(json::parse(res->body));
            auto r = truncate_generation(text, request.stop_markers, request.max_new);
            return r;
        } catch (const json::exception& e) {
            last_error = std::string("malformed response: ") + e.what();
        } catch (const PolicyUnavailable& e) {
            last_error = e.what();
        }
    }
    throw PolicyUnavailable(last_error);
}

}  // namespace sqlenv::policy
