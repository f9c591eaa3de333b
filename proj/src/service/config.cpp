#include "sqlenv/service/config.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <cstdlib>
#include <set>

namespace sqlenv::service {

namespace {

void only_keys(const json& j, const std::string& where, std::set<std::string> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, _] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <typename T>
T get(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void positive(double v, const std::string& name) {
    if (!(v > 0)) throw ConfigError(name + " must be positive");
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
    only_keys(j, "config", {"registry", "tasks", "weights", "limits", "policy", "rollouts", "rounds", "workers",
                            "journal", "bin_size", "seed", "service"});
    RunConfig c;
    c.registry = resolve(base, get<std::string>(j, "registry", "", "config"));
    c.tasks = resolve(base, get<std::string>(j, "tasks", "", "config"));
    if (j.contains("weights")) c.weights = reward::RewardWeights::from_json(j["weights"]);

    if (j.contains("limits")) {
        const auto& l = j["limits"];
        only_keys(l, "limits", {"max_turns", "timeout_ms", "max_rows", "max_response_length", "exec_snippet_chars"});
        c.limits.max_interactions = get<int>(l, "max_turns", c.limits.max_interactions, "limits");
        c.limits.exec.timeout_ms = get<int>(l, "timeout_ms", c.limits.exec.timeout_ms, "limits");
        c.limits.exec.max_rows = get<std::size_t>(l, "max_rows", c.limits.exec.max_rows, "limits");
        c.limits.max_response_units = get<std::size_t>(l, "max_response_length", c.limits.max_response_units, "limits");
        c.limits.exec_snippet_chars = get<std::size_t>(l, "exec_snippet_chars", c.limits.exec_snippet_chars, "limits");
        positive(c.limits.max_interactions, "limits.max_turns");
        positive(c.limits.exec.timeout_ms, "limits.timeout_ms");
        positive(static_cast<double>(c.limits.exec.max_rows), "limits.max_rows");
        positive(static_cast<double>(c.limits.max_response_units), "limits.max_response_length");
    }

    if (j.contains("policy")) {
        const auto& p = j["policy"];
        only_keys(p, "policy", {"backend", "pack", "default_continuation", "url", "timeout_ms", "retries",
                                "max_inflight", "temperature"});
        c.policy.backend = get<std::string>(p, "backend", c.policy.backend, "policy");
        if (c.policy.backend != "scripted" && c.policy.backend != "remote")
            throw ConfigError("policy.backend must be scripted or remote");
        c.policy.pack = resolve(base, get<std::string>(p, "pack", "", "policy"));
        if (p.contains("default_continuation"))
            c.policy.default_continuation = get<std::string>(p, "default_continuation", "", "policy");
        c.policy.url = get<std::string>(p, "url", "", "policy");
        c.policy.timeout_ms = get<int>(p, "timeout_ms", c.policy.timeout_ms, "policy");
        c.policy.retries = get<int>(p, "retries", c.policy.retries, "policy");
        c.policy.max_inflight = get<std::size_t>(p, "max_inflight", c.policy.max_inflight, "policy");
        c.policy.temperature = get<double>(p, "temperature", c.policy.temperature, "policy");
        positive(c.policy.timeout_ms, "policy.timeout_ms");
        if (c.policy.retries < 0) throw ConfigError("policy.retries must be >= 0");
        if (c.policy.temperature < 0) throw ConfigError("policy.temperature must be >= 0");
    }

    c.rollouts = get<int>(j, "rollouts", c.rollouts, "config");
    c.rounds = get<int>(j, "rounds", c.rounds, "config");
    c.workers = get<std::size_t>(j, "workers", c.workers, "config");
    c.journal = resolve(base, get<std::string>(j, "journal", c.journal.string(), "config"));
    c.bin_size = get<std::size_t>(j, "bin_size", c.bin_size, "config");
    c.seed = get<std::uint64_t>(j, "seed", c.seed, "config");
    positive(c.rollouts, "rollouts");
    positive(c.rounds, "rounds");
    positive(static_cast<double>(c.workers), "workers");
    positive(static_cast<double>(c.bin_size), "bin_size");

    if (j.contains("service")) {
        const auto& s = j["service"];
        only_keys(s, "service", {"host", "port", "idle_timeout_s", "workers"});
        c.service.host = get<std::string>(s, "host", c.service.host, "service");
        c.service.port = get<int>(s, "port", c.service.port, "service");
        c.service.idle_timeout_s = get<int>(s, "idle_timeout_s", c.service.idle_timeout_s, "service");
        c.service.workers = get<std::size_t>(s, "workers", c.service.workers, "service");
        if (c.service.port < 0 || c.service.port > 65535) throw ConfigError("service.port out of range");
        positive(c.service.idle_timeout_s, "service.idle_timeout_s");
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    json j;
    try {
        j = json::parse(text::read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

json RunConfig::to_json() const {
    json p = {{"backend", policy.backend},       {"pack", policy.pack.string()},
              {"url", policy.url},               {"timeout_ms", policy.timeout_ms},
              {"retries", policy.retries},       {"max_inflight", policy.max_inflight},
              {"temperature", policy.temperature}};
    if (policy.default_continuation) p["default_continuation"] = *policy.default_continuation;
    return {{"registry", registry.string()},
            {"tasks", tasks.string()},
            {"weights", {{"w1", weights.w1}, {"w2", weights.w2}, {"w3", weights.w3}, {"w4", weights.w4},
                         {"sum_repeats", weights.sum_repeats}}},
            {"limits",
             {{"max_turns", limits.max_interactions},
              {"timeout_ms", limits.exec.timeout_ms},
              {"max_rows", limits.exec.max_rows},
              {"max_response_length", limits.max_response_units},
              {"exec_snippet_chars", limits.exec_snippet_chars}}},
            {"policy", p},
            {"rollouts", rollouts},
            {"rounds", rounds},
            {"workers", workers},
            {"journal", journal.string()},
            {"bin_size", bin_size},
            {"seed", seed},
            {"service",
             {{"host", service.host},
              {"port", service.port},
              {"idle_timeout_s", service.idle_timeout_s},
              {"workers", service.workers}}}};
}

pipeline::WarmStartOptions RunConfig::warm_start_options() const {
    pipeline::WarmStartOptions o;
    o.rounds = rounds;
    o.collect.n = rollouts;
    o.collect.temperature = policy.temperature;
    o.collect.workers = workers;
    o.collect.limits = limits;
    o.collect.weights = weights;
    o.reject.rollouts = rollouts;
    o.reject.seed = seed;
    return o;
}

std::unique_ptr<policy::Policy> make_policy(const PolicyConfig& config) {
    if (config.backend == "scripted") {
        if (config.pack.empty()) throw ConfigError("scripted policy needs policy.pack");
        return std::make_unique<policy::ScriptedPolicy>(policy::read_pack(config.pack), config.default_continuation);
    }
    auto rc = policy::remote_config_from_env();
    if (rc.url.empty()) rc.url = config.url;
    rc.timeout = std::chrono::milliseconds(config.timeout_ms);
    rc.retries = config.retries;
    rc.max_inflight = config.max_inflight;
    return std::make_unique<policy::RemotePolicy>(rc);
}

}  // namespace sqlenv::service
