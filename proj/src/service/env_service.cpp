#include "sqlenv/service/service.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <spdlog/spdlog.h>

namespace sqlenv::service {

namespace {

class BadRequest : public Error {
public:
    explicit BadRequest(const std::string& m) : Error("BadRequest", m) {}
};

const std::string& field(const json& req, const char* key) {
    if (!req.contains(key) || !req[key].is_string()) throw BadRequest(std::string("missing string field '") + key + "'");
    return req[key].get_ref<const std::string&>();
}

json ok(json body) {
    body["v"] = kProtocolVersion;
    body["ok"] = true;
    return body;
}

json violations_json(const std::vector<episode::Violation>& vs) {
    json out = json::array();
    for (const auto& v : vs) out.push_back(v.to_json());
    return out;
}

}  // namespace

json error_reply(const std::string& code, const std::string& message) {
    return {{"v", kProtocolVersion}, {"ok", false}, {"error", {{"code", code}, {"message", message}}}};
}

EnvService::EnvService(const db::Registry& registry, std::vector<episode::DialogueTask> tasks,
                       episode::EpisodeLimits limits, reward::RewardWeights weights,
                       std::chrono::milliseconds idle_timeout)
    : registry_(registry), limits_(limits), weights_(weights), idle_timeout_(idle_timeout),
      rng_(std::random_device{}()) {
    weights_.validate();
    for (auto& t : tasks) {
        if (!registry_.contains(t.db_id)) throw UnknownDatabase("task " + t.task_id + " names database " + t.db_id);
        const auto id = t.task_id;
        if (!tasks_.emplace(id, std::move(t)).second) throw DuplicateKey("duplicate task id '" + id + "'");
    }
}

std::string EnvService::new_session_id() {
    std::lock_guard lock(mu_);
    return "s" + std::to_string(++counter_) + "-" + text::hex64(rng_()).substr(0, 8);
}

std::shared_ptr<EnvService::Session> EnvService::find(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw UnknownSession("no live session '" + id + "'");
    return it->second;
}

std::size_t EnvService::expire_idle() {
    const auto now = std::chrono::steady_clock::now();
    std::lock_guard lock(mu_);
    std::size_t dropped = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        std::unique_lock s(it->second->mu, std::try_to_lock);
        // A session busy in another thread is not idle.
        if (s.owns_lock() && now - it->second->last_used > idle_timeout_) {
            s.unlock();
            it = sessions_.erase(it);
            ++dropped;
        } else {
            ++it;
        }
    }
    if (dropped) spdlog::info("expired {} idle session(s)", dropped);
    return dropped;
}

std::size_t EnvService::live_sessions() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

json EnvService::reset(const json& req) {
    episode::DialogueTask task;
    if (req.contains("task")) {
        try {
            task = episode::DialogueTask::from_json(req["task"]);
        } catch (const json::exception& e) {
            throw BadRequest(std::string("bad task object: ") + e.what());
        }
        if (!registry_.contains(task.db_id)) throw UnknownDatabase("unknown database '" + task.db_id + "'");
    } else {
        const auto& id = field(req, "task_id");
        auto it = tasks_.find(id);
        if (it == tasks_.end()) throw UnknownTask("unknown task '" + id + "'");
        task = it->second;
    }
    std::string traj_id = task.task_id + "#0";
    if (req.contains("trajectory_id")) traj_id = field(req, "trajectory_id");

    auto s = std::make_shared<Session>();
    const auto& info = registry_.info(task.db_id);
    s->runner = std::make_unique<episode::EpisodeRunner>(task, info, registry_.open(task.db_id), limits_,
                                                         std::nullopt, traj_id);
    s->task = std::move(task);
    s->pending_observation = s->runner->trajectory().prompt;
    s->last_used = std::chrono::steady_clock::now();

    const auto id = new_session_id();
    {
        std::lock_guard lock(mu_);
        sessions_[id] = s;
    }
    return ok({{"session", id},
               {"trajectory_id", traj_id},
               {"system", s->runner->messages().front().text},
               {"observation", s->pending_observation}});
}

json EnvService::step(const json& req) {
    const auto id = field(req, "session");
    const auto& text = field(req, "model_text");
    std::optional<std::size_t> usage;
    if (req.contains("usage")) {
        if (!req["usage"].is_number_unsigned()) throw BadRequest("usage must be a non-negative integer");
        usage = req["usage"].get<std::size_t>();
    }
    bool truncated = false;
    if (req.contains("truncated")) {
        if (!req["truncated"].is_boolean()) throw BadRequest("truncated must be a boolean");
        truncated = req["truncated"].get<bool>();
    }

    auto s = find(id);
    std::lock_guard lock(s->mu);
    if (s->done) throw UnknownSession("session '" + id + "' has terminated");
    s->last_used = std::chrono::steady_clock::now();

    const auto r = s->runner->step(text, usage, truncated);
    json actions = json::array();
    for (const auto& a : r.new_actions) actions.push_back(a.to_json());

    if (!r.terminal) {
        s->pending_observation = r.observation.value_or("");
        auto vs = episode::validate_trajectory(s->runner->trajectory(), limits_);
        std::erase_if(vs, [](const episode::Violation& v) { return v.code == "Termination"; });
        return ok({{"session", id},
                   {"terminal", false},
                   {"observation", s->pending_observation},
                   {"actions", actions},
                   {"violations", violations_json(vs)}});
    }

    const auto traj = s->runner->finish();
    const auto& info = registry_.info(s->task.db_id);
    const auto handle = registry_.open(s->task.db_id);
    const auto breakdown = reward::score_trajectory(traj, s->task, handle, info, weights_, limits_.exec);
    s->done = true;
    {
        std::lock_guard l(mu_);
        sessions_.erase(id);
    }
    json reply = {{"session", id},
                  {"terminal", true},
                  {"termination", episode::to_string(traj.termination)},
                  {"trajectory_id", traj.trajectory_id},
                  {"final_sql", traj.final_sql ? json(*traj.final_sql) : json(nullptr)},
                  {"actions", actions},
                  {"reward_breakdown", breakdown.to_json()},
                  {"violations", violations_json(traj.violations)},
                  {"trajectory", traj.to_json()}};
    if (r.observation) reply["observation"] = *r.observation;
    return ok(std::move(reply));
}

json EnvService::close(const json& req) {
    const auto id = field(req, "session");
    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw UnknownSession("no live session '" + id + "'");
        s = it->second;
        sessions_.erase(it);
    }
    std::lock_guard lock(s->mu);
    s->done = true;
    return ok({{"session", id}, {"closed", true}});
}

json EnvService::handle(const json& request) {
    try {
        expire_idle();
        if (!request.is_object()) throw BadRequest("request must be a JSON object");
        if (!request.contains("v")) throw BadRequest("missing protocol version 'v'");
        if (!request["v"].is_number_integer() || request["v"].get<int>() != kProtocolVersion)
            return error_reply("UnsupportedVersion", "this service speaks v" + std::to_string(kProtocolVersion));
        const auto& op = field(request, "op");
        if (op == "reset") return reset(request);
        if (op == "step") return step(request);
        if (op == "close") return close(request);
        throw BadRequest("unknown op '" + op + "'");
    } catch (const Error& e) {
        return error_reply(e.code(), e.what());
    } catch (const json::exception& e) {
        return error_reply("BadRequest", e.what());
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return error_reply("Internal", e.what());
    }
}

std::string EnvService::handle_text(std::string_view request) {
    // Invalid UTF-8 in echoed text must not break the reply.
    auto dump = [](const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); };
    json req;
    try {
        req = json::parse(request);
    } catch (const json::exception& e) {
        return dump(error_reply("BadRequest", std::string("request is not JSON: ") + e.what()));
    }
    return dump(handle(req));
}

}  // namespace sqlenv::service
