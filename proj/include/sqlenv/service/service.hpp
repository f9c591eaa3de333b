#pragma once

#include "sqlenv/db/db.hpp"
#include "sqlenv/episode/episode.hpp"
#include "sqlenv/reward/reward.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace sqlenv::service {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kProtocolVersion = 1;

/// Reset/step/close protocol over JSON values. Transport-agnostic and safe
/// to call from many threads; each session is serialised on its own lock.
class EnvService {
public:
    EnvService(const db::Registry& registry, std::vector<episode::DialogueTask> tasks,
               episode::EpisodeLimits limits = {}, reward::RewardWeights weights = {},
               std::chrono::milliseconds idle_timeout = std::chrono::minutes(10));

    /// Never throws. Errors come back as {"ok": false, "error": {code, message}}.
    json handle(const json& request);
    /// Same, for raw request text; unparseable input is a BadRequest reply.
    std::string handle_text(std::string_view request);

    /// Drops sessions idle for longer than the timeout. Returns how many.
    std::size_t expire_idle();
    std::size_t live_sessions() const;

private:
    struct Session {
        std::mutex mu;
        std::unique_ptr<episode::EpisodeRunner> runner;
        episode::DialogueTask task;
        std::string pending_observation;
        std::chrono::steady_clock::time_point last_used;
        bool done = false;
    };

    json reset(const json& req);
    json step(const json& req);
    json close(const json& req);
    std::shared_ptr<Session> find(const std::string& id);
    std::string new_session_id();

    const db::Registry& registry_;
    std::map<std::string, episode::DialogueTask> tasks_;
    episode::EpisodeLimits limits_;
    reward::RewardWeights weights_;
    std::chrono::milliseconds idle_timeout_;

    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mt19937_64 rng_;
    std::uint64_t counter_ = 0;
};

json error_reply(const std::string& code, const std::string& message);

/// HTTP front end: POST /v1/env carries one protocol message per request,
/// GET /healthz answers "ok".
class HttpFrontend {
public:
    HttpFrontend(EnvService& service, std::size_t workers);
    ~HttpFrontend();

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ---- evaluation -------------------------------------------------------------

struct EvalExample {
    std::string task_id;
    int turn = 1;  ///< 1-based
    std::string hardness;
    bool em = false;
    bool ex = false;
};

struct EvalBucket {
    std::size_t n = 0;
    std::size_t em = 0;
    std::size_t ex = 0;
    double em_pct() const { return n ? 100.0 * static_cast<double>(em) / static_cast<double>(n) : 0.0; }
    double ex_pct() const { return n ? 100.0 * static_cast<double>(ex) / static_cast<double>(n) : 0.0; }
};

struct EvalReport {
    std::vector<EvalExample> examples;
    EvalBucket overall;
    std::map<std::string, EvalBucket> by_turn;      ///< "1", "2", "3", ">=4"
    std::map<std::string, EvalBucket> by_hardness;  ///< easy, medium, hard, extra

    json to_json() const;
    std::string table() const;
};

std::string turn_bucket(int turn);

/// Predictions map task id to SQL. Every task needs exactly one prediction;
/// anything else is a SchemaMismatch.
EvalReport evaluate(const std::vector<episode::DialogueTask>& tasks, const std::map<std::string, std::string>& predictions,
                    const db::Registry& registry, const db::Limits& limits = {});

/// JSONL lines {"task_id", "sql"}.
std::map<std::string, std::string> load_predictions(const fs::path& path);

/// Reads trajectories (bare or wrapped in a record with a "trajectory" key)
/// and scores each against its task. One output object per input line.
std::vector<json> score_trajectories(const std::vector<std::string>& lines,
                                     const std::vector<episode::DialogueTask>& tasks, const db::Registry& registry,
                                     const reward::RewardWeights& weights = {}, const db::Limits& limits = {});

}  // namespace sqlenv::service
