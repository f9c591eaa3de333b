#pragma once

#include "sqlenv/episode/episode.hpp"
#include "sqlenv/pipeline/pipeline.hpp"
#include "sqlenv/policy/policy.hpp"
#include "sqlenv/reward/reward.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace sqlenv::service {

using nlohmann::json;
namespace fs = std::filesystem;

struct PolicyConfig {
    std::string backend = "scripted";  ///< scripted | remote
    fs::path pack;                      ///< scripted fixture pack
    std::optional<std::string> default_continuation;
    std::string url;  ///< remote; POLICY_URL overrides when set
    int timeout_ms = 60000;
    int retries = 1;
    std::size_t max_inflight = 8;
    double temperature = 0.7;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8765;
    int idle_timeout_s = 600;
    std::size_t workers = 8;
};

/// Whole-run configuration. Relative paths resolve against the config file.
struct RunConfig {
    fs::path registry;  ///< database manifest
    fs::path tasks;     ///< task JSONL
    reward::RewardWeights weights;
    episode::EpisodeLimits limits;
    PolicyConfig policy;
    int rollouts = 20;
    int rounds = 3;
    std::size_t workers = 4;
    fs::path journal = "journal";
    std::size_t bin_size = 2000;
    std::uint64_t seed = 0;
    ServiceConfig service;

    /// Rejects unknown keys and out-of-range values with ConfigError.
    static RunConfig from_json(const json& j, const fs::path& base_dir = {});
    static RunConfig load(const fs::path& path);
    json to_json() const;

    pipeline::WarmStartOptions warm_start_options() const;
};

std::unique_ptr<policy::Policy> make_policy(const PolicyConfig& config);

}  // namespace sqlenv::service
