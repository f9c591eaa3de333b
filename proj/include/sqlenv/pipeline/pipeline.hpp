#pragma once

#include "sqlenv/db/db.hpp"
#include "sqlenv/episode/episode.hpp"
#include "sqlenv/policy/policy.hpp"
#include "sqlenv/reward/reward.hpp"
#include "sqlenv/sql/sql.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sqlenv::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- embeddings & clustering ---------------------------------------------

class Embedder {
public:
    virtual ~Embedder() = default;
    /// Throws EmbedderUnavailable when the backend cannot serve.
    virtual std::vector<double> embed(std::string_view text) = 0;
};

/// Feature-hashed character 3-grams, signed buckets, L2-normalised.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = 256, std::uint64_t seed = 0x5eed5eedULL) : dim_(dim), seed_(seed) {}
    std::vector<double> embed(std::string_view text) override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Embeds with `primary` when given and available, else with the fallback.
/// Sets `*fell_back` when the fallback was used.
std::vector<std::vector<double>> embed_all(const std::vector<std::string>& texts, Embedder* primary,
                                           bool* fell_back = nullptr);

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

/// PAM k-medoids on a full distance matrix. Deterministic: greedy build, then
/// best-improvement swaps; ties go to the lower index. Returns sorted medoid
/// indices; k is clamped to the number of points.
std::vector<std::size_t> k_medoids(const std::vector<std::vector<double>>& dist, std::size_t k);

// ---- collection stages -----------------------------------------------------

struct Rollout {
    std::string task_id;
    int sample = 0;
    episode::Trajectory trajectory;
    reward::RewardBreakdown reward;
    bool valid = false;  ///< EM and EX both hold

    json to_json() const;
    static Rollout from_json(const json& j);
};

struct CollectOptions {
    int n = 20;
    double temperature = 0.7;
    std::size_t workers = 4;
    episode::EpisodeLimits limits;
    reward::RewardWeights weights;
};

struct CollectResult {
    std::vector<Rollout> rollouts;      ///< task order, then sample order
    std::set<std::string> skipped;      ///< tasks with an aborted rollout
};

/// n episodes per task on a bounded worker pool; every attempt is scored.
CollectResult collect_rollouts(const std::vector<episode::DialogueTask>& tasks, policy::Policy& policy,
                               const db::Registry& registry, const CollectOptions& options);

/// Rollouts whose final SQL passes EM and EX (recomputed, not trusted).
std::vector<Rollout> filter_valid(const std::vector<Rollout>& raw, const std::vector<episode::DialogueTask>& tasks,
                                  const db::Registry& registry);

struct SuccessProfile {
    std::string task_id;
    int successes = 0;
};

struct RejectOptions {
    int rollouts = 20;  ///< the count "20/20" refers to
    std::size_t easy_keep = 2;
    int easy_max_interactions = 2;
    std::size_t hard_clusters = 3;
    int hard_min_interactions = 2;
    std::uint64_t seed = 0;
};

/// Difficulty-aware selection over one task's valid trajectories. Returns
/// indices into `valid`, ascending. `fell_back` reports embedder fallback.
std::vector<std::size_t> reject_sample(const std::vector<episode::Trajectory>& valid, sql::Hardness hardness,
                                       const SuccessProfile& profile, Embedder* embedder, const RejectOptions& options,
                                       bool* fell_back = nullptr);

/// Pool minus solved. Throws UnknownTask when a solved id is not in the pool.
std::vector<std::string> update_pool(const std::vector<std::string>& pool, const std::set<std::string>& solved);

/// Drops s == rollouts, sorts by successes descending (ties by id), chunks.
std::vector<std::vector<SuccessProfile>> curriculum_bins(const std::vector<SuccessProfile>& profiles,
                                                         std::size_t bin_size = 2000, int rollouts = 20);

/// Writes train_rl{k}.jsonl (k from 1) for each bin; each line is the task
/// record plus "successes". Returns the written paths.
std::vector<fs::path> write_curriculum(const std::vector<std::vector<SuccessProfile>>& bins,
                                       const std::map<std::string, episode::DialogueTask>& tasks,
                                       const fs::path& out_dir);

json profile_to_json(const SuccessProfile& p);
SuccessProfile profile_from_json(const json& j);
std::vector<SuccessProfile> load_profiles(const fs::path& path);

// ---- store & export --------------------------------------------------------

struct StoredTrajectory {
    std::string task_id;
    episode::Trajectory trajectory;
    reward::RewardBreakdown reward;
    int round = 0;
    std::string hardness;
};

using TrajectoryStore = std::vector<StoredTrajectory>;

/// One record per trajectory: prompt, full text, loss-mask spans, metadata,
/// plus the trajectory and reward so the store can be read back.
json sft_record(const StoredTrajectory& s);
std::string export_sft(const TrajectoryStore& store);
TrajectoryStore import_sft(const std::string& jsonl);

reward::RewardBreakdown breakdown_from_json(const json& j);

/// Hardness of a task's gold SQL under its database schema.
sql::Hardness task_hardness(const episode::DialogueTask& task, const db::Registry& registry);

// ---- driver ----------------------------------------------------------------

struct WarmStartOptions {
    int rounds = 3;
    CollectOptions collect;
    RejectOptions reject;
};

struct RoundSummary {
    int round = 0;
    std::size_t pool_size = 0;
    std::size_t attempted = 0;
    std::size_t valid = 0;
    std::size_t kept = 0;
    std::size_t solved = 0;
    std::size_t skipped = 0;
    bool resumed = false;

    json to_json() const;
};

struct WarmStartResult {
    TrajectoryStore store;
    std::vector<RoundSummary> rounds;
    std::vector<SuccessProfile> first_round_profiles;
};

/// Runs S1/S2/S4 for up to `rounds` rounds, journaling each round under
/// journal_dir/round_<i>/ (raw.jsonl, valid.jsonl, kept.jsonl, pool.json,
/// DONE). Completed rounds are loaded instead of rerun.
WarmStartResult run_warm_start(const std::vector<episode::DialogueTask>& tasks, policy::Policy& policy,
                               const db::Registry& registry, const WarmStartOptions& options,
                               const fs::path& journal_dir, Embedder* embedder = nullptr);

}  // namespace sqlenv::pipeline
