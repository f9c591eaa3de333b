#include "sqlenv/pipeline/pipeline.hpp"

#include "sqlenv/grpo/grpo.hpp"
#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <random>
#include <sstream>
#include <thread>

namespace sqlenv::pipeline {

reward::RewardBreakdown breakdown_from_json(const json& j) {
    reward::RewardBreakdown b;
    try {
        b.r_ex = j.at("r_ex").get<double>();
        b.r_em = j.at("r_em").get<double>();
        b.propose_correct = j.at("propose_correct").get<std::vector<double>>();
        b.e_verify = j.at("e_verify").get<std::vector<double>>();
        b.m_verify = j.at("m_verify").get<std::vector<double>>();
        b.total = j.at("total").get<double>();
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad reward breakdown: ") + e.what());
    }
    return b;
}

json Rollout::to_json() const {
    return {{"task_id", task_id},
            {"sample", sample},
            {"trajectory", trajectory.to_json()},
            {"reward", reward.to_json()},
            {"valid", valid}};
}

Rollout Rollout::from_json(const json& j) {
    Rollout r;
    try {
        r.task_id = j.at("task_id").get<std::string>();
        r.sample = j.at("sample").get<int>();
        r.trajectory = episode::Trajectory::from_json(j.at("trajectory"));
        r.reward = breakdown_from_json(j.at("reward"));
        r.valid = j.at("valid").get<bool>();
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad rollout: ") + e.what());
    }
    return r;
}

CollectResult collect_rollouts(const std::vector<episode::DialogueTask>& tasks, policy::Policy& policy,
                               const db::Registry& registry, const CollectOptions& options) {
    const std::size_t n = static_cast<std::size_t>(std::max(options.n, 0));
    const std::size_t jobs = tasks.size() * n;
    CollectResult result;
    result.rollouts.resize(jobs);
    std::vector<char> failed(jobs, 0);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t j = next++; j < jobs; j = next++) {
            const auto& task = tasks[j / n];
            const int sample = static_cast<int>(j % n);
            Rollout& r = result.rollouts[j];
            r.task_id = task.task_id;
            r.sample = sample;
            const std::string tid = task.task_id + "#" + std::to_string(sample);
            try {
                episode::RolloutParams params{options.temperature, static_cast<std::uint64_t>(sample)};
                r.trajectory = episode::run_episode(policy, task, registry, options.limits, params, tid);
                const auto handle = registry.open(task.db_id);
                r.reward = reward::score_trajectory(r.trajectory, task, handle, registry.info(task.db_id),
                                                    options.weights, options.limits.exec);
                r.valid = r.trajectory.final_sql && r.reward.r_em == 1.0 && r.reward.r_ex == 1.0;
                if (r.trajectory.termination == episode::Termination::Aborted) failed[j] = 1;
            } catch (const Error& e) {
                r.trajectory = episode::Trajectory{};
                r.trajectory.trajectory_id = tid;
                r.trajectory.task_id = task.task_id;
                r.trajectory.termination = episode::Termination::Aborted;
                r.trajectory.detail = e.code() + ": " + e.what();
                r.trajectory.violations = episode::validate_trajectory(r.trajectory, options.limits);
                r.valid = false;
                failed[j] = 1;
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(options.workers, jobs));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t + 1 < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (std::size_t j = 0; j < jobs; ++j)
        if (failed[j]) {
            if (result.skipped.insert(result.rollouts[j].task_id).second)
                spdlog::warn("task {} skipped this round: {}", result.rollouts[j].task_id,
                             result.rollouts[j].trajectory.detail);
        }
    return result;
}

std::vector<Rollout> filter_valid(const std::vector<Rollout>& raw, const std::vector<episode::DialogueTask>& tasks,
                                  const db::Registry& registry) {
    std::map<std::string, const episode::DialogueTask*> by_id;
    for (const auto& t : tasks) by_id[t.task_id] = &t;
    std::vector<Rollout> out;
    for (const auto& r : raw) {
        if (!r.trajectory.final_sql) continue;
        auto it = by_id.find(r.task_id);
        if (it == by_id.end()) throw UnknownTask("rollout for unknown task '" + r.task_id + "'");
        const auto& task = *it->second;
        const auto handle = registry.open(task.db_id);
        const auto gold = handle.execute(task.gold_sql);
        const auto pred = handle.execute(*r.trajectory.final_sql);
        bool ordered = false;
        try {
            ordered = sql::has_order_by(sql::decompose_clauses(task.gold_sql));
        } catch (const Error&) {
        }
        if (reward::reward_em(*r.trajectory.final_sql, task.gold_sql) == 1.0 &&
            reward::reward_ex(pred, gold, ordered) == 1.0) {
            Rollout v = r;
            v.valid = true;
            out.push_back(std::move(v));
        }
    }
    return out;
}

std::vector<std::size_t> reject_sample(const std::vector<episode::Trajectory>& valid, sql::Hardness hardness,
                                       const SuccessProfile& profile, Embedder* embedder, const RejectOptions& options,
                                       bool* fell_back) {
    if (fell_back) *fell_back = false;
    std::vector<std::size_t> out;
    const bool easy = hardness == sql::Hardness::Easy || profile.successes >= options.rollouts;
    if (easy) {
        std::vector<std::size_t> cands;
        for (std::size_t i = 0; i < valid.size(); ++i)
            if (valid[i].tool_calls() <= options.easy_max_interactions) cands.push_back(i);
        std::mt19937_64 rng(options.seed ^ text::fnv1a64(profile.task_id));
        const std::size_t take = std::min(options.easy_keep, cands.size());
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng() % (cands.size() - i));
            std::swap(cands[i], cands[j]);
        }
        out.assign(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take));
    } else {
        std::vector<std::size_t> cands;
        for (std::size_t i = 0; i < valid.size(); ++i)
            if (valid[i].tool_calls() >= options.hard_min_interactions) cands.push_back(i);
        if (cands.size() <= options.hard_clusters) {
            out = cands;
        } else {
            std::vector<std::string> texts;
            for (auto i : cands) texts.push_back(valid[i].full_text());
            const auto emb = embed_all(texts, embedder, fell_back);
            std::vector<std::vector<double>> dist(cands.size(), std::vector<double>(cands.size(), 0.0));
            for (std::size_t a = 0; a < cands.size(); ++a)
                for (std::size_t b = a + 1; b < cands.size(); ++b) dist[a][b] = dist[b][a] = cosine_distance(emb[a], emb[b]);
            for (auto m : k_medoids(dist, options.hard_clusters)) out.push_back(cands[m]);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> update_pool(const std::vector<std::string>& pool, const std::set<std::string>& solved) {
    std::set<std::string> ids(pool.begin(), pool.end());
    for (const auto& s : solved)
        if (!ids.count(s)) throw UnknownTask("solved task '" + s + "' is not in the pool");
    std::vector<std::string> next;
    for (const auto& id : pool)
        if (!solved.count(id)) next.push_back(id);
    return next;
}

std::vector<std::vector<SuccessProfile>> curriculum_bins(const std::vector<SuccessProfile>& profiles,
                                                         std::size_t bin_size, int rollouts) {
    if (bin_size == 0) throw ConfigError("bin_size must be positive");
    std::vector<SuccessProfile> kept;
    for (const auto& p : profiles) {
        if (p.successes < 0 || p.successes > rollouts)
            throw ConfigError("task " + p.task_id + " has " + std::to_string(p.successes) + " successes");
        if (p.successes != rollouts) kept.push_back(p);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const SuccessProfile& a, const SuccessProfile& b) {
        if (a.successes != b.successes) return a.successes > b.successes;
        return a.task_id < b.task_id;
    });
    std::vector<std::vector<SuccessProfile>> bins;
    for (std::size_t i = 0; i < kept.size(); i += bin_size)
        bins.emplace_back(kept.begin() + static_cast<std::ptrdiff_t>(i),
                          kept.begin() + static_cast<std::ptrdiff_t>(std::min(kept.size(), i + bin_size)));
    return bins;
}

std::vector<fs::path> write_curriculum(const std::vector<std::vector<SuccessProfile>>& bins,
                                       const std::map<std::string, episode::DialogueTask>& tasks,
                                       const fs::path& out_dir) {
    std::vector<fs::path> paths;
    for (std::size_t k = 0; k < bins.size(); ++k) {
        std::string out;
        for (const auto& p : bins[k]) {
            auto it = tasks.find(p.task_id);
            if (it == tasks.end()) throw UnknownTask("profile for unknown task '" + p.task_id + "'");
            auto j = it->second.to_json();
            j["successes"] = p.successes;
            out += j.dump() + "\n";
        }
        const auto path = out_dir / ("train_rl" + std::to_string(k + 1) + ".jsonl");
        text::write_file(path, out);
        paths.push_back(path);
    }
    return paths;
}

json profile_to_json(const SuccessProfile& p) { return {{"task_id", p.task_id}, {"successes", p.successes}}; }

SuccessProfile profile_from_json(const json& j) {
    try {
        return {j.at("task_id").get<std::string>(), j.at("successes").get<int>()};
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad profile: ") + e.what());
    }
}

std::vector<SuccessProfile> load_profiles(const fs::path& path) {
    std::vector<SuccessProfile> out;
    for (const auto& line : text::read_lines(path)) {
        try {
            out.push_back(profile_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw SchemaMismatch(path.string() + ": " + e.what());
        }
    }
    return out;
}

json sft_record(const StoredTrajectory& s) {
    const auto spans = grpo::build_loss_mask(s.trajectory);
    json sp = json::array();
    for (const auto& [b, e] : spans) sp.push_back({b, e});
    return {{"trajectory_id", s.trajectory.trajectory_id},
            {"task_id", s.task_id},
            {"prompt", s.trajectory.prompt},
            {"text", s.trajectory.full_text()},
            {"mask_spans", sp},
            {"metadata",
             {{"round", s.round}, {"hardness", s.hardness}, {"interactions", s.trajectory.tool_calls()}}},
            {"trajectory", s.trajectory.to_json()},
            {"reward", s.reward.to_json()}};
}

std::string export_sft(const TrajectoryStore& store) {
    std::string out;
    for (const auto& s : store) out += sft_record(s).dump() + "\n";
    return out;
}

TrajectoryStore import_sft(const std::string& jsonl) {
    TrajectoryStore store;
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            StoredTrajectory s;
            s.task_id = j.at("task_id").get<std::string>();
            s.trajectory = episode::Trajectory::from_json(j.at("trajectory"));
            s.reward = breakdown_from_json(j.at("reward"));
            s.round = j.at("metadata").at("round").get<int>();
            s.hardness = j.at("metadata").at("hardness").get<std::string>();
            store.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw SchemaMismatch(std::string("bad SFT record: ") + e.what());
        }
    }
    return store;
}

sql::Hardness task_hardness(const episode::DialogueTask& task, const db::Registry& registry) {
    const auto schema = registry.info(task.db_id).schema();
    try {
        return sql::classify_hardness(sql::decompose_clauses(task.gold_sql, &schema));
    } catch (const ParseError& e) {
        spdlog::warn("task {}: gold SQL does not parse ({}); rated extra", task.task_id, e.what());
        return sql::Hardness::Extra;
    }
}

}  // namespace sqlenv::pipeline
