#include "sqlenv/pipeline/pipeline.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <spdlog/spdlog.h>

namespace sqlenv::pipeline {

json RoundSummary::to_json() const {
    return {{"round", round},   {"pool_size", pool_size}, {"attempted", attempted}, {"valid", valid},
            {"kept", kept},     {"solved", solved},       {"skipped", skipped},     {"resumed", resumed}};
}

namespace {

RoundSummary summary_from_json(const json& j) {
    RoundSummary s;
    s.round = j.at("round").get<int>();
    s.pool_size = j.at("pool_size").get<std::size_t>();
    s.attempted = j.at("attempted").get<std::size_t>();
    s.valid = j.at("valid").get<std::size_t>();
    s.kept = j.at("kept").get<std::size_t>();
    s.solved = j.at("solved").get<std::size_t>();
    s.skipped = j.at("skipped").get<std::size_t>();
    return s;
}

std::string rollouts_jsonl(const std::vector<Rollout>& rs) {
    std::string out;
    for (const auto& r : rs) out += r.to_json().dump() + "\n";
    return out;
}

}  // namespace

WarmStartResult run_warm_start(const std::vector<episode::DialogueTask>& tasks, policy::Policy& policy,
                               const db::Registry& registry, const WarmStartOptions& options,
                               const fs::path& journal_dir, Embedder* embedder) {
    std::map<std::string, const episode::DialogueTask*> by_id;
    std::vector<std::string> pool;
    for (const auto& t : tasks) {
        if (!by_id.emplace(t.task_id, &t).second) throw SchemaMismatch("duplicate task id '" + t.task_id + "'");
        pool.push_back(t.task_id);
    }

    WarmStartResult result;
    for (int round = 0; round < options.rounds && !pool.empty(); ++round) {
        const fs::path dir = journal_dir / ("round_" + std::to_string(round));
        if (fs::exists(dir / "DONE")) {
            const auto done = json::parse(text::read_file(dir / "DONE"));
            auto summary = summary_from_json(done);
            summary.resumed = true;
            const auto pool_json = json::parse(text::read_file(dir / "pool.json"));
            if (pool_json.at("pool").get<std::vector<std::string>>() != pool)
                throw SchemaMismatch("journal " + dir.string() + " was written for a different pool");
            for (auto& s : import_sft(text::read_file(dir / "kept.jsonl"))) result.store.push_back(std::move(s));
            if (round == 0)
                for (const auto& p : pool_json.at("profiles")) result.first_round_profiles.push_back(profile_from_json(p));
            pool = pool_json.at("next_pool").get<std::vector<std::string>>();
            result.rounds.push_back(summary);
            spdlog::info("round {} restored from journal", round);
            continue;
        }

        std::vector<episode::DialogueTask> round_tasks;
        for (const auto& id : pool) round_tasks.push_back(*by_id.at(id));

        // Roll out every task in the pool.
        auto collected = collect_rollouts(round_tasks, policy, registry, options.collect);
        text::write_file(dir / "raw.jsonl", rollouts_jsonl(collected.rollouts));

        auto valid = filter_valid(collected.rollouts, round_tasks, registry);
        text::write_file(dir / "valid.jsonl", rollouts_jsonl(valid));

        std::map<std::string, std::vector<episode::Trajectory>> per_task;
        std::map<std::string, std::vector<const Rollout*>> per_task_rollouts;
        for (const auto& v : valid) {
            per_task[v.task_id].push_back(v.trajectory);
            per_task_rollouts[v.task_id].push_back(&v);
        }

        // Keep a difficulty-aware subset per solved task.
        std::vector<SuccessProfile> profiles;
        std::set<std::string> solved;
        TrajectoryStore kept;
        for (const auto& id : pool) {
            const int successes = per_task.count(id) ? static_cast<int>(per_task[id].size()) : 0;
            profiles.push_back({id, successes});
            if (!successes) continue;
            solved.insert(id);
            const auto& task = *by_id.at(id);
            const auto hardness = task_hardness(task, registry);
            bool fell_back = false;
            const auto idx = reject_sample(per_task[id], hardness, profiles.back(), embedder, options.reject, &fell_back);
            if (fell_back) spdlog::warn("task {}: clustered with the fallback embedder", id);
            for (auto i : idx)
                kept.push_back({id, per_task[id][i], per_task_rollouts[id][i]->reward, round, sql::to_string(hardness)});
        }
        text::write_file(dir / "kept.jsonl", export_sft(kept));

        // Drop solved tasks from the pool.
        const auto next_pool = update_pool(pool, solved);
        json pj = {{"round", round}, {"pool", pool}, {"next_pool", next_pool}, {"skipped", collected.skipped}};
        pj["profiles"] = json::array();
        for (const auto& p : profiles) pj["profiles"].push_back(profile_to_json(p));
        text::write_file(dir / "pool.json", pj.dump(1));

        RoundSummary summary;
        summary.round = round;
        summary.pool_size = pool.size();
        summary.attempted = collected.rollouts.size();
        summary.valid = valid.size();
        summary.kept = kept.size();
        summary.solved = solved.size();
        summary.skipped = collected.skipped.size();
        text::write_file(dir / "DONE", summary.to_json().dump() + "\n");

        if (round == 0) result.first_round_profiles = profiles;
        for (auto& s : kept) result.store.push_back(std::move(s));
        result.rounds.push_back(summary);
        spdlog::info("round {}: pool {} attempted {} valid {} kept {} solved {}", round, summary.pool_size,
                     summary.attempted, summary.valid, summary.kept, summary.solved);
        pool = next_pool;
    }
    return result;
}

}  // namespace sqlenv::pipeline
