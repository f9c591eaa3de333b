#include "sqlenv/service/service.hpp"

#include "sqlenv/pipeline/pipeline.hpp"
#include "sqlenv/sql/sql.hpp"
#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <cstdio>
#include <set>

namespace sqlenv::service {

std::string turn_bucket(int turn) { return turn >= 4 ? ">=4" : std::to_string(std::max(turn, 1)); }

namespace {

void add(EvalBucket& b, const EvalExample& e) {
    ++b.n;
    b.em += e.em;
    b.ex += e.ex;
}

json bucket_json(const EvalBucket& b) {
    return {{"n", b.n}, {"em", b.em_pct()}, {"ex", b.ex_pct()}};
}

std::string row(const std::string& name, const EvalBucket& b) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s %6zu %7.1f %7.1f\n", name.c_str(), b.n, b.em_pct(), b.ex_pct());
    return buf;
}

const std::vector<std::string> kTurnOrder = {"1", "2", "3", ">=4"};
const std::vector<std::string> kHardnessOrder = {"easy", "medium", "hard", "extra"};

}  // namespace

json EvalReport::to_json() const {
    json ex = json::array();
    for (const auto& e : examples)
        ex.push_back({{"task_id", e.task_id}, {"turn", e.turn}, {"hardness", e.hardness}, {"em", e.em}, {"ex", e.ex}});
    json turns = json::object(), hard = json::object();
    for (const auto& k : kTurnOrder) turns[k] = bucket_json(by_turn.count(k) ? by_turn.at(k) : EvalBucket{});
    for (const auto& k : kHardnessOrder) hard[k] = bucket_json(by_hardness.count(k) ? by_hardness.at(k) : EvalBucket{});
    return {{"overall", bucket_json(overall)}, {"by_turn", turns}, {"by_hardness", hard}, {"examples", ex}};
}

std::string EvalReport::table() const {
    std::string out = "slice           n      EM      EX\n";
    out += row("all", overall);
    for (const auto& k : kTurnOrder)
        if (by_turn.count(k)) out += row("turn " + k, by_turn.at(k));
    for (const auto& k : kHardnessOrder)
        if (by_hardness.count(k)) out += row(k, by_hardness.at(k));
    return out;
}

EvalReport evaluate(const std::vector<episode::DialogueTask>& tasks, const std::map<std::string, std::string>& predictions,
                    const db::Registry& registry, const db::Limits& limits) {
    std::set<std::string> ids;
    for (const auto& t : tasks) ids.insert(t.task_id);
    for (const auto& [id, _] : predictions)
        if (!ids.count(id)) throw SchemaMismatch("prediction for unknown task '" + id + "'");

    EvalReport report;
    for (const auto& t : tasks) {
        auto it = predictions.find(t.task_id);
        if (it == predictions.end()) throw SchemaMismatch("no prediction for task '" + t.task_id + "'");
        const auto& pred = it->second;
        const auto handle = registry.open(t.db_id);

        EvalExample e;
        e.task_id = t.task_id;
        e.turn = t.turn_index + 1;
        e.hardness = text::to_lower(sql::to_string(pipeline::task_hardness(t, registry)));
        e.em = reward::reward_em(pred, t.gold_sql) == 1.0;
        if (!text::trim(pred).empty()) {
            bool ordered = false;
            try {
                ordered = sql::has_order_by(sql::decompose_clauses(t.gold_sql));
            } catch (const ParseError&) {
            }
            e.ex = db::execution_match(handle.execute(pred, limits), handle.execute(t.gold_sql, limits), ordered);
        }
        add(report.overall, e);
        add(report.by_turn[turn_bucket(e.turn)], e);
        add(report.by_hardness[e.hardness], e);
        report.examples.push_back(std::move(e));
    }
    return report;
}

std::map<std::string, std::string> load_predictions(const fs::path& path) {
    std::map<std::string, std::string> out;
    for (const auto& line : text::read_lines(path)) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaMismatch(path.string() + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("task_id") || !j.contains("sql") || !j["task_id"].is_string() ||
            !j["sql"].is_string())
            throw SchemaMismatch(path.string() + ": prediction lines need string task_id and sql");
        for (const auto& [k, _] : j.items())
            if (k != "task_id" && k != "sql") throw SchemaMismatch(path.string() + ": unknown key '" + k + "'");
        const auto id = j["task_id"].get<std::string>();
        if (!out.emplace(id, j["sql"].get<std::string>()).second)
            throw SchemaMismatch(path.string() + ": duplicate prediction for '" + id + "'");
    }
    return out;
}

std::vector<json> score_trajectories(const std::vector<std::string>& lines,
                                     const std::vector<episode::DialogueTask>& tasks, const db::Registry& registry,
                                     const reward::RewardWeights& weights, const db::Limits& limits) {
    std::map<std::string, const episode::DialogueTask*> by_id;
    for (const auto& t : tasks) by_id[t.task_id] = &t;
    std::vector<json> out;
    for (const auto& line : lines) {
        episode::Trajectory traj;
        try {
            const auto j = json::parse(line);
            traj = episode::Trajectory::from_json(j.contains("trajectory") ? j["trajectory"] : j);
        } catch (const json::exception& e) {
            throw SchemaMismatch(std::string("trajectory line: ") + e.what());
        }
        auto it = by_id.find(traj.task_id);
        if (it == by_id.end()) throw SchemaMismatch("trajectory for unknown task '" + traj.task_id + "'");
        const auto& task = *it->second;
        const auto handle = registry.open(task.db_id);
        const auto b = reward::score_trajectory(traj, task, handle, registry.info(task.db_id), weights, limits);
        out.push_back({{"trajectory_id", traj.trajectory_id},
                       {"task_id", traj.task_id},
                       {"termination", episode::to_string(traj.termination)},
                       {"reward_breakdown", b.to_json()}});
    }
    return out;
}

}  // namespace sqlenv::service
