#include "sqlenv/reward/reward.hpp"

#include "sqlenv/util/error.hpp"

#include <cmath>
#include <numeric>

namespace sqlenv::reward {

void RewardWeights::validate() const {
    for (double w : {w1, w2, w3, w4})
        if (!std::isfinite(w) || w < 0) throw ConfigError("reward weights must be finite and non-negative");
}

json RewardWeights::to_json() const {
    return {{"w1", w1}, {"w2", w2}, {"w3", w3}, {"w4", w4}, {"sum_repeats", sum_repeats}};
}

RewardWeights RewardWeights::from_json(const json& j) {
    RewardWeights w;
    if (!j.is_object()) throw ConfigError("reward weights must be an object");
    for (const auto& [k, v] : j.items()) {
        if (k == "sum_repeats") {
            if (!v.is_boolean()) throw ConfigError("sum_repeats must be a boolean");
            w.sum_repeats = v.get<bool>();
            continue;
        }
        if (!v.is_number()) throw ConfigError("weight '" + k + "' must be a number");
        if (k == "w1") w.w1 = v.get<double>();
        else if (k == "w2") w.w2 = v.get<double>();
        else if (k == "w3") w.w3 = v.get<double>();
        else if (k == "w4") w.w4 = v.get<double>();
        else throw ConfigError("unknown weight key '" + k + "'");
    }
    w.validate();
    return w;
}

json RewardBreakdown::to_json() const {
    return {{"r_ex", r_ex},         {"r_em", r_em},         {"propose_correct", propose_correct},
            {"e_verify", e_verify}, {"m_verify", m_verify}, {"total", total}};
}

double reward_ex(const db::ExecutionOutcome& pred, const db::ExecutionOutcome& gold, bool gold_ordered) {
    return db::execution_match(pred, gold, gold_ordered) ? 1.0 : 0.0;
}

double reward_em(const sql::NormalizedSql& pred, const sql::NormalizedSql& gold) {
    return sql::exact_match(pred, gold) ? 1.0 : 0.0;
}

double reward_em(std::string_view pred, std::string_view gold) {
    try {
        return reward_em(sql::normalize_sql(pred), sql::normalize_sql(gold));
    } catch (const Error&) {
        return 0.0;
    }
}

namespace {

std::optional<double> f1_or_none(std::string_view pred, std::string_view gold, const sql::Schema* schema) {
    try {
        return sql::clause_f1(sql::decompose_clauses(pred, schema), sql::decompose_clauses(gold, schema));
    } catch (const Error&) {
        return std::nullopt;
    }
}

double aggregate(const std::vector<double>& xs, bool sum) {
    if (xs.empty()) return 0.0;
    const double s = std::accumulate(xs.begin(), xs.end(), 0.0);
    return sum ? s : s / static_cast<double>(xs.size());
}

}  // namespace

double reward_propose_or_correct(std::string_view pred, std::string_view gold, const sql::Schema* schema) {
    return f1_or_none(pred, gold, schema).value_or(0.0);
}

double reward_e_verify(db::Status exec_class, episode::Verdict verdict) {
    const bool pass = verdict == episode::Verdict::Pass;
    switch (exec_class) {
        case db::Status::Ok: return pass ? 1.0 : 0.0;
        case db::Status::Null: return pass ? 0.0 : 0.1;
        case db::Status::Error: return pass ? 0.0 : 1.0;
    }
    return 0.0;
}

double reward_m_verify(episode::Verdict verdict, std::string_view candidate, std::string_view gold,
                       const sql::Schema* schema) {
    const double f = f1_or_none(candidate, gold, schema).value_or(0.0);
    return verdict == episode::Verdict::Pass ? f : 1.0 - f;
}

void finalize_total(RewardBreakdown& b, const RewardWeights& w) {
    b.total = w.w1 * b.r_ex + w.w2 * b.r_em + w.w3 * aggregate(b.propose_correct, w.sum_repeats) +
              w.w4 * (aggregate(b.e_verify, w.sum_repeats) + aggregate(b.m_verify, w.sum_repeats));
}

RewardBreakdown score_trajectory(const episode::Trajectory& traj, const episode::DialogueTask& task,
                                 const std::optional<db::ExecutionOutcome>& pred_outcome,
                                 const db::ExecutionOutcome& gold_outcome, const sql::Schema* schema,
                                 const RewardWeights& weights) {
    using episode::ActionKind;
    RewardBreakdown b;
    if (traj.final_sql && pred_outcome) {
        bool ordered = false;
        try {
            ordered = sql::has_order_by(sql::decompose_clauses(task.gold_sql));
        } catch (const Error&) {
        }
        b.r_ex = reward_ex(*pred_outcome, gold_outcome, ordered);
        b.r_em = reward_em(*traj.final_sql, task.gold_sql);
    }
    const episode::Action* last_exec = nullptr;
    for (const auto& a : traj.actions) {
        switch (a.kind) {
            case ActionKind::Propose:
            case ActionKind::SelfCorrect:
                b.propose_correct.push_back(reward_propose_or_correct(a.sql.value_or(""), task.gold_sql, schema));
                break;
            case ActionKind::Execute: last_exec = &a; break;
            case ActionKind::EVerify:
                if (a.verdict && last_exec && last_exec->exec_status)
                    b.e_verify.push_back(reward_e_verify(db::status_from_string(*last_exec->exec_status), *a.verdict));
                break;
            case ActionKind::MVerify:
                if (a.verdict && a.sql) b.m_verify.push_back(reward_m_verify(*a.verdict, *a.sql, task.gold_sql, schema));
                break;
            case ActionKind::Finalize: break;
        }
    }
    finalize_total(b, weights);
    return b;
}

RewardBreakdown score_trajectory(const episode::Trajectory& traj, const episode::DialogueTask& task,
                                 const db::Handle& handle, const db::DatabaseInfo& info, const RewardWeights& weights,
                                 const db::Limits& limits) {
    episode::Trajectory t = traj;
    for (auto& a : t.actions)
        if (a.kind == episode::ActionKind::Execute && !a.exec_status && a.sql)
            a.exec_status = db::to_string(db::classify_outcome(handle.execute(*a.sql, limits)));
    std::optional<db::ExecutionOutcome> pred;
    if (t.final_sql) pred = handle.execute(*t.final_sql, limits);
    const auto gold = handle.execute(task.gold_sql, limits);
    const auto schema = info.schema();
    return score_trajectory(t, task, pred, gold, &schema, weights);
}

}  // namespace sqlenv::reward
