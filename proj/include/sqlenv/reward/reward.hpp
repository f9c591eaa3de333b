#pragma once

#include "sqlenv/db/db.hpp"
#include "sqlenv/episode/episode.hpp"
#include "sqlenv/sql/sql.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace sqlenv::reward {

using nlohmann::json;

struct RewardWeights {
    double w1 = 1.0;  ///< execution match
    double w2 = 0.5;  ///< exact match
    double w3 = 0.3;  ///< PROPOSE / SELF_CORRECT clause match
    double w4 = 0.2;  ///< E_VERIFY + M_VERIFY
    bool sum_repeats = false;  ///< sum repeated process rewards instead of averaging

    /// Throws ConfigError on negative or non-finite weights.
    void validate() const;
    json to_json() const;
    static RewardWeights from_json(const json& j);
};

struct RewardBreakdown {
    double r_ex = 0;
    double r_em = 0;
    std::vector<double> propose_correct;
    std::vector<double> e_verify;
    std::vector<double> m_verify;
    double total = 0;

    json to_json() const;
};

double reward_ex(const db::ExecutionOutcome& pred, const db::ExecutionOutcome& gold, bool gold_ordered);
double reward_em(const sql::NormalizedSql& pred, const sql::NormalizedSql& gold);
/// Raw-text overload; empty or unnormalizable pred scores 0.
double reward_em(std::string_view pred, std::string_view gold);

/// Clause F1 of `pred` against `gold`; 0 when `pred` does not parse.
double reward_propose_or_correct(std::string_view pred, std::string_view gold, const sql::Schema* schema = nullptr);

double reward_e_verify(db::Status exec_class, episode::Verdict verdict);

/// F when the verdict is pass, 1 - F otherwise; F = clause F1 (0 if unparseable).
double reward_m_verify(episode::Verdict verdict, std::string_view candidate, std::string_view gold,
                       const sql::Schema* schema = nullptr);

/// Fills `total` from the components.
void finalize_total(RewardBreakdown& b, const RewardWeights& w);

/// Pure scorer: the caller supplies the final SQL's outcome (absent when no
/// final SQL) and the gold outcome. EXECUTE actions must carry exec_status.
RewardBreakdown score_trajectory(const episode::Trajectory& traj, const episode::DialogueTask& task,
                                 const std::optional<db::ExecutionOutcome>& pred_outcome,
                                 const db::ExecutionOutcome& gold_outcome, const sql::Schema* schema,
                                 const RewardWeights& weights = {});

/// Executes gold and final SQL (and any EXECUTE missing its class) on `handle`.
RewardBreakdown score_trajectory(const episode::Trajectory& traj, const episode::DialogueTask& task,
                                 const db::Handle& handle, const db::DatabaseInfo& info,
                                 const RewardWeights& weights = {}, const db::Limits& limits = {});

}  // namespace sqlenv::reward
