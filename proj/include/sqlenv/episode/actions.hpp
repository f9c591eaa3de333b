#pragma once

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sqlenv::episode {

using nlohmann::json;

enum class ActionKind { Propose, Execute, EVerify, MVerify, SelfCorrect, Finalize };
enum class Verdict { Pass, Fail };

inline constexpr ActionKind kAllKinds[] = {ActionKind::Propose,  ActionKind::Execute,     ActionKind::EVerify,
                                           ActionKind::MVerify,  ActionKind::SelfCorrect, ActionKind::Finalize};

std::string to_string(ActionKind k);
ActionKind action_kind_from_string(std::string_view s);
std::string to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);  ///< accepts pass, fail, no_pass

bool requires_sql(ActionKind k);  ///< PROPOSE, EXECUTE, SELF_CORRECT, FINALIZE
bool is_verify(ActionKind k);
bool is_tool_call(ActionKind k);  ///< EXECUTE and M_VERIFY each dispatch one tool

struct Action {
    ActionKind kind = ActionKind::Propose;
    std::optional<std::string> sql;  ///< M_VERIFY also carries the SQL it checked
    std::optional<Verdict> verdict;
    std::string thought;
    bool inferred = false;                   ///< verdict implied by the next tool choice
    std::optional<std::string> exec_status;  ///< EXECUTE only: ok | null | error

    json to_json() const;
    static Action from_json(const json& j);
};

/// Successor kinds after `last` (nullptr: empty history). The rule only
/// looks at the last action.
std::set<ActionKind> successors(const Action* last);

/// Successor kinds for a history, per the transition rule. The verdict of the
/// last verify action selects its branch; a verify without verdict has no
/// successors. Throws IllegalHistory when the history itself is illegal.
std::set<ActionKind> legal_next(const std::vector<Action>& history);

/// True when `next` may follow `history` (which must itself be legal).
bool is_legal_step(const std::vector<Action>& history, const Action& next);

}  // namespace sqlenv::episode
