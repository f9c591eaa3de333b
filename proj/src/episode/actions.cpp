#include "sqlenv/episode/actions.hpp"

#include "sqlenv/util/error.hpp"

namespace sqlenv::episode {

std::string to_string(ActionKind k) {
    switch (k) {
        case ActionKind::Propose: return "PROPOSE";
        case ActionKind::Execute: return "EXECUTE";
        case ActionKind::EVerify: return "E_VERIFY";
        case ActionKind::MVerify: return "M_VERIFY";
        case ActionKind::SelfCorrect: return "SELF_CORRECT";
        case ActionKind::Finalize: return "FINALIZE";
    }
    return "?";
}

ActionKind action_kind_from_string(std::string_view s) {
    for (auto k : kAllKinds)
        if (to_string(k) == s) return k;
    throw SchemaMismatch("unknown action kind '" + std::string(s) + "'");
}

std::string to_string(Verdict v) { return v == Verdict::Pass ? "pass" : "fail"; }

Verdict verdict_from_string(std::string_view s) {
    if (s == "pass") return Verdict::Pass;
    if (s == "fail" || s == "no_pass") return Verdict::Fail;
    throw SchemaMismatch("unknown verdict '" + std::string(s) + "'");
}

bool requires_sql(ActionKind k) {
    return k == ActionKind::Propose || k == ActionKind::Execute || k == ActionKind::SelfCorrect ||
           k == ActionKind::Finalize;
}

bool is_verify(ActionKind k) { return k == ActionKind::EVerify || k == ActionKind::MVerify; }

bool is_tool_call(ActionKind k) { return k == ActionKind::Execute || k == ActionKind::MVerify; }

json Action::to_json() const {
    json j = {{"kind", to_string(kind)}};
    if (sql) j["sql"] = *sql;
    if (verdict) j["verdict"] = to_string(*verdict);
    if (!thought.empty()) j["thought"] = thought;
    if (inferred) j["inferred"] = true;
    if (exec_status) j["exec_status"] = *exec_status;
    return j;
}

Action Action::from_json(const json& j) {
    Action a;
    try {
        a.kind = action_kind_from_string(j.at("kind").get<std::string>());
        if (j.contains("sql") && !j["sql"].is_null()) a.sql = j["sql"].get<std::string>();
        if (j.contains("verdict") && !j["verdict"].is_null()) a.verdict = verdict_from_string(j["verdict"].get<std::string>());
        a.thought = j.value("thought", "");
        a.inferred = j.value("inferred", false);
        if (j.contains("exec_status") && !j["exec_status"].is_null()) a.exec_status = j["exec_status"].get<std::string>();
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad action: ") + e.what());
    }
    return a;
}

std::set<ActionKind> successors(const Action* last) {
    if (!last) return {ActionKind::Propose};
    switch (last->kind) {
        case ActionKind::Propose:
        case ActionKind::SelfCorrect: return {ActionKind::Execute};
        case ActionKind::Execute: return {ActionKind::EVerify};
        case ActionKind::EVerify:
            if (!last->verdict) return {};
            return {*last->verdict == Verdict::Pass ? ActionKind::MVerify : ActionKind::SelfCorrect};
        case ActionKind::MVerify:
            if (!last->verdict) return {};
            return {*last->verdict == Verdict::Pass ? ActionKind::Finalize : ActionKind::SelfCorrect};
        case ActionKind::Finalize: return {};
    }
    return {};
}

std::set<ActionKind> legal_next(const std::vector<Action>& history) {
    const Action* prev = nullptr;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (!successors(prev).count(history[i].kind))
            throw IllegalHistory("action " + std::to_string(i) + " (" + to_string(history[i].kind) +
                                 ") does not follow " + (prev ? to_string(prev->kind) : std::string("the start")));
        prev = &history[i];
    }
    return successors(prev);
}

bool is_legal_step(const std::vector<Action>& history, const Action& next) {
    return legal_next(history).count(next.kind) != 0;
}

}  // namespace sqlenv::episode
