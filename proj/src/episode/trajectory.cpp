#include "sqlenv/episode/episode.hpp"

#include "sqlenv/util/error.hpp"

namespace sqlenv::episode {

std::string to_string(Origin o) { return o == Origin::Model ? "model" : "environment"; }

std::string to_string(Termination t) {
    switch (t) {
        case Termination::Finalized: return "finalized";
        case Termination::MaxInteractions: return "max_interactions";
        case Termination::MaxLength: return "max_length";
        case Termination::ParseFailure: return "parse_failure";
        case Termination::Aborted: return "aborted";
        case Termination::Running: return "running";
    }
    return "running";
}

Termination termination_from_string(std::string_view s) {
    for (auto t : {Termination::Finalized, Termination::MaxInteractions, Termination::MaxLength,
                   Termination::ParseFailure, Termination::Aborted, Termination::Running})
        if (to_string(t) == s) return t;
    throw SchemaMismatch("unknown termination '" + std::string(s) + "'");
}

json Violation::to_json() const {
    json j = {{"code", code}, {"message", message}};
    if (action_index >= 0) j["action_index"] = action_index;
    return j;
}

int Trajectory::tool_calls() const {
    int n = 0;
    for (const auto& a : actions)
        if (is_tool_call(a.kind) && (a.kind == ActionKind::Execute || a.sql)) ++n;
    return n;
}

std::string Trajectory::full_text() const {
    std::string out;
    for (const auto& s : segments) out += s.text;
    return out;
}

json Trajectory::to_json() const {
    json segs = json::array();
    for (const auto& s : segments) segs.push_back({{"text", s.text}, {"origin", to_string(s.origin)}, {"maskable", s.maskable}});
    json acts = json::array();
    for (const auto& a : actions) acts.push_back(a.to_json());
    json viol = json::array();
    for (const auto& v : violations) viol.push_back(v.to_json());
    json j = {{"trajectory_id", trajectory_id},
              {"task_id", task_id},
              {"prompt", prompt},
              {"segments", segs},
              {"actions", acts},
              {"final_sql", final_sql ? json(*final_sql) : json(nullptr)},
              {"termination", to_string(termination)},
              {"violations", viol}};
    if (!detail.empty()) j["detail"] = detail;
    return j;
}

Trajectory Trajectory::from_json(const json& j) {
    Trajectory t;
    try {
        t.trajectory_id = j.value("trajectory_id", "");
        t.task_id = j.at("task_id").get<std::string>();
        t.prompt = j.at("prompt").get<std::string>();
        for (const auto& s : j.at("segments")) {
            const auto origin = s.at("origin").get<std::string>();
            if (origin != "model" && origin != "environment") throw SchemaMismatch("unknown origin '" + origin + "'");
            t.segments.push_back({s.at("text").get<std::string>(), origin == "model" ? Origin::Model : Origin::Environment,
                                  s.at("maskable").get<bool>()});
        }
        for (const auto& a : j.at("actions")) t.actions.push_back(Action::from_json(a));
        if (j.contains("final_sql") && !j["final_sql"].is_null()) t.final_sql = j["final_sql"].get<std::string>();
        t.termination = termination_from_string(j.at("termination").get<std::string>());
        t.detail = j.value("detail", "");
        for (const auto& v : j.value("violations", json::array()))
            t.violations.push_back({v.at("code").get<std::string>(), v.value("message", ""), v.value("action_index", -1)});
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad trajectory: ") + e.what());
    }
    return t;
}

std::vector<Violation> validate_trajectory(const Trajectory& traj, const EpisodeLimits& limits) {
    std::vector<Violation> out;
    const auto& acts = traj.actions;
    int tools = 0;
    for (std::size_t i = 0; i < acts.size(); ++i) {
        const auto& a = acts[i];
        const int idx = static_cast<int>(i);
        if (requires_sql(a.kind) && !a.sql)
            out.push_back({"MissingSql", to_string(a.kind) + " carries no SQL", idx});
        const bool dangling = i + 1 == acts.size() && traj.termination != Termination::Finalized;
        if (is_verify(a.kind) && !a.verdict && !dangling)
            out.push_back({"MissingVerdict", to_string(a.kind) + " has no verdict", idx});
        if (a.kind == ActionKind::Execute || (a.kind == ActionKind::MVerify && a.sql)) ++tools;

        // A verify with no verdict has no successors; that is reported
        // above, so the check resumes at the next action.
        const Action* prev = i ? &acts[i - 1] : nullptr;
        const bool prev_open = prev && is_verify(prev->kind) && !prev->verdict;
        if (!prev_open) {
            const auto next = successors(prev);
            if (!next.count(a.kind)) {
                std::string expected;
                for (auto k : next) expected += (expected.empty() ? "" : "|") + to_string(k);
                out.push_back({"IllegalTransition",
                               to_string(a.kind) + " where " + (expected.empty() ? "nothing" : expected) + " is allowed",
                               idx});
            }
        }
    }

    if (tools > limits.max_interactions || traj.termination == Termination::MaxInteractions)
        out.push_back({"Budget",
                       "more than " + std::to_string(limits.max_interactions) + " tool calls" +
                           (traj.detail.empty() ? "" : ": " + traj.detail),
                       -1});

    switch (traj.termination) {
        case Termination::Finalized:
            if (acts.empty() || acts.back().kind != ActionKind::Finalize)
                out.push_back({"Termination", "finalized episode does not end with FINALIZE", -1});
            break;
        case Termination::MaxInteractions: break;
        case Termination::MaxLength:
            out.push_back({"LengthBudget", "response length budget exhausted" + (traj.detail.empty() ? "" : ": " + traj.detail), -1});
            break;
        case Termination::ParseFailure:
            out.push_back({"TagGrammar", traj.detail.empty() ? "emission did not parse" : traj.detail, -1});
            break;
        case Termination::Aborted:
            out.push_back({"Aborted", traj.detail.empty() ? "policy unavailable" : traj.detail, -1});
            break;
        case Termination::Running: out.push_back({"Termination", "episode has not terminated", -1}); break;
    }
    return out;
}

}  // namespace sqlenv::episode
