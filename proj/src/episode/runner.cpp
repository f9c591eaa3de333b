#include "builder.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

namespace sqlenv::episode {

EpisodeRunner::EpisodeRunner(DialogueTask task, const db::DatabaseInfo& info, db::Handle handle, EpisodeLimits limits,
                             std::optional<memory::DialogueMemory> memory, std::string trajectory_id)
    : task_(std::move(task)), handle_(std::move(handle)), limits_(limits) {
    memory_ = memory ? std::move(*memory) : build_memory(task_, handle_, info, limits_.exec);
    traj_.trajectory_id = trajectory_id.empty() ? task_.task_id + "#0" : std::move(trajectory_id);
    traj_.task_id = task_.task_id;
    traj_.prompt = render_task_prompt(task_, info);
    traj_.segments.push_back({traj_.prompt, Origin::Environment, false});
    messages_.push_back({"system", render_system_prompt()});
    messages_.push_back({"user", traj_.prompt});
}

std::string EpisodeRunner::dispatch(Action& a) {
    const std::string& sql = *a.sql;
    const auto outcome = handle_.execute(sql, limits_.exec);
    const auto snippet = db::render_result_snippet(outcome, limits_.exec_snippet_chars);
    ++tool_calls_;
    if (a.kind == ActionKind::Execute) {
        a.exec_status = db::to_string(db::classify_outcome(outcome));
        return render_exec_response(quoted_question(task_.question), sql, snippet);
    }
    return memory::render_memory_verify_prompt(memory_, quoted_question(task_.question), sql, snippet);
}

void EpisodeRunner::add_observation(const std::string& body) {
    traj_.segments.push_back({wrap_observation(body), Origin::Environment, false});
    messages_.push_back({"tool", body});
}

void EpisodeRunner::abort(Termination why, const std::string& message) {
    if (terminal()) return;
    traj_.termination = why;
    traj_.detail = message;
}

StepResult EpisodeRunner::step(std::string_view emission, std::optional<std::size_t> usage, bool truncated) {
    if (terminal()) throw IllegalTransition("episode already terminated (" + to_string(traj_.termination) + ")");
    StepResult r;
    traj_.segments.push_back({std::string(emission), Origin::Model, true});
    messages_.push_back({"assistant", std::string(emission)});
    units_ += usage.value_or(text::codepoints(emission));
    if (truncated || units_ > limits_.max_response_units) {
        abort(Termination::MaxLength, std::to_string(units_) + " units generated, budget " +
                                          std::to_string(limits_.max_response_units));
        r.terminal = true;
        return r;
    }

    std::vector<Tag> tags;
    try {
        tags = parse_tags(emission);
    } catch (const TagParseError& e) {
        abort(Termination::ParseFailure, e.what());
        r.terminal = true;
        return r;
    }

    const std::size_t first_new = traj_.actions.size();
    detail::ActionBuilder b(traj_.actions);
    bool acted = false;
    for (const auto& tag : tags) {
        if (tag.kind == TagKind::Think) {
            b.think(tag.body);
        } else if (tag.kind == TagKind::ExecVerify) {
            b.exec_verdict(verdict_from_string(tag.body));
        } else if (tag.kind == TagKind::MemoryVerify) {
            b.memory_verdict(verdict_from_string(tag.body));
        } else if (tag.kind == TagKind::Answer) {
            b.infer_before(tag.kind);
            b.answer(tag.body);
            traj_.final_sql = tag.body;
            traj_.termination = Termination::Finalized;
            acted = true;
            break;
        } else {
            b.infer_before(tag.kind, tag.tool_name);
            if (tool_calls_ >= limits_.max_interactions) {
                abort(Termination::MaxInteractions, "tool call " + std::to_string(tool_calls_ + 1) +
                                                        " refused, budget " +
                                                        std::to_string(limits_.max_interactions));
                acted = true;
                break;
            }
            b.tool(tag.tool_name, tag.body);
            auto body = dispatch(traj_.actions.back());
            add_observation(body);
            r.observation = std::move(body);
            acted = true;
            break;
        }
    }
    if (!acted) abort(Termination::ParseFailure, "emission holds no tool call or answer");
    r.new_actions.assign(traj_.actions.begin() + static_cast<std::ptrdiff_t>(first_new), traj_.actions.end());
    r.terminal = terminal();
    return r;
}

std::optional<std::string> EpisodeRunner::apply_action(const Action& action) {
    if (terminal()) throw IllegalTransition("episode already terminated (" + to_string(traj_.termination) + ")");
    auto& acts = traj_.actions;
    // Verdict for an outstanding memory check.
    if (action.kind == ActionKind::MVerify && !action.sql && action.verdict && !acts.empty() &&
        acts.back().kind == ActionKind::MVerify && !acts.back().verdict) {
        acts.back().verdict = action.verdict;
        return std::nullopt;
    }
    const auto next = legal_next(acts);
    if (!next.count(action.kind))
        throw IllegalTransition(to_string(action.kind) + " is not legal after " +
                                (acts.empty() ? std::string("the start") : to_string(acts.back().kind)));
    if (requires_sql(action.kind) && !action.sql) throw IllegalTransition(to_string(action.kind) + " needs SQL");
    if (action.kind == ActionKind::EVerify && !action.verdict) throw IllegalTransition("E_VERIFY needs a verdict");
    if (action.kind == ActionKind::MVerify && !action.sql && !action.verdict)
        throw IllegalTransition("M_VERIFY needs SQL or a verdict");

    const bool tool = action.kind == ActionKind::Execute || (action.kind == ActionKind::MVerify && action.sql);
    if (tool && tool_calls_ >= limits_.max_interactions)
        throw InteractionBudgetExceeded("tool call " + std::to_string(tool_calls_ + 1) + " exceeds max_turns " +
                                        std::to_string(limits_.max_interactions));

    Action a = action;
    std::optional<std::string> body;
    if (tool) body = dispatch(a);
    acts.push_back(a);
    if (body) add_observation(*body);
    if (a.kind == ActionKind::Finalize) {
        traj_.final_sql = a.sql;
        traj_.termination = Termination::Finalized;
    }
    return body;
}

Trajectory EpisodeRunner::finish() const {
    Trajectory t = traj_;
    t.violations = validate_trajectory(t, limits_);
    return t;
}

Trajectory run_episode(policy::Policy& policy, const DialogueTask& task, const db::Registry& registry,
                       const EpisodeLimits& limits, const RolloutParams& params, const std::string& trajectory_id) {
    const auto& info = registry.info(task.db_id);
    EpisodeRunner runner(task, info, registry.open(task.db_id), limits, std::nullopt, trajectory_id);
    while (!runner.terminal()) {
        policy::GenerationRequest req;
        req.messages = runner.messages();
        req.temperature = params.temperature;
        req.max_new = limits.max_response_units > runner.units_used() ? limits.max_response_units - runner.units_used() : 0;
        req.stop_markers = kStopMarkers;
        req.seed = params.seed;
        policy::GenerationResult res;
        try {
            res = policy.generate(req);
        } catch (const PolicyUnavailable& e) {
            runner.abort(Termination::Aborted, e.what());
            break;
        }
        runner.step(res.text, res.usage, res.finish == policy::Finish::Budget);
    }
    return runner.finish();
}

policy::ScriptedPolicy::Fixtures record_fixtures(const std::vector<std::string>& emissions, const DialogueTask& task,
                                                 const db::Registry& registry, const EpisodeLimits& limits) {
    policy::SequencePolicy seq(emissions);
    run_episode(seq, task, registry, limits);
    return seq.recorded();
}

}  // namespace sqlenv::episode
