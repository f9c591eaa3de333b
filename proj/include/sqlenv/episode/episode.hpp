#pragma once

#include "sqlenv/db/db.hpp"
#include "sqlenv/episode/actions.hpp"
#include "sqlenv/episode/task.hpp"
#include "sqlenv/memory/memory.hpp"
#include "sqlenv/policy/policy.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sqlenv::episode {

// ---- tag grammar -------------------------------------------------------

enum class TagKind { Think, ToolCall, ExecVerify, MemoryVerify, Answer };

struct Tag {
    TagKind kind;
    std::string body;       ///< think text, verdict word, answer SQL, or tool code
    std::string tool_name;  ///< ToolCall only: exec_sql | memory_retrieve
};

/// Splits one model emission into tags. `<think>` may be left open; it then
/// ends at the next recognised tag. Throws TagParseError on any other
/// unclosed tag, malformed tool-call JSON, unknown tool or verdict word.
std::vector<Tag> parse_tags(std::string_view emission);

/// Converts a whole model output to actions without dispatching anything:
/// the first exec_sql becomes PROPOSE+EXECUTE, later ones SELF_CORRECT+EXECUTE,
/// verdict tags become E_VERIFY / M_VERIFY, answer_sql becomes FINALIZE.
/// Verdicts left implicit are inferred from the next tool choice.
/// Returns an empty list for text with no recognised tags.
std::vector<Action> parse_model_output(std::string_view text);

// ---- templates ---------------------------------------------------------

inline constexpr std::string_view kExecTool = "exec_sql";
inline constexpr std::string_view kMemoryTool = "memory_retrieve";

/// The two tool schemas as function-calling JSON.
json tool_schemas();
std::string render_system_prompt();
std::string render_task_prompt(const DialogueTask& task, const db::DatabaseInfo& info);
std::string render_exec_response(const std::string& current_question, const std::string& code,
                                 const std::string& return_msg);
/// Wraps a tool body as it appears in the exchange text.
std::string wrap_observation(const std::string& body);
/// The question as quoted in tool responses and memory ("Question: ...").
std::string quoted_question(const std::string& question);

/// Gold memory for a task: history turns executed against `handle`.
memory::DialogueMemory build_memory(const DialogueTask& task, const db::Handle& handle, const db::DatabaseInfo& info,
                                    const db::Limits& limits = {});

// ---- trajectories -----------------------------------------------------

enum class Origin { Model, Environment };
enum class Termination { Finalized, MaxInteractions, MaxLength, ParseFailure, Aborted, Running };

std::string to_string(Origin o);
std::string to_string(Termination t);
Termination termination_from_string(std::string_view s);

struct Segment {
    std::string text;
    Origin origin = Origin::Environment;
    bool maskable = false;
};

struct Violation {
    std::string code;  ///< IllegalTransition | MissingVerdict | MissingSql | Budget | LengthBudget | TagGrammar | Aborted | Termination
    std::string message;
    int action_index = -1;

    json to_json() const;
};

struct Trajectory {
    std::string trajectory_id;
    std::string task_id;
    std::string prompt;
    std::vector<Segment> segments;  ///< segments[0] is the prompt
    std::vector<Action> actions;
    std::optional<std::string> final_sql;
    Termination termination = Termination::Running;
    std::string detail;  ///< why a non-finalized episode stopped
    std::vector<Violation> violations;

    int tool_calls() const;
    std::string full_text() const;

    json to_json() const;
    static Trajectory from_json(const json& j);
};

struct EpisodeLimits {
    int max_interactions = 4;
    std::size_t max_response_units = 8000;  ///< codepoints generated per episode
    db::Limits exec;
    std::size_t exec_snippet_chars = 200;
};

/// Conformance check: empty iff the actions follow the transition rule, stay
/// within the budgets and the episode ended by a FINALIZE.
std::vector<Violation> validate_trajectory(const Trajectory& traj, const EpisodeLimits& limits = {});

// ---- runner -------------------------------------------------------------

struct StepResult {
    std::vector<Action> new_actions;
    std::optional<std::string> observation;  ///< tool body, absent when terminal
    bool terminal = false;
};

/// One episode's state machine. Owns its database handle and memory snapshot.
class EpisodeRunner {
public:
    EpisodeRunner(DialogueTask task, const db::DatabaseInfo& info, db::Handle handle, EpisodeLimits limits = {},
                  std::optional<memory::DialogueMemory> memory = std::nullopt, std::string trajectory_id = "");

    /// Feeds one raw model emission. Lenient: grammar deviations are
    /// recorded as violations, not thrown.
    /// `truncated` marks an emission cut by the generation budget.
    StepResult step(std::string_view emission, std::optional<std::size_t> usage = std::nullopt,
                    bool truncated = false);

    /// Strict single-action transition. Throws IllegalTransition when the kind
    /// is not legal next, InteractionBudgetExceeded on a tool call past the
    /// budget. Returns the tool body for EXECUTE / M_VERIFY.
    std::optional<std::string> apply_action(const Action& action);

    /// Marks the episode terminated by something outside the emission text.
    void abort(Termination why, const std::string& message);

    bool terminal() const { return traj_.termination != Termination::Running; }
    int interaction_count() const { return tool_calls_; }
    const Trajectory& trajectory() const { return traj_; }
    const DialogueTask& task() const { return task_; }
    const memory::DialogueMemory& memory() const { return memory_; }
    /// Conversation so far as policy messages (system, user, assistant/tool...).
    const std::vector<policy::Message>& messages() const { return messages_; }
    std::size_t units_used() const { return units_; }

    /// Trajectory with violations filled in.
    Trajectory finish() const;

private:
    std::string dispatch(Action& a);
    void record(Action a);
    void add_observation(const std::string& body);

    DialogueTask task_;
    db::Handle handle_;
    EpisodeLimits limits_;
    memory::DialogueMemory memory_;
    Trajectory traj_;
    std::vector<policy::Message> messages_;
    int tool_calls_ = 0;
    std::size_t units_ = 0;
};

struct RolloutParams {
    double temperature = 0.7;
    std::optional<std::uint64_t> seed;
};

/// Alternates policy generation and environment steps until terminal.
/// PolicyUnavailable ends the episode with termination=aborted.
Trajectory run_episode(policy::Policy& policy, const DialogueTask& task, const db::Registry& registry,
                       const EpisodeLimits& limits = {}, const RolloutParams& params = {},
                       const std::string& trajectory_id = "");

/// Turns a list of model emissions into a scripted fixture pack for `task`
/// by replaying them through the environment.
policy::ScriptedPolicy::Fixtures record_fixtures(const std::vector<std::string>& emissions, const DialogueTask& task,
                                                 const db::Registry& registry, const EpisodeLimits& limits = {});

inline const std::vector<std::string> kStopMarkers = {"</tool_call>", "</answer_sql>"};

}  // namespace sqlenv::episode
