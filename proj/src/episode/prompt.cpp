#include "sqlenv/episode/episode.hpp"

namespace sqlenv::episode {

json tool_schemas() {
    auto tool = [](const char* name, const char* description, const char* code_description) {
        return json{{"type", "function"},
                    {"function",
                     {{"name", name},
                      {"description", description},
                      {"parameters",
                       {{"type", "object"},
                        {"properties", {{"code", {{"type", "string"}, {"description", code_description}}}}},
                        {"required", {"code"}}}}}}};
    };
    return json::array({
        tool("exec_sql", "A tool for executing sql and return the query results",
             "The current generated SQL that will be executed"),
        tool("memory_retrieve", "A tool for retrieving the historical questions and ground-truth SQL in this dialogue",
             "The current generated SQL that needs to be verified coherence with the given historical memory"),
    });
}

std::string render_system_prompt() {
    std::string out =
        "# Tools\n\nYou may call one or more functions to assist with the user query.\n\n"
        "You are provided with function signatures within <tools></tools> XML tags:\n<tools>\n";
    for (const auto& t : tool_schemas()) out += t.dump() + "\n";
    out +=
        "</tools>\n\nFor each function call, return a json object with function name and arguments within "
        "<tool_call></tool_call> XML tags:\n<tool_call>\n{\"name\": <function-name>, \"arguments\": "
        "<args-json-object>}\n</tool_call>";
    return out;
}

std::string render_task_prompt(const DialogueTask& task, const db::DatabaseInfo& info) {
    std::string out;
    out +=
        "You are a SQL expert. Your task is to translate a natural language question into SQL through step-by-step "
        "reasoning. Please follow the steps:\n\n";
    out += "1. Reasoning\n- Always think step by step before calling the tool. Draft the SQL.\n\n";
    out += "2. Calling `exec_sql` tool (Please call `exec_sql` tool at least once)\n";
    out +=
        "- Call the `exec_sql` tool to execute the current generated SQL and verify the execution results based on "
        "questions.\n";
    out +=
        "- conclude <exec_verify>pass</exec_verify> if results are reasonable, otherwise "
        "<exec_verify>no_pass</exec_verify>.\n";
    out += "- If no_pass, refine the SQL using the execution results and repeat call `exec_sql` tool until it passes.\n\n";
    out += "Note:\n1. Please call `exec_sql` tool at least once\n";
    out += "2. Return the final SQL enclosed in: <answer_sql> ... </answer_sql>\n\n";

    const std::string schema = "Database schema: \n" + info.render_schema();
    if (task.history.empty()) {
        out += schema + "\n";
    } else {
        out += "Here are previous question and corresponding correct SQL in this dialogue: \n\n";
        for (std::size_t i = 0; i < task.history.size(); ++i) {
            const auto& h = task.history[i];
            out += "## Turn " + std::to_string(i + 1) + " ## \n";
            out += "User: \"" + (i == 0 ? schema : std::string()) + "Question: " + h.question + " \" \n";
            out += "Corresponding Correct SQL: \"" + h.gold_sql + "\" \n\n";
        }
    }
    out += "Now please translate the following question to SQL step by step \n";
    out += "Question: " + task.question +
           " (Note you only need to translate the question to SQL instead answer the question. Once you feel you "
           "are ready for the final SQL, directly return the SQL inside <answer_sql> and </answer_sql>  at the end "
           "of your response. \n Note please call `exec_sql` tool at least once)";
    return out;
}

std::string render_exec_response(const std::string& current_question, const std::string& code,
                                 const std::string& return_msg) {
    std::string out;
    out += "Recap:  \n";
    out += "- Current question: " + current_question + "  \n";
    out += "- Generated SQL: " + code + "  \n";
    out += "- SQL execution results (truncated to 200 characters): " + return_msg + "  \n\n";
    out += "Now please:  \n";
    out += "1. Verify whether the SQL execution results are valid:  \n";
    out += "   - Check if the SQL runs without errors.  \n";
    out += "   - Check if the returned columns exist in the schema and are relevant to the question.  \n";
    out += "   - Check if the results contain unexpected NULL values, empty sets, or error messages.  \n\n";
    out += "2. After verifying, output:  \n";
    out += "   - <exec_verify>pass</exec_verify> if the results are valid and consistent with the schema.  \n";
    out += "   - <exec_verify>no_pass</exec_verify> if the results show errors, irrelevant columns, or invalid values.  \n\n";
    out +=
        "3. If <exec_verify>no_pass</exec_verify>, think step by step, refine the SQL and provide a corrected SQL and "
        "then execute it via re-calling ``exec_sql`` tool again via <tool_call>. Repeat until you get valid results.\n";
    out +=
        "4. If <exec_verify>pass</exec_verify>, You have to call `memory_retrieve` tool via <tool_call>  at least once "
        "to ensure the current generated SQL is coherent with the historical memory.";
    return out;
}

std::string wrap_observation(const std::string& body) { return "\n<tool_response>\n" + body + "\n</tool_response>\n"; }

std::string quoted_question(const std::string& question) { return "Question: " + question; }

memory::DialogueMemory build_memory(const DialogueTask& task, const db::Handle& handle, const db::DatabaseInfo& info,
                                    const db::Limits& limits) {
    const auto schema = info.schema();
    memory::DialogueMemory mem(task.dialogue_id);
    for (const auto& h : task.history)
        mem = mem.append_turn(quoted_question(h.question), h.gold_sql, handle.execute(h.gold_sql, limits), &schema);
    return mem;
}

}  // namespace sqlenv::episode
