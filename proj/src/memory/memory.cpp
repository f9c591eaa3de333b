#include "sqlenv/memory/memory.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <sstream>

namespace sqlenv::memory {

json TurnRecord::to_json() const {
    return {{"index", index},
            {"question", question},
            {"gold_sql", gold_sql.original},
            {"parsed_elements", parsed_elements},
            {"result_snippet", result_snippet}};
}

TurnRecord TurnRecord::from_json(const json& j) {
    TurnRecord r;
    try {
        r.index = j.at("index").get<int>();
        r.question = j.at("question").get<std::string>();
        r.gold_sql = sql::normalize_sql(j.at("gold_sql").get<std::string>());
        r.parsed_elements = j.at("parsed_elements");
        r.result_snippet = j.at("result_snippet").get<std::string>();
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad memory record: ") + e.what());
    }
    return r;
}

std::string memory_snippet(const db::ExecutionOutcome& outcome) {
    const std::string full =
        db::classify_outcome(outcome) == db::Status::Error ? outcome.error_message : db::render_rows(outcome.rows);
    return std::string(text::take_codepoints(full, kSnippetChars));
}

DialogueMemory DialogueMemory::append_turn(const std::string& question, std::string_view sql_text,
                                           const db::ExecutionOutcome& outcome, const sql::Schema* schema) const {
    TurnRecord r;
    r.index = static_cast<int>(turns_.size());
    r.question = question;
    r.gold_sql = sql::normalize_sql(sql_text);
    r.parsed_elements = sql::decompose_clauses(r.gold_sql, schema).to_json();
    r.result_snippet = memory_snippet(outcome);
    DialogueMemory next = *this;
    next.turns_.push_back(std::move(r));
    return next;
}

std::string DialogueMemory::to_jsonl() const {
    std::string out;
    for (const auto& t : turns_) out += t.to_json().dump() + "\n";
    return out;
}

DialogueMemory DialogueMemory::from_jsonl(const std::string& dialogue_id, const std::string& jsonl) {
    DialogueMemory m(dialogue_id);
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaMismatch(std::string("bad memory line: ") + e.what());
        }
        auto r = TurnRecord::from_json(j);
        if (r.index != static_cast<int>(m.turns_.size()))
            throw SchemaMismatch("memory turn indices must be contiguous from 0");
        m.turns_.push_back(std::move(r));
    }
    return m;
}

void DialogueMemory::save(const std::filesystem::path& session_dir) const {
    text::write_file(session_dir / (dialogue_id_ + ".jsonl"), to_jsonl());
}

DialogueMemory DialogueMemory::load(const std::filesystem::path& session_dir, const std::string& dialogue_id) {
    return from_jsonl(dialogue_id, text::read_file(session_dir / (dialogue_id + ".jsonl")));
}

std::string render_memory(const DialogueMemory& memory) {
    std::string out;
    for (const auto& t : memory.turns()) {
        const std::string marker = "== Turn " + std::to_string(t.index) + " ==\n";
        out += marker;
        out += "Question: " + t.question + "\n";
        out += "Ground-Truth SQL: " + t.gold_sql.original + "\n";
        out += "Parsed Elements for each term: " + t.parsed_elements.dump() + "\n";
        out += "SQL Results (truncated to 50 characters): " + t.result_snippet + "\n";
        out += marker;
    }
    return out;
}

std::string render_memory_verify_prompt(const DialogueMemory& memory, const std::string& current_question,
                                        const std::string& candidate_sql, const std::string& exec_snippet) {
    std::string memory_str = memory.empty() ? "" : "\n" + render_memory(memory);
    std::string out;
    out += "You are a coherence verifier for Multi-turn Text2SQL.\n";
    out += "\n";
    out += "Current Question: " + current_question + "  \n";
    out += "Proposed SQL: " + candidate_sql + "  \n";
    out += "The execution results of the proposed SQL: " + exec_snippet + "\n";
    out += "\n";
    out += "Memory (historical information in order):  \n";
    out += memory_str + "  \n";
    out += "\n";
    out += "Your tasks:  \n";
    out += "1. Verify whether the Proposed SQL is coherent with the Current Question and the Memory, based on the "
           "relation between the Current Question and Historical Questions.  \n";
    out += "   - If the Current Question introduces changes (new columns, conditions, ordering, etc.), SQL should "
           "update accordingly.  \n";
    out += "   - If not, SQL must remain consistent with the Historical Questions.  \n";
    out += "\n";
    out += "Step-by-step reasoning checklist:  \n";
    out += "   1. First parse the Proposed SQL into its components (SELECT, FROM, WHERE, GROUP BY, HAVING, ORDER BY, "
           "JOINs).\n";
    out += "   2. Check tables are consistent with context.  \n";
    out += "   3. Check selected columns match current and historical intent.  \n";
    out += "   4. Check conditions (WHERE/GROUP/HAVING) reflect the relation between current and past questions.  \n";
    out += "   5. Check ordering (ORDER BY) is preserved unless explicitly changed.  \n";
    out += "   6. Verify that joins and table relationships follow the established context.\n";
    out += "   7. Make sure the SQL and the execution results of the proposed SQL answer the current question while "
           "remaining logically coherent with the conversation history and execution results.\n";
    out += "\n";
    out += "2. After verifying, output one of the following:  \n";
    out += "   - `<memory_verify>pass</memory_verify>` if coherent.  \n";
    out += "   - `<memory_verify>no_pass</memory_verify>` if not coherent.  \n";
    out += "\n";
    out += "3. If `no_pass`: explain issues, think step by step to refine SQL, and then please call `exec_sql` tool "
           "again via <tool_call> to check the corrected SQL and get the execution results. Repeat until you get "
           "`pass`. \n";
    out += "4. If `pass`: return the final SQL inside `<answer_sql>...</answer_sql>`.  \n";
    out += "\n";
    out += "Note finally you should return the final SQL inside `<answer_sql>...</answer_sql>";
    return out;
}

bool records_consistent(const DialogueMemory& memory, const sql::Schema* schema) {
    for (const auto& t : memory.turns()) {
        try {
            if (sql::SqlClauses::from_json(t.parsed_elements) != sql::decompose_clauses(t.gold_sql, schema)) return false;
        } catch (const Error&) {
            return false;
        }
        if (text::codepoints(t.result_snippet) > kSnippetChars) return false;
    }
    return true;
}

}  // namespace sqlenv::memory
