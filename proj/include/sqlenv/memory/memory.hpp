#pragma once

#include "sqlenv/db/db.hpp"
#include "sqlenv/sql/sql.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sqlenv::memory {

using nlohmann::json;

inline constexpr std::size_t kSnippetChars = 50;

struct TurnRecord {
    int index = 0;
    std::string question;
    sql::NormalizedSql gold_sql;
    json parsed_elements;  ///< SqlClauses canonical JSON of gold_sql
    std::string result_snippet;

    json to_json() const;
    static TurnRecord from_json(const json& j);
};

/// Which SQL fills the memory for turns the model answered itself.
enum class MemoryMode { Gold, Predicted };

/// Append-only; `append_turn` returns a new value and leaves this one untouched.
class DialogueMemory {
public:
    DialogueMemory() = default;
    explicit DialogueMemory(std::string dialogue_id) : dialogue_id_(std::move(dialogue_id)) {}

    DialogueMemory append_turn(const std::string& question, std::string_view sql_text,
                               const db::ExecutionOutcome& outcome, const sql::Schema* schema = nullptr) const;

    const std::string& dialogue_id() const { return dialogue_id_; }
    const std::vector<TurnRecord>& turns() const { return turns_; }
    std::size_t size() const { return turns_.size(); }
    bool empty() const { return turns_.empty(); }

    std::string to_jsonl() const;
    static DialogueMemory from_jsonl(const std::string& dialogue_id, const std::string& jsonl);

    void save(const std::filesystem::path& session_dir) const;
    static DialogueMemory load(const std::filesystem::path& session_dir, const std::string& dialogue_id);

private:
    std::string dialogue_id_;
    std::vector<TurnRecord> turns_;
};

/// Memory snippet for one outcome: row dump (or error text) cut to 50 codepoints.
std::string memory_snippet(const db::ExecutionOutcome& outcome);

std::string render_memory(const DialogueMemory& memory);

std::string render_memory_verify_prompt(const DialogueMemory& memory, const std::string& current_question,
                                        const std::string& candidate_sql, const std::string& exec_snippet);

/// True when every record's parsed elements match a fresh decomposition.
bool records_consistent(const DialogueMemory& memory, const sql::Schema* schema = nullptr);

}  // namespace sqlenv::memory
