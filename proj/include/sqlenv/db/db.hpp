#pragma once

#include "sqlenv/sql/sql.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

struct sqlite3;

namespace sqlenv::db {

namespace fs = std::filesystem;

/// NULL, INTEGER, REAL, TEXT (blobs are carried as raw bytes in the string).
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;
using Row = std::vector<Value>;

enum class Status { Ok, Null, Error };

std::string to_string(Status s);
Status status_from_string(std::string_view s);

struct ExecutionOutcome {
    Status status = Status::Null;
    std::vector<Row> rows;
    std::string error_message;
    double elapsed_ms = 0.0;
    bool truncated = false;

    static ExecutionOutcome error(std::string message);
};

struct Limits {
    int timeout_ms = 30000;
    std::size_t max_rows = 10000;
};

/// ok: some row holds a non-NULL value; null: no rows or all NULL; error: has a message.
Status classify_outcome(const ExecutionOutcome& outcome);

bool execution_match(const ExecutionOutcome& pred, const ExecutionOutcome& gold, bool gold_ordered);

/// Python-style `repr` of a row list, e.g. "[('america', 4), ('asia', 7)]".
std::string render_rows(const std::vector<Row>& rows);
std::string render_value(const Value& v);

inline constexpr std::string_view kResultPrefix = "The sql results example is: ";

/// Exec tool snippet: prefixed row dump or the raw error, cut at `max_chars` codepoints.
std::string render_result_snippet(const ExecutionOutcome& outcome, std::size_t max_chars = 200);

struct Column {
    std::string name;
    std::string type;  ///< declared type as written
    int pk = 0;        ///< 1-based position in the primary key, 0 if not part of it
};

struct ForeignKey {
    std::string from;
    std::string table;
    std::string to;
};

struct Table {
    std::string name;
    std::vector<Column> columns;
    std::vector<ForeignKey> foreign_keys;
    std::vector<Value> example_row;  ///< empty when the table has no rows
};

struct DatabaseInfo {
    std::string id;
    fs::path path;
    std::vector<Table> tables;
    std::uint64_t content_hash = 0;

    sql::Schema schema() const;
    /// CREATE TABLE text with one example row per table, as used in prompts.
    std::string render_schema() const;
};

class Handle {
public:
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    Handle(Handle&& other) noexcept;
    Handle& operator=(Handle&& other) noexcept;
    ~Handle();

    /// Runs one read-only statement. Never throws: failures become Status::Error.
    ExecutionOutcome execute(std::string_view sql, const Limits& limits = {}) const;

    const std::string& id() const { return id_; }

private:
    friend class Registry;
    Handle(sqlite3* conn, std::string id) : conn_(conn), id_(std::move(id)) {}

    sqlite3* conn_ = nullptr;
    std::string id_;
};

std::uint64_t hash_file(const fs::path& path);

/// Immutable after construction; `open` may be called from any thread.
class Registry {
public:
    Registry() = default;

    /// Manifest: JSON object mapping database id to a path relative to the manifest.
    static Registry load(const fs::path& manifest);

    void add(const std::string& id, const fs::path& path);

    bool contains(const std::string& id) const { return entries_.count(id) != 0; }
    std::vector<std::string> ids() const;
    const DatabaseInfo& info(const std::string& id) const;

    /// True when the cached schema still matches the file on disk.
    bool cache_valid(const std::string& id) const;

    Handle open(const std::string& id) const;

private:
    std::map<std::string, DatabaseInfo> entries_;
};

/// Creates (or replaces) a database file by running `script` on it.
void create_database(const fs::path& path, std::string_view script);

/// Builds `<stem>.sqlite` in `out_dir` for every `<stem>.sql` in `sql_dir` and
/// writes `out_dir/manifest.json`. Returns the manifest path.
fs::path materialize_sql_dir(const fs::path& sql_dir, const fs::path& out_dir);

}  // namespace sqlenv::db
