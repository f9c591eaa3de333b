#include "sqlenv/db/db.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>

namespace sqlenv::db {

std::string to_string(Status s) {
    switch (s) {
        case Status::Ok: return "ok";
        case Status::Null: return "null";
        case Status::Error: return "error";
    }
    return "error";
}

Status status_from_string(std::string_view s) {
    if (s == "ok") return Status::Ok;
    if (s == "null") return Status::Null;
    if (s == "error") return Status::Error;
    throw ConfigError("unknown execution status '" + std::string(s) + "'");
}

ExecutionOutcome ExecutionOutcome::error(std::string message) {
    ExecutionOutcome o;
    o.status = Status::Error;
    o.error_message = std::move(message);
    return o;
}

Status classify_outcome(const ExecutionOutcome& outcome) {
    if (outcome.status == Status::Error || !outcome.error_message.empty()) return Status::Error;
    for (const auto& row : outcome.rows)
        for (const auto& v : row)
            if (!std::holds_alternative<std::monostate>(v)) return Status::Ok;
    return Status::Null;
}

namespace {

std::string value_key(const Value& v) {
    if (std::holds_alternative<std::monostate>(v)) return "n";
    if (const auto* i = std::get_if<std::int64_t>(&v)) return "i" + std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) {
        if (std::isfinite(*d) && std::floor(*d) == *d && std::fabs(*d) < 9.2e18)
            return "i" + std::to_string(static_cast<std::int64_t>(*d));
        return "f" + text::python_float_repr(*d);
    }
    return "s" + std::get<std::string>(v);
}

std::vector<std::string> row_keys(const std::vector<Row>& rows) {
    std::vector<std::string> keys;
    keys.reserve(rows.size());
    for (const auto& row : rows) {
        std::string k;
        for (const auto& v : row) {
            const auto vk = value_key(v);
            k += std::to_string(vk.size()) + ":" + vk;
        }
        keys.push_back(std::move(k));
    }
    return keys;
}

}  // namespace

bool execution_match(const ExecutionOutcome& pred, const ExecutionOutcome& gold, bool gold_ordered) {
    if (classify_outcome(pred) == Status::Error || classify_outcome(gold) == Status::Error) return false;
    auto p = row_keys(pred.rows);
    auto g = row_keys(gold.rows);
    if (!gold_ordered) {
        std::sort(p.begin(), p.end());
        std::sort(g.begin(), g.end());
    }
    return p == g;
}

std::string render_value(const Value& v) {
    if (std::holds_alternative<std::monostate>(v)) return "None";
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) return text::python_float_repr(*d);
    return text::python_str_repr(std::get<std::string>(v));
}

std::string render_rows(const std::vector<Row>& rows) {
    std::string out = "[";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (r) out += ", ";
        out += "(";
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (c) out += ", ";
            out += render_value(rows[r][c]);
        }
        if (rows[r].size() == 1) out += ",";
        out += ")";
    }
    return out + "]";
}

std::string render_result_snippet(const ExecutionOutcome& outcome, std::size_t max_chars) {
    std::string full = classify_outcome(outcome) == Status::Error
                           ? outcome.error_message
                           : std::string(kResultPrefix) + render_rows(outcome.rows);
    return std::string(text::take_codepoints(full, max_chars));
}

// ---------------------------------------------------------------------------

namespace {

std::string plain_value(const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    return render_value(v);
}

std::string prompt_type(const std::string& declared) {
    const auto up = text::to_upper(declared);
    for (const char* frag : {"INT", "REAL", "FLOA", "DOUB", "NUM", "DEC", "BOOL", "DATE", "TIME"})
        if (up.find(frag) != std::string::npos) return "number";
    return "text";
}

Value column_value(sqlite3_stmt* stmt, int col) {
    switch (sqlite3_column_type(stmt, col)) {
        case SQLITE_NULL: return std::monostate{};
        case SQLITE_INTEGER: return static_cast<std::int64_t>(sqlite3_column_int64(stmt, col));
        case SQLITE_FLOAT: return sqlite3_column_double(stmt, col);
        default: {
            const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt, col));
            const int n = sqlite3_column_bytes(stmt, col);
            return std::string(p ? p : "", static_cast<std::size_t>(n));
        }
    }
}

struct Stmt {
    sqlite3_stmt* s = nullptr;
    ~Stmt() { sqlite3_finalize(s); }
};

std::vector<Row> query_all(sqlite3* conn, const std::string& sql) {
    Stmt st;
    if (sqlite3_prepare_v2(conn, sql.c_str(), -1, &st.s, nullptr) != SQLITE_OK)
        throw CorruptFile(sqlite3_errmsg(conn));
    std::vector<Row> rows;
    int rc;
    while ((rc = sqlite3_step(st.s)) == SQLITE_ROW) {
        Row row;
        for (int c = 0; c < sqlite3_column_count(st.s); ++c) row.push_back(column_value(st.s, c));
        rows.push_back(std::move(row));
    }
    if (rc != SQLITE_DONE) throw CorruptFile(sqlite3_errmsg(conn));
    return rows;
}

std::string as_text(const Value& v) {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    return "";
}

std::string quote_ident(const std::string& name) {
    std::string out = "\"";
    for (char c : name) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

sqlite3* open_readonly(const fs::path& path) {
    if (!fs::exists(path)) throw CorruptFile("database file missing: " + path.string());
    sqlite3* conn = nullptr;
    const std::string uri = "file:" + path.string() + "?mode=ro";
    const int rc = sqlite3_open_v2(uri.c_str(), &conn, SQLITE_OPEN_READONLY | SQLITE_OPEN_URI | SQLITE_OPEN_NOMUTEX, nullptr);
    if (rc != SQLITE_OK) {
        std::string msg = conn ? sqlite3_errmsg(conn) : "cannot open";
        sqlite3_close(conn);
        throw CorruptFile(path.string() + ": " + msg);
    }
    char* err = nullptr;
    if (sqlite3_exec(conn, "SELECT count(*) FROM sqlite_master", nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unreadable";
        sqlite3_free(err);
        sqlite3_close(conn);
        throw CorruptFile(path.string() + ": " + msg);
    }
    return conn;
}

std::vector<Table> read_tables(sqlite3* conn) {
    std::vector<Table> tables;
    for (const auto& r : query_all(conn, "SELECT name FROM sqlite_master WHERE type='table' ORDER BY rowid")) {
        Table t;
        t.name = as_text(r[0]);
        for (const auto& c : query_all(conn, "PRAGMA table_info(" + quote_ident(t.name) + ")")) {
            t.columns.push_back({as_text(c[1]), as_text(c[2]), static_cast<int>(std::get<std::int64_t>(c[5]))});
        }
        auto fks = query_all(conn, "PRAGMA foreign_key_list(" + quote_ident(t.name) + ")");
        // pragma lists foreign keys newest first
        std::reverse(fks.begin(), fks.end());
        for (const auto& fk : fks) t.foreign_keys.push_back({as_text(fk[3]), as_text(fk[2]), as_text(fk[4])});
        auto rows = query_all(conn, "SELECT * FROM " + quote_ident(t.name) + " LIMIT 1");
        if (!rows.empty()) t.example_row = std::move(rows.front());
        tables.push_back(std::move(t));
    }
    return tables;
}

}  // namespace

sql::Schema DatabaseInfo::schema() const {
    sql::Schema s;
    for (const auto& t : tables) {
        sql::Schema::Table st{text::to_lower(t.name), {}};
        for (const auto& c : t.columns) st.columns.push_back(text::to_lower(c.name));
        s.tables.push_back(std::move(st));
    }
    return s;
}

std::string DatabaseInfo::render_schema() const {
    std::string out;
    for (const auto& t : tables) {
        std::vector<std::string> lines;
        for (const auto& c : t.columns) lines.push_back("    " + c.name + " " + prompt_type(c.type));
        std::vector<const Column*> pk;
        for (const auto& c : t.columns)
            if (c.pk > 0) pk.push_back(&c);
        std::sort(pk.begin(), pk.end(), [](const Column* a, const Column* b) { return a->pk < b->pk; });
        if (!pk.empty()) {
            std::string line = "    primary key (";
            for (std::size_t i = 0; i < pk.size(); ++i) line += (i ? ", " : "") + pk[i]->name;
            lines.push_back(line + ")");
        }
        for (const auto& fk : t.foreign_keys)
            lines.push_back("    foreign key (" + fk.from + ") references " + fk.table + "(" + fk.to + ")");

        out += "create table " + t.name + " (\n";
        for (std::size_t i = 0; i < lines.size(); ++i) out += lines[i] + (i + 1 < lines.size() ? ",\n" : "\n");
        out += ")\n/*\n1 example rows from table " + t.name + ":\n";
        for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "\t" : "") + t.columns[i].name;
        out += "\n";
        if (!t.example_row.empty()) {
            for (std::size_t i = 0; i < t.example_row.size(); ++i) out += (i ? "\t" : "") + plain_value(t.example_row[i]);
            out += "\n";
        }
        out += "*/\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

Handle::Handle(Handle&& other) noexcept : conn_(other.conn_), id_(std::move(other.id_)) { other.conn_ = nullptr; }

Handle& Handle::operator=(Handle&& other) noexcept {
    if (this != &other) {
        sqlite3_close(conn_);
        conn_ = other.conn_;
        id_ = std::move(other.id_);
        other.conn_ = nullptr;
    }
    return *this;
}

Handle::~Handle() { sqlite3_close(conn_); }

namespace {

struct Deadline {
    std::chrono::steady_clock::time_point at;
    bool fired = false;
};

int progress_check(void* p) {
    auto* d = static_cast<Deadline*>(p);
    if (std::chrono::steady_clock::now() >= d->at) {
        d->fired = true;
        return 1;
    }
    return 0;
}

bool only_trailing_noise(const char* tail) {
    if (!tail) return true;
    try {
        for (const auto& tok : sql::tokenize(tail))
            if (!(tok.kind == sql::TokenKind::Symbol && tok.text == ";")) return false;
    } catch (const Error&) {
        return false;
    }
    return true;
}

}  // namespace

ExecutionOutcome Handle::execute(std::string_view sql_text, const Limits& limits) const {
    const auto start = std::chrono::steady_clock::now();
    auto finish = [&](ExecutionOutcome o) {
        o.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (o.status != Status::Error) o.status = classify_outcome(o);
        return o;
    };
    if (!conn_) return finish(ExecutionOutcome::error("database handle is closed"));
    if (text::trim(sql_text).empty()) return finish(ExecutionOutcome::error("empty query"));

    Deadline deadline{start + std::chrono::milliseconds(limits.timeout_ms)};
    sqlite3_progress_handler(conn_, 1000, &progress_check, &deadline);
    struct Disarm {
        sqlite3* c;
        ~Disarm() { sqlite3_progress_handler(c, 0, nullptr, nullptr); }
    } disarm{conn_};

    const std::string owned(sql_text);
    Stmt st;
    const char* tail = nullptr;
    if (sqlite3_prepare_v2(conn_, owned.c_str(), static_cast<int>(owned.size()), &st.s, &tail) != SQLITE_OK)
        return finish(ExecutionOutcome::error(sqlite3_errmsg(conn_)));
    if (!st.s) return finish(ExecutionOutcome::error("empty query"));
    if (!only_trailing_noise(tail)) return finish(ExecutionOutcome::error("multiple statements are not supported"));
    if (!sqlite3_stmt_readonly(st.s)) return finish(ExecutionOutcome::error("write statements are rejected"));

    ExecutionOutcome out;
    int rc;
    while ((rc = sqlite3_step(st.s)) == SQLITE_ROW) {
        if (out.rows.size() >= limits.max_rows) {
            out.truncated = true;
            break;
        }
        Row row;
        const int n = sqlite3_column_count(st.s);
        row.reserve(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c) row.push_back(column_value(st.s, c));
        out.rows.push_back(std::move(row));
    }
    if (rc != SQLITE_ROW && rc != SQLITE_DONE) {
        if (deadline.fired) return finish(ExecutionOutcome::error("query timed out after " + std::to_string(limits.timeout_ms) + " ms"));
        return finish(ExecutionOutcome::error(sqlite3_errmsg(conn_)));
    }
    return finish(std::move(out));
}

// ---------------------------------------------------------------------------

std::uint64_t hash_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptFile("cannot read " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = text::fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

Registry Registry::load(const fs::path& manifest) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text::read_file(manifest));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad registry manifest " + manifest.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("registry manifest must be a JSON object of id -> path");
    Registry r;
    const auto base = manifest.parent_path();
    for (const auto& [id, rel] : j.items()) {
        if (!rel.is_string()) throw ConfigError("registry entry '" + id + "' must be a path string");
        r.add(id, base / rel.get<std::string>());
    }
    return r;
}

void Registry::add(const std::string& id, const fs::path& path) {
    sqlite3* conn = open_readonly(path);
    DatabaseInfo info;
    info.id = id;
    info.path = path;
    try {
        info.tables = read_tables(conn);
    } catch (...) {
        sqlite3_close(conn);
        throw;
    }
    sqlite3_close(conn);
    info.content_hash = hash_file(path);
    entries_[id] = std::move(info);
}

std::vector<std::string> Registry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : entries_) out.push_back(id);
    return out;
}

const DatabaseInfo& Registry::info(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw UnknownDatabase("unknown database '" + id + "'");
    return it->second;
}

bool Registry::cache_valid(const std::string& id) const {
    const auto& i = info(id);
    return fs::exists(i.path) && hash_file(i.path) == i.content_hash;
}

Handle Registry::open(const std::string& id) const {
    const auto& i = info(id);
    return Handle(open_readonly(i.path), id);
}

void create_database(const fs::path& path, std::string_view script) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::remove(path);
    sqlite3* conn = nullptr;
    if (sqlite3_open(path.string().c_str(), &conn) != SQLITE_OK) {
        sqlite3_close(conn);
        throw IoError("cannot create " + path.string());
    }
    char* err = nullptr;
    const std::string owned(script);
    if (sqlite3_exec(conn, owned.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "script failed";
        sqlite3_free(err);
        sqlite3_close(conn);
        throw IoError("building " + path.string() + ": " + msg);
    }
    sqlite3_close(conn);
}

fs::path materialize_sql_dir(const fs::path& sql_dir, const fs::path& out_dir) {
    nlohmann::json manifest = nlohmann::json::object();
    std::vector<fs::path> scripts;
    for (const auto& entry : fs::directory_iterator(sql_dir))
        if (entry.path().extension() == ".sql") scripts.push_back(entry.path());
    std::sort(scripts.begin(), scripts.end());
    for (const auto& script : scripts) {
        const auto id = script.stem().string();
        create_database(out_dir / (id + ".sqlite"), text::read_file(script));
        manifest[id] = id + ".sqlite";
    }
    const auto path = out_dir / "manifest.json";
    text::write_file(path, manifest.dump(2) + "\n");
    return path;
}

}  // namespace sqlenv::db
