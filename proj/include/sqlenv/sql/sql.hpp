#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sqlenv::sql {

using nlohmann::json;

enum class TokenKind { Keyword, Identifier, Number, String, Symbol };

struct Token {
    TokenKind kind;
    std::string text;  ///< canonical spelling (keywords upper, identifiers lower)
    std::size_t offset;
};

/// Splits `raw` into tokens. Throws ParseError on an unterminated literal
/// or a character outside the SQL lexicon.
std::vector<Token> tokenize(std::string_view raw);

struct NormalizedSql {
    std::string text;
    std::string original;
};

NormalizedSql normalize_sql(std::string_view raw);

/// Table -> columns, all lower-case.
struct Schema {
    struct Table {
        std::string name;
        std::vector<std::string> columns;
    };
    std::vector<Table> tables;

    const Table* find(std::string_view table) const;
};

/// Clause-level decomposition. Every unit is a JSON value; each vector is
/// kept sorted by serialized form and free of duplicates, so two
/// decompositions compare equal exactly when their units do.
struct SqlClauses {
    std::vector<json> select;
    std::vector<json> where;
    std::vector<json> join;
    std::vector<json> group;
    std::vector<json> having;
    std::vector<json> order;
    std::optional<std::string> limit;
    json set_ops;  ///< null or {"op": "union"|"intersect"|"except", "rhs": clauses}
    bool nested = false;

    json to_json() const;
    static SqlClauses from_json(const json& j);

    friend bool operator==(const SqlClauses& a, const SqlClauses& b) {
        return a.to_json() == b.to_json();
    }
};

SqlClauses decompose_clauses(const NormalizedSql& sql, const Schema* schema = nullptr);
inline SqlClauses decompose_clauses(std::string_view raw, const Schema* schema = nullptr) {
    return decompose_clauses(normalize_sql(raw), schema);
}

bool exact_match(const NormalizedSql& pred, const NormalizedSql& gold);

enum class JoinMode { WithConditions, TablesOnly };

/// Set F1 of two unit lists; 1 when both are empty, 0 when exactly one is.
double set_f1(const std::vector<json>& pred, const std::vector<json>& gold);

/// Per-clause F1 for SELECT, WHERE, JOIN, GROUP (with HAVING), ORDER (with LIMIT).
std::vector<double> clause_f1_parts(const SqlClauses& pred, const SqlClauses& gold,
                                    JoinMode mode = JoinMode::WithConditions);
double clause_f1(const SqlClauses& pred, const SqlClauses& gold,
                 JoinMode mode = JoinMode::WithConditions);

enum class Hardness { Easy = 0, Medium = 1, Hard = 2, Extra = 3 };

std::string to_string(Hardness h);
Hardness hardness_from_string(std::string_view s);

struct HardnessCounts {
    int component1 = 0;
    int component2 = 0;
    int others = 0;
};

HardnessCounts hardness_counts(const SqlClauses& clauses);
Hardness classify_hardness(const SqlClauses& clauses);

/// True when the outermost query has an ORDER BY.
inline bool has_order_by(const SqlClauses& c) { return !c.order.empty(); }

}  // namespace sqlenv::sql
