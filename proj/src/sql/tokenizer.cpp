#include "sqlenv/sql/sql.hpp"
#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace sqlenv::sql {

namespace {

constexpr std::string_view kKeywords[] = {
    "SELECT", "FROM",   "WHERE",     "GROUP",   "BY",     "HAVING", "ORDER",    "LIMIT",
    "OFFSET", "ASC",    "DESC",      "AND",     "OR",     "NOT",    "IN",       "LIKE",
    "GLOB",   "BETWEEN", "IS",       "NULL",    "JOIN",   "INNER",  "LEFT",     "RIGHT",
    "FULL",   "OUTER",  "CROSS",     "NATURAL", "ON",     "USING",  "AS",       "DISTINCT",
    "ALL",    "UNION",  "INTERSECT", "EXCEPT",  "EXISTS", "CASE",   "WHEN",     "THEN",
    "ELSE",   "END",    "CAST",      "COUNT",   "SUM",    "AVG",    "MIN",      "MAX",
    "WITH",   "RECURSIVE", "VALUES",  "INSERT", "UPDATE", "DELETE", "INTO",     "SET",
    "CREATE", "DROP",   "TABLE",     "ALTER",   "PRAGMA", "ATTACH",  "VACUUM",
};

bool is_keyword(const std::string& upper) {
    return std::find(std::begin(kKeywords), std::end(kKeywords), upper) != std::end(kKeywords);
}

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }

bool plain_identifier(std::string_view s) {
    if (s.empty() || !ident_start(static_cast<unsigned char>(s[0]))) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return ident_char(static_cast<unsigned char>(c)); }) &&
           !is_keyword(text::to_upper(s));
}

}  // namespace

std::vector<Token> tokenize(std::string_view raw) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = raw.size();
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(raw[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (c == '-' && i + 1 < n && raw[i + 1] == '-') {
            while (i < n && raw[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && raw[i + 1] == '*') {
            const auto end = raw.find("*/", i + 2);
            if (end == std::string_view::npos) throw ParseError(i, "*/", "unterminated comment");
            i = end + 2;
            continue;
        }
        const std::size_t start = i;
        if (c == '\'' || c == '"') {
            ++i;
            for (;;) {
                if (i >= n) throw ParseError(start, std::string(1, static_cast<char>(c)), "unterminated string literal");
                if (static_cast<unsigned char>(raw[i]) == c) {
                    if (i + 1 < n && static_cast<unsigned char>(raw[i + 1]) == c) {
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                ++i;
            }
            out.push_back({TokenKind::String, std::string(raw.substr(start, i - start)), start});
            continue;
        }
        if (c == '`' || c == '[') {
            const char close = c == '`' ? '`' : ']';
            const auto end = raw.find(close, i + 1);
            if (end == std::string_view::npos) throw ParseError(start, std::string(1, close), "unterminated quoted identifier");
            out.push_back({TokenKind::Identifier, text::to_lower(raw.substr(i + 1, end - i - 1)), start});
            i = end + 1;
            continue;
        }
        if (std::isdigit(c) || (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(raw[i + 1])))) {
            while (i < n && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
            if (i < n && raw[i] == '.') {
                ++i;
                while (i < n && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
            }
            if (i < n && (raw[i] == 'e' || raw[i] == 'E')) {
                std::size_t j = i + 1;
                if (j < n && (raw[j] == '+' || raw[j] == '-')) ++j;
                if (j < n && std::isdigit(static_cast<unsigned char>(raw[j]))) {
                    i = j;
                    while (i < n && std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
                }
            }
            out.push_back({TokenKind::Number, std::string(raw.substr(start, i - start)), start});
            continue;
        }
        if (ident_start(c)) {
            while (i < n && ident_char(static_cast<unsigned char>(raw[i]))) ++i;
            const auto word = raw.substr(start, i - start);
            auto upper = text::to_upper(word);
            if (is_keyword(upper))
                out.push_back({TokenKind::Keyword, std::move(upper), start});
            else
                out.push_back({TokenKind::Identifier, text::to_lower(word), start});
            continue;
        }
        static constexpr std::array<std::string_view, 6> kTwo = {"!=", "<>", ">=", "<=", "==", "||"};
        if (i + 1 < n) {
            const auto two = raw.substr(i, 2);
            if (std::find(kTwo.begin(), kTwo.end(), two) != kTwo.end()) {
                out.push_back({TokenKind::Symbol, std::string(two), start});
                i += 2;
                continue;
            }
        }
        if (std::string_view("(),.;*+-/%=<>").find(static_cast<char>(c)) != std::string_view::npos) {
            out.push_back({TokenKind::Symbol, std::string(1, static_cast<char>(c)), start});
            ++i;
            continue;
        }
        throw ParseError(start, "", std::string("unexpected character '") + static_cast<char>(c) + "'");
    }
    return out;
}

NormalizedSql normalize_sql(std::string_view raw) {
    if (text::trim(raw).empty()) throw EmptyQuery("query is blank");
    auto tokens = tokenize(raw);
    while (!tokens.empty() && tokens.back().kind == TokenKind::Symbol && tokens.back().text == ";")
        tokens.pop_back();
    if (tokens.empty()) throw EmptyQuery("query has no tokens");

    std::string out;
    bool glue_next = true;
    for (const auto& tok : tokens) {
        const bool dot = tok.kind == TokenKind::Symbol && tok.text == ".";
        if (!glue_next && !dot) out.push_back(' ');
        if (tok.kind == TokenKind::Identifier && !plain_identifier(tok.text))
            out += '`' + tok.text + '`';
        else
            out += tok.text;
        glue_next = dot;
    }
    return {std::move(out), std::string(raw)};
}

bool exact_match(const NormalizedSql& pred, const NormalizedSql& gold) { return pred.text == gold.text; }

}  // namespace sqlenv::sql
