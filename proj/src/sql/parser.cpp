#include "sqlenv/sql/sql.hpp"
#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>

namespace sqlenv::sql {

namespace {

struct Query;

struct Node {
    Node(std::string k = "none", std::string x = "", std::string y = "")
        : kind(std::move(k)), a(std::move(x)), b(std::move(y)) {}

    std::string kind;  // col num str null star func unary bin cmp between in exists subq and or not case cast none
    std::string a;     // qualifier / literal / function name / operator / cast type
    std::string b;     // column name
    bool neg = false;  // NOT flag, DISTINCT inside aggregates
    std::vector<Node> kids;
    std::shared_ptr<Query> query;
};

struct FromItem {
    std::string table;
    std::shared_ptr<Query> sub;
    std::string alias;
};

struct Query {
    bool distinct = false;
    std::vector<Node> select;
    std::vector<FromItem> from;
    std::vector<Node> on;
    std::vector<std::vector<std::string>> using_cols;
    std::optional<Node> where;
    std::vector<Node> group;
    std::optional<Node> having;
    std::vector<std::pair<Node, std::string>> order;
    std::optional<Node> limit;
    std::optional<Node> offset;
    std::string set_op;
    std::shared_ptr<Query> set_rhs;
};

bool is_aggregate(const std::string& kw) {
    return kw == "COUNT" || kw == "SUM" || kw == "AVG" || kw == "MIN" || kw == "MAX";
}

class Parser {
public:
    Parser(std::vector<Token> tokens, std::size_t end_offset)
        : toks_(std::move(tokens)), end_offset_(end_offset) {}

    std::shared_ptr<Query> parse_statement() {
        if (peek_kw("WITH")) fail("SELECT", "common table expressions are not supported");
        if (!peek_kw("SELECT") && !peek_sym("(")) fail("SELECT", "only SELECT statements are supported");
        auto q = parse_query();
        while (accept_sym(";")) {
        }
        if (pos_ < toks_.size()) fail("end of statement", "unexpected trailing input");
        return q;
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::size_t end_offset_;

    [[noreturn]] void fail(const std::string& expected, const std::string& message) const {
        const std::size_t off = pos_ < toks_.size() ? toks_[pos_].offset : end_offset_;
        throw ParseError(off, expected, message);
    }

    const Token* cur() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }
    const Token* ahead(std::size_t k) const { return pos_ + k < toks_.size() ? &toks_[pos_ + k] : nullptr; }

    bool peek_kw(std::string_view kw, std::size_t k = 0) const {
        auto t = ahead(k);
        return t && t->kind == TokenKind::Keyword && t->text == kw;
    }
    bool peek_sym(std::string_view s, std::size_t k = 0) const {
        auto t = ahead(k);
        return t && t->kind == TokenKind::Symbol && t->text == s;
    }
    bool accept_kw(std::string_view kw) {
        if (!peek_kw(kw)) return false;
        ++pos_;
        return true;
    }
    bool accept_sym(std::string_view s) {
        if (!peek_sym(s)) return false;
        ++pos_;
        return true;
    }
    void expect_kw(std::string_view kw) {
        if (!accept_kw(kw)) fail(std::string(kw), "missing keyword");
    }
    void expect_sym(std::string_view s) {
        if (!accept_sym(s)) fail("'" + std::string(s) + "'", "missing symbol");
    }
    std::string expect_ident(const char* what) {
        auto t = cur();
        if (!t || t->kind != TokenKind::Identifier) fail(what, "expected identifier");
        ++pos_;
        return t->text;
    }

    bool starts_query(std::size_t k = 0) const {
        std::size_t j = k;
        while (peek_sym("(", j)) ++j;
        return peek_kw("SELECT", j);
    }

    std::shared_ptr<Query> parse_query() {
        std::shared_ptr<Query> q;
        if (peek_sym("(") && starts_query(1)) {
            ++pos_;
            q = parse_query();
            expect_sym(")");
        } else {
            q = parse_core();
        }
        for (const char* op : {"UNION", "INTERSECT", "EXCEPT"}) {
            if (accept_kw(op)) {
                accept_kw("ALL");
                q->set_op = text::to_lower(op);
                q->set_rhs = parse_query();
                break;
            }
        }
        return q;
    }

    std::shared_ptr<Query> parse_core() {
        auto q = std::make_shared<Query>();
        expect_kw("SELECT");
        if (accept_kw("DISTINCT")) q->distinct = true;
        else accept_kw("ALL");
        do {
            q->select.push_back(parse_expr());
            if (accept_kw("AS")) {
                auto t = cur();
                if (!t || (t->kind != TokenKind::Identifier && t->kind != TokenKind::String)) fail("alias", "bad column alias");
                ++pos_;
            } else if (cur() && cur()->kind == TokenKind::Identifier) {
                ++pos_;
            }
        } while (accept_sym(","));

        if (accept_kw("FROM")) parse_from(*q);
        if (accept_kw("WHERE")) q->where = parse_expr();
        if (accept_kw("GROUP")) {
            expect_kw("BY");
            do q->group.push_back(parse_expr());
            while (accept_sym(","));
        }
        if (accept_kw("HAVING")) q->having = parse_expr();
        if (accept_kw("ORDER")) {
            expect_kw("BY");
            do {
                auto e = parse_expr();
                std::string dir = "asc";
                if (accept_kw("DESC")) dir = "desc";
                else accept_kw("ASC");
                q->order.emplace_back(std::move(e), dir);
            } while (accept_sym(","));
        }
        if (accept_kw("LIMIT")) {
            q->limit = parse_expr();
            if (accept_kw("OFFSET")) {
                q->offset = parse_expr();
            } else if (accept_sym(",")) {
                q->offset = std::move(q->limit);
                q->limit = parse_expr();
            }
        }
        return q;
    }

    FromItem parse_from_item() {
        FromItem item;
        if (accept_sym("(")) {
            if (!starts_query()) fail("SELECT", "expected subquery in FROM");
            item.sub = parse_query();
            expect_sym(")");
        } else {
            item.table = expect_ident("table name");
        }
        if (accept_kw("AS")) {
            item.alias = expect_ident("alias");
        } else if (cur() && cur()->kind == TokenKind::Identifier) {
            item.alias = cur()->text;
            ++pos_;
        }
        return item;
    }

    bool accept_join() {
        const std::size_t save = pos_;
        accept_kw("NATURAL");
        if (accept_kw("LEFT") || accept_kw("RIGHT") || accept_kw("FULL")) accept_kw("OUTER");
        else if (!accept_kw("INNER")) accept_kw("CROSS");
        if (accept_kw("JOIN")) return true;
        pos_ = save;
        return false;
    }

    void parse_from(Query& q) {
        q.from.push_back(parse_from_item());
        for (;;) {
            if (accept_sym(",")) {
                q.from.push_back(parse_from_item());
            } else if (accept_join()) {
                q.from.push_back(parse_from_item());
            } else {
                break;
            }
            if (accept_kw("ON")) {
                q.on.push_back(parse_expr());
            } else if (accept_kw("USING")) {
                expect_sym("(");
                std::vector<std::string> cols;
                do cols.push_back(expect_ident("column"));
                while (accept_sym(","));
                expect_sym(")");
                q.using_cols.push_back(std::move(cols));
            }
        }
    }

    Node parse_expr() { return parse_or(); }

    Node parse_or() {
        Node left = parse_and();
        if (!peek_kw("OR")) return left;
        Node n{"or"};
        n.kids.push_back(std::move(left));
        while (accept_kw("OR")) n.kids.push_back(parse_and());
        return n;
    }

    Node parse_and() {
        Node left = parse_not();
        if (!peek_kw("AND")) return left;
        Node n{"and"};
        n.kids.push_back(std::move(left));
        while (accept_kw("AND")) n.kids.push_back(parse_not());
        return n;
    }

    Node parse_not() {
        if (peek_kw("NOT") && !peek_kw("EXISTS", 1)) {
            ++pos_;
            Node n{"not"};
            n.kids.push_back(parse_not());
            return n;
        }
        return parse_comparison();
    }

    Node parse_comparison() {
        if (peek_kw("NOT") && peek_kw("EXISTS", 1)) {
            pos_ += 2;
            Node n = parse_exists_body();
            n.neg = true;
            return n;
        }
        Node left = parse_additive();
        for (;;) {
            auto t = cur();
            if (!t) return left;
            if (t->kind == TokenKind::Symbol &&
                (t->text == "=" || t->text == "==" || t->text == "!=" || t->text == "<>" || t->text == "<" ||
                 t->text == ">" || t->text == "<=" || t->text == ">=")) {
                ++pos_;
                std::string op = t->text == "==" ? "=" : t->text == "<>" ? "!=" : t->text;
                Node n{"cmp", op};
                n.kids.push_back(std::move(left));
                n.kids.push_back(parse_additive());
                left = std::move(n);
                continue;
            }
            if (peek_kw("IS")) {
                ++pos_;
                Node n{"cmp", "is"};
                n.neg = accept_kw("NOT");
                n.kids.push_back(std::move(left));
                n.kids.push_back(parse_additive());
                left = std::move(n);
                continue;
            }
            bool neg = false;
            if (peek_kw("NOT") && (peek_kw("IN", 1) || peek_kw("LIKE", 1) || peek_kw("GLOB", 1) || peek_kw("BETWEEN", 1))) {
                ++pos_;
                neg = true;
            }
            if (accept_kw("IN")) {
                Node n{"in"};
                n.neg = neg;
                n.kids.push_back(std::move(left));
                expect_sym("(");
                if (starts_query()) {
                    n.query = parse_query();
                } else if (!peek_sym(")")) {
                    do n.kids.push_back(parse_additive());
                    while (accept_sym(","));
                }
                expect_sym(")");
                left = std::move(n);
                continue;
            }
            if (accept_kw("LIKE") || accept_kw("GLOB")) {
                Node n{"cmp", text::to_lower(toks_[pos_ - 1].text)};
                n.neg = neg;
                n.kids.push_back(std::move(left));
                n.kids.push_back(parse_additive());
                left = std::move(n);
                continue;
            }
            if (accept_kw("BETWEEN")) {
                Node n{"between"};
                n.neg = neg;
                n.kids.push_back(std::move(left));
                n.kids.push_back(parse_additive());
                expect_kw("AND");
                n.kids.push_back(parse_additive());
                left = std::move(n);
                continue;
            }
            if (neg) fail("IN, LIKE or BETWEEN", "dangling NOT");
            return left;
        }
    }

    Node parse_additive() {
        Node left = parse_multiplicative();
        while (peek_sym("+") || peek_sym("-") || peek_sym("||")) {
            Node n{"bin", toks_[pos_++].text};
            n.kids.push_back(std::move(left));
            n.kids.push_back(parse_multiplicative());
            left = std::move(n);
        }
        return left;
    }

    Node parse_multiplicative() {
        Node left = parse_unary();
        while (peek_sym("*") || peek_sym("/") || peek_sym("%")) {
            Node n{"bin", toks_[pos_++].text};
            n.kids.push_back(std::move(left));
            n.kids.push_back(parse_unary());
            left = std::move(n);
        }
        return left;
    }

    Node parse_unary() {
        if (peek_sym("-") || peek_sym("+")) {
            const std::string op = toks_[pos_++].text;
            Node inner = parse_unary();
            if (inner.kind == "num") {
                if (op == "-") inner.a = inner.a.front() == '-' ? inner.a.substr(1) : "-" + inner.a;
                return inner;
            }
            Node n{"unary", op};
            n.kids.push_back(std::move(inner));
            return n;
        }
        return parse_primary();
    }

    Node parse_exists_body() {
        Node n{"exists"};
        expect_sym("(");
        if (!starts_query()) fail("SELECT", "expected subquery after EXISTS");
        n.query = parse_query();
        expect_sym(")");
        return n;
    }

    Node parse_primary() {
        auto t = cur();
        if (!t) fail("expression", "unexpected end of query");
        switch (t->kind) {
            case TokenKind::Number: {
                ++pos_;
                return Node{"num", t->text};
            }
            case TokenKind::String: {
                ++pos_;
                return Node{"str", t->text};
            }
            case TokenKind::Symbol: {
                if (t->text == "*") {
                    ++pos_;
                    return Node{"col", "", "*"};
                }
                if (t->text == "(") {
                    ++pos_;
                    if (starts_query()) {
                        Node n{"subq"};
                        n.query = parse_query();
                        expect_sym(")");
                        return n;
                    }
                    Node inner = parse_expr();
                    expect_sym(")");
                    return inner;
                }
                fail("expression", "unexpected symbol '" + t->text + "'");
            }
            case TokenKind::Keyword: {
                if (t->text == "NULL") {
                    ++pos_;
                    return Node{"null"};
                }
                if (t->text == "EXISTS") {
                    ++pos_;
                    return parse_exists_body();
                }
                if (is_aggregate(t->text)) {
                    ++pos_;
                    return parse_call(text::to_lower(t->text));
                }
                if (t->text == "CAST") {
                    ++pos_;
                    expect_sym("(");
                    Node n{"cast"};
                    n.kids.push_back(parse_expr());
                    expect_kw("AS");
                    n.a = expect_ident("type name");
                    while (accept_sym("(")) {
                        while (!accept_sym(")")) {
                            if (!cur()) fail("')'", "unterminated type");
                            ++pos_;
                        }
                    }
                    expect_sym(")");
                    return n;
                }
                if (t->text == "CASE") {
                    ++pos_;
                    return parse_case();
                }
                if ((t->text == "LEFT" || t->text == "RIGHT") && peek_sym("(", 1)) {
                    ++pos_;
                    return parse_call(text::to_lower(t->text));
                }
                if (t->text == "WITH") fail("expression", "common table expressions are not supported");
                fail("expression", "unexpected keyword " + t->text);
            }
            case TokenKind::Identifier: {
                ++pos_;
                if (peek_sym("(")) return parse_call(t->text);
                if (accept_sym(".")) {
                    if (accept_sym("*")) return Node{"col", t->text, "*"};
                    return Node{"col", t->text, expect_ident("column name")};
                }
                return Node{"col", "", t->text};
            }
        }
        fail("expression", "unexpected token");
    }

    Node parse_call(std::string name) {
        Node n{"func", std::move(name)};
        expect_sym("(");
        if (accept_sym(")")) return n;
        if (accept_kw("DISTINCT")) n.neg = true;
        do n.kids.push_back(parse_expr());
        while (accept_sym(","));
        expect_sym(")");
        return n;
    }

    Node parse_case() {
        Node n{"case"};
        if (!peek_kw("WHEN")) n.kids.push_back(parse_expr());
        else n.kids.push_back(Node{"none"});
        if (!peek_kw("WHEN")) fail("WHEN", "CASE without WHEN");
        while (accept_kw("WHEN")) {
            n.kids.push_back(parse_expr());
            expect_kw("THEN");
            n.kids.push_back(parse_expr());
        }
        if (accept_kw("ELSE")) n.kids.push_back(parse_expr());
        else n.kids.push_back(Node{"none"});
        expect_kw("END");
        return n;
    }
};

// ---------------------------------------------------------------------------
// AST -> clause units

std::string canonical_number(const std::string& lit) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(lit.data(), lit.data() + lit.size(), v);
    if (ec != std::errc() || ptr != lit.data() + lit.size()) return lit;
    if (std::floor(v) == v && std::fabs(v) < 1e15) {
        const auto iv = static_cast<long long>(v);
        return std::to_string(iv);
    }
    return text::python_float_repr(v);
}

void insert_unit(std::vector<json>& units, json unit) {
    units.push_back(std::move(unit));
}

void canonicalize(std::vector<json>& units) {
    std::vector<std::pair<std::string, json>> keyed;
    keyed.reserve(units.size());
    for (auto& u : units) keyed.emplace_back(u.dump(), std::move(u));
    std::sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    keyed.erase(std::unique(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) { return x.first == y.first; }),
                keyed.end());
    units.clear();
    for (auto& [_, u] : keyed) units.push_back(std::move(u));
}

struct Scope {
    const Scope* parent = nullptr;
    std::map<std::string, std::string> aliases;  // alias -> table (or alias itself for derived tables)
    std::vector<std::string> tables;             // base tables in FROM order
    bool single = false;                         // exactly one base table, no derived tables
};

class Builder {
public:
    explicit Builder(const Schema* schema) : schema_(schema) {}

    SqlClauses build(const Query& q, const Scope* parent) {
        SqlClauses out;
        Scope scope;
        scope.parent = parent;
        for (const auto& item : q.from) {
            if (item.sub) {
                if (!item.alias.empty()) scope.aliases[item.alias] = item.alias;
            } else {
                scope.tables.push_back(item.table);
                scope.aliases[item.table] = item.table;
                if (!item.alias.empty()) scope.aliases[item.alias] = item.table;
            }
        }
        scope.single = q.from.size() == 1 && !q.from.front().sub;

        for (const auto& e : q.select) {
            std::string unit = expr(e, scope, out);
            if (q.distinct) unit = "distinct " + unit;
            insert_unit(out.select, unit);
        }

        if (q.from.size() >= 2) {
            std::map<std::string, int> seen;
            for (const auto& item : q.from) {
                if (item.sub) {
                    out.nested = true;
                    insert_unit(out.join, json{{"subquery", build(*item.sub, &scope).to_json()}});
                    continue;
                }
                json unit{{"table", item.table}};
                if (int n = ++seen[item.table]; n > 1) unit["n"] = n;
                insert_unit(out.join, std::move(unit));
            }
            for (const auto& cond : q.on) {
                std::vector<json> parts;
                conjuncts(cond, scope, out, parts);
                for (auto& p : parts) insert_unit(out.join, json{{"on", std::move(p)}});
            }
            for (const auto& cols : q.using_cols) insert_unit(out.join, json{{"using", cols}});
        } else if (q.from.size() == 1 && q.from.front().sub) {
            out.nested = true;
            insert_unit(out.join, json{{"subquery", build(*q.from.front().sub, &scope).to_json()}});
        }

        if (q.where) conjuncts(*q.where, scope, out, out.where);
        for (const auto& g : q.group) insert_unit(out.group, expr(g, scope, out));
        if (q.having) conjuncts(*q.having, scope, out, out.having);
        for (const auto& [e, dir] : q.order) insert_unit(out.order, json{{"expr", expr(e, scope, out)}, {"dir", dir}});
        if (q.limit) {
            std::string lim = expr(*q.limit, scope, out);
            if (q.offset) lim += " offset " + expr(*q.offset, scope, out);
            out.limit = lim;
        }
        if (q.set_rhs) {
            out.set_ops = json{{"op", q.set_op}, {"rhs", build(*q.set_rhs, parent).to_json()}};
        }

        canonicalize(out.select);
        canonicalize(out.where);
        canonicalize(out.join);
        canonicalize(out.group);
        canonicalize(out.having);
        canonicalize(out.order);
        return out;
    }

private:
    const Schema* schema_;

    static bool is_bin_like(const Node& n) { return n.kind == "bin" || n.kind == "cmp" || n.kind == "and" || n.kind == "or"; }

    std::string resolve_table(const std::string& qualifier, const Scope& scope) const {
        for (const Scope* s = &scope; s; s = s->parent) {
            auto it = s->aliases.find(qualifier);
            if (it != s->aliases.end()) return it->second;
        }
        return qualifier;
    }

    std::string column(const Node& n, const Scope& scope) const {
        if (n.a.empty()) {
            if (n.b == "*" || !schema_) return n.b;
            for (const Scope* s = &scope; s; s = s->parent)
                for (const auto& t : s->tables)
                    if (const auto* table = schema_->find(t))
                        if (std::find(table->columns.begin(), table->columns.end(), n.b) != table->columns.end())
                            return t + "." + n.b;
            return n.b;
        }
        const std::string table = resolve_table(n.a, scope);
        if (!schema_ && scope.single && scope.aliases.count(n.a)) return n.b;
        return table + "." + n.b;
    }

    std::string expr(const Node& n, const Scope& scope, SqlClauses& out) {
        if (n.kind == "col") return column(n, scope);
        if (n.kind == "num") return canonical_number(n.a);
        if (n.kind == "str") return n.a;
        if (n.kind == "null") return "null";
        if (n.kind == "none") return "";
        if (n.kind == "func") {
            std::string s = n.a + "(";
            if (n.neg) s += "distinct ";
            for (std::size_t i = 0; i < n.kids.size(); ++i) {
                if (i) s += ", ";
                s += expr(n.kids[i], scope, out);
            }
            return s + ")";
        }
        if (n.kind == "unary") return n.a + wrap(n.kids[0], scope, out);
        if (n.kind == "bin" || n.kind == "cmp") {
            std::string op = n.a;
            if (n.kind == "cmp" && n.neg) op = (op == "is") ? "is not" : "not " + op;
            return wrap(n.kids[0], scope, out) + " " + op + " " + wrap(n.kids[1], scope, out);
        }
        if (n.kind == "and" || n.kind == "or") {
            std::string s;
            for (std::size_t i = 0; i < n.kids.size(); ++i) {
                if (i) s += " " + n.kind + " ";
                s += wrap(n.kids[i], scope, out);
            }
            return s;
        }
        if (n.kind == "not") return "not " + wrap(n.kids[0], scope, out);
        if (n.kind == "between")
            return wrap(n.kids[0], scope, out) + (n.neg ? " not between " : " between ") + wrap(n.kids[1], scope, out) +
                   " and " + wrap(n.kids[2], scope, out);
        if (n.kind == "in") {
            std::string s = wrap(n.kids[0], scope, out) + (n.neg ? " not in " : " in ");
            if (n.query) return s + subquery_text(*n.query, scope, out);
            s += "(";
            for (std::size_t i = 1; i < n.kids.size(); ++i) {
                if (i > 1) s += ", ";
                s += expr(n.kids[i], scope, out);
            }
            return s + ")";
        }
        if (n.kind == "exists") return std::string(n.neg ? "not " : "") + "exists " + subquery_text(*n.query, scope, out);
        if (n.kind == "subq") return subquery_text(*n.query, scope, out);
        if (n.kind == "cast") return "cast(" + expr(n.kids[0], scope, out) + " as " + n.a + ")";
        if (n.kind == "case") {
            std::string s = "case";
            if (n.kids[0].kind != "none") s += " " + expr(n.kids[0], scope, out);
            for (std::size_t i = 1; i + 1 < n.kids.size(); i += 2)
                s += " when " + expr(n.kids[i], scope, out) + " then " + expr(n.kids[i + 1], scope, out);
            if (n.kids.back().kind != "none") s += " else " + expr(n.kids.back(), scope, out);
            return s + " end";
        }
        return n.kind;
    }

    std::string wrap(const Node& n, const Scope& scope, SqlClauses& out) {
        std::string s = expr(n, scope, out);
        return is_bin_like(n) || n.kind == "between" || n.kind == "in" || n.kind == "not" ? "(" + s + ")" : s;
    }

    std::string subquery_text(const Query& q, const Scope& scope, SqlClauses& out) {
        out.nested = true;
        return "(" + build(q, &scope).to_json().dump() + ")";
    }

    json value(const Node& n, const Scope& scope, SqlClauses& out) {
        if (n.kind == "subq") {
            out.nested = true;
            return json{{"subquery", build(*n.query, &scope).to_json()}};
        }
        return expr(n, scope, out);
    }

    static bool is_literal(const json& v) {
        const auto& s = v.get_ref<const std::string&>();
        if (s.empty() || s == "null") return true;
        const char c = s[0] == '-' && s.size() > 1 ? s[1] : s[0];
        return c == '\'' || c == '"' || std::isdigit(static_cast<unsigned char>(c));
    }

    json predicate(const Node& n, const Scope& scope, SqlClauses& out) {
        if (n.kind == "and" || n.kind == "or") {
            std::vector<json> kids;
            for (const auto& k : n.kids) {
                json pj = predicate(k, scope, out);
                // Flatten same-kind nesting: (a or b) or c == a or b or c
                if (pj.is_object() && pj.contains(n.kind))
                    for (auto& x : pj[n.kind]) kids.push_back(x);
                else
                    kids.push_back(std::move(pj));
            }
            canonicalize(kids);
            if (kids.size() == 1) return kids.front();
            return json{{n.kind, kids}};
        }
        if (n.kind == "not") {
            json inner = predicate(n.kids[0], scope, out);
            if (!inner.contains("op")) return json{{"negate", std::move(inner)}};
            if (inner.value("not", false)) inner.erase("not");
            else inner["not"] = true;
            return inner;
        }
        json atom = json::object();
        if (n.kind == "cmp") {
            json lhs = value(n.kids[0], scope, out);
            json rhs = value(n.kids[1], scope, out);
            if ((n.a == "=" || n.a == "!=") && lhs.is_string() && rhs.is_string() &&
                std::make_pair(is_literal(rhs), rhs.get<std::string>()) < std::make_pair(is_literal(lhs), lhs.get<std::string>()))
                std::swap(lhs, rhs);
            atom = {{"lhs", lhs}, {"op", n.a}, {"rhs", rhs}};
        } else if (n.kind == "between") {
            atom = {{"lhs", value(n.kids[0], scope, out)},
                    {"op", "between"},
                    {"rhs", value(n.kids[1], scope, out)},
                    {"rhs2", value(n.kids[2], scope, out)}};
        } else if (n.kind == "in") {
            json rhs;
            if (n.query) {
                out.nested = true;
                rhs = json{{"subquery", build(*n.query, &scope).to_json()}};
            } else {
                std::vector<json> items;
                for (std::size_t i = 1; i < n.kids.size(); ++i) items.push_back(expr(n.kids[i], scope, out));
                canonicalize(items);
                rhs = items;
            }
            atom = {{"lhs", value(n.kids[0], scope, out)}, {"op", "in"}, {"rhs", rhs}};
        } else if (n.kind == "exists") {
            out.nested = true;
            atom = {{"lhs", ""}, {"op", "exists"}, {"rhs", json{{"subquery", build(*n.query, &scope).to_json()}}}};
        } else {
            atom = {{"lhs", value(n, scope, out)}, {"op", "truthy"}, {"rhs", ""}};
        }
        if (n.neg && n.kind != "func") atom["not"] = true;
        return atom;
    }

    void conjuncts(const Node& n, const Scope& scope, SqlClauses& out, std::vector<json>& units) {
        if (n.kind == "and") {
            for (const auto& k : n.kids) conjuncts(k, scope, out, units);
            return;
        }
        insert_unit(units, predicate(n, scope, out));
    }
};

}  // namespace

const Schema::Table* Schema::find(std::string_view table) const {
    for (const auto& t : tables)
        if (t.name == table) return &t;
    return nullptr;
}

SqlClauses decompose_clauses(const NormalizedSql& sql, const Schema* schema) {
    auto tokens = tokenize(sql.text);
    if (tokens.empty()) throw EmptyQuery("query has no tokens");
    Parser parser(std::move(tokens), sql.text.size());
    auto query = parser.parse_statement();
    Builder builder(schema);
    return builder.build(*query, nullptr);
}

}  // namespace sqlenv::sql
