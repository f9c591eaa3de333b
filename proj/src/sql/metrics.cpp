#include "sqlenv/sql/sql.hpp"
#include "sqlenv/util/error.hpp"

#include <set>

namespace sqlenv::sql {

json SqlClauses::to_json() const {
    json j;
    j["select"] = select;
    j["where"] = where;
    j["join"] = join;
    j["group"] = group;
    j["having"] = having;
    j["order"] = order;
    j["limit"] = limit ? json(*limit) : json(nullptr);
    j["set_ops"] = set_ops;
    j["nested"] = nested;
    return j;
}

SqlClauses SqlClauses::from_json(const json& j) {
    SqlClauses c;
    try {
        c.select = j.at("select").get<std::vector<json>>();
        c.where = j.at("where").get<std::vector<json>>();
        c.join = j.at("join").get<std::vector<json>>();
        c.group = j.at("group").get<std::vector<json>>();
        c.having = j.at("having").get<std::vector<json>>();
        c.order = j.at("order").get<std::vector<json>>();
        if (!j.at("limit").is_null()) c.limit = j.at("limit").get<std::string>();
        c.set_ops = j.at("set_ops");
        c.nested = j.at("nested").get<bool>();
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad clause JSON: ") + e.what());
    }
    return c;
}

double set_f1(const std::vector<json>& pred, const std::vector<json>& gold) {
    std::set<std::string> p, g;
    for (const auto& u : pred) p.insert(u.dump());
    for (const auto& u : gold) g.insert(u.dump());
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::size_t common = 0;
    for (const auto& u : p) common += g.count(u);
    return 2.0 * static_cast<double>(common) / static_cast<double>(p.size() + g.size());
}

namespace {

std::vector<json> join_units(const SqlClauses& c, JoinMode mode) {
    if (mode == JoinMode::WithConditions) return c.join;
    std::vector<json> out;
    for (const auto& u : c.join)
        if (!u.contains("on") && !u.contains("using")) out.push_back(u);
    return out;
}

std::vector<json> group_units(const SqlClauses& c) {
    std::vector<json> out;
    for (const auto& u : c.group) out.push_back(json{{"group", u}});
    for (const auto& u : c.having) out.push_back(json{{"having", u}});
    return out;
}

std::vector<json> order_units(const SqlClauses& c) {
    std::vector<json> out;
    for (const auto& u : c.order) out.push_back(json{{"order", u}});
    if (c.limit) out.push_back(json{{"limit", *c.limit}});
    return out;
}

}  // namespace

std::vector<double> clause_f1_parts(const SqlClauses& pred, const SqlClauses& gold, JoinMode mode) {
    return {
        set_f1(pred.select, gold.select),
        set_f1(pred.where, gold.where),
        set_f1(join_units(pred, mode), join_units(gold, mode)),
        set_f1(group_units(pred), group_units(gold)),
        set_f1(order_units(pred), order_units(gold)),
    };
}

double clause_f1(const SqlClauses& pred, const SqlClauses& gold, JoinMode mode) {
    double sum = 0.0;
    for (double v : clause_f1_parts(pred, gold, mode)) sum += v;
    return sum / 5.0;
}

std::string to_string(Hardness h) {
    switch (h) {
        case Hardness::Easy: return "easy";
        case Hardness::Medium: return "medium";
        case Hardness::Hard: return "hard";
        case Hardness::Extra: return "extra";
    }
    return "extra";
}

Hardness hardness_from_string(std::string_view s) {
    if (s == "easy") return Hardness::Easy;
    if (s == "medium") return Hardness::Medium;
    if (s == "hard") return Hardness::Hard;
    if (s == "extra") return Hardness::Extra;
    throw ConfigError("unknown hardness '" + std::string(s) + "'");
}

namespace {

struct PredStats {
    int atoms = 0;
    int negated = 0;
    int likes = 0;
    int ors = 0;
    int nested = 0;
};

bool is_subquery(const json& v) { return v.is_object() && v.contains("subquery"); }

void walk(const json& p, PredStats& s) {
    if (p.contains("and")) {
        for (const auto& k : p["and"]) walk(k, s);
        return;
    }
    if (p.contains("or")) {
        s.ors += static_cast<int>(p["or"].size()) - 1;
        for (const auto& k : p["or"]) walk(k, s);
        return;
    }
    if (p.contains("negate")) {
        walk(p["negate"], s);
        return;
    }
    ++s.atoms;
    if (p.value("not", false)) ++s.negated;
    if (p.value("op", "") == "like") ++s.likes;
    if (is_subquery(p.value("lhs", json())) || is_subquery(p.value("rhs", json())) || is_subquery(p.value("rhs2", json())))
        ++s.nested;
}

PredStats stats(const std::vector<json>& units, const char* wrapper = nullptr) {
    PredStats s;
    for (const auto& u : units) {
        if (wrapper) {
            if (u.contains(wrapper)) walk(u[wrapper], s);
        } else {
            walk(u, s);
        }
    }
    return s;
}

bool has_agg(std::string unit) {
    if (unit.rfind("distinct ", 0) == 0) unit.erase(0, 9);
    for (const char* f : {"count(", "sum(", "avg(", "min(", "max("})
        if (unit.rfind(f, 0) == 0) return true;
    return false;
}

}  // namespace

// Component counting follows the Spider evaluator, including its quirks:
// WHERE conditions count towards aggregates when negated, and every HAVING
// connector counts as an aggregate.
HardnessCounts hardness_counts(const SqlClauses& c) {
    const PredStats on = stats(c.join, "on");
    const PredStats where = stats(c.where);
    const PredStats having = stats(c.having);

    int tables = 0;
    for (const auto& u : c.join)
        if (u.contains("table") || u.contains("subquery")) ++tables;
    if (tables == 0) tables = 1;

    HardnessCounts h;
    h.component1 = (where.atoms > 0) + !c.group.empty() + !c.order.empty() + c.limit.has_value() + (tables - 1) +
                   on.ors + where.ors + having.ors + on.likes + where.likes + having.likes;
    h.component2 = on.nested + where.nested + having.nested + (c.set_ops.is_null() ? 0 : 1);

    int agg = 0;
    for (const auto& u : c.select)
        if (u.is_string() && has_agg(u.get<std::string>())) ++agg;
    agg += where.negated;
    for (const auto& u : c.group)
        if (u.is_string() && has_agg(u.get<std::string>())) ++agg;
    for (const auto& u : c.order)
        if (has_agg(u.value("expr", ""))) ++agg;
    agg += having.negated + std::max(having.atoms - 1, 0);

    h.others = (agg > 1) + (c.select.size() > 1) + (where.atoms > 1) + (c.group.size() > 1);
    return h;
}

Hardness classify_hardness(const SqlClauses& c) {
    const auto [c1, c2, others] = hardness_counts(c);
    if (c1 <= 1 && others == 0 && c2 == 0) return Hardness::Easy;
    if ((others <= 2 && c1 <= 1 && c2 == 0) || (c1 <= 2 && others < 2 && c2 == 0)) return Hardness::Medium;
    if ((others > 2 && c1 <= 2 && c2 == 0) || (c1 > 2 && c1 <= 3 && others <= 2 && c2 == 0) ||
        (c1 <= 1 && others == 0 && c2 <= 1))
        return Hardness::Hard;
    return Hardness::Extra;
}

}  // namespace sqlenv::sql
