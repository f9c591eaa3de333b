#include "support.hpp"

#include "sqlenv/util/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <map>
#include <regex>

namespace testsupport {

using namespace sqlenv;
using episode::Action;
using episode::ActionKind;
using episode::Verdict;

TempDir::TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("sqlenv-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

fs::path fixture_dir() { return SQLENV_TEST_FIXTURES; }

const db::Registry& fixture_registry() {
    static TempDir dir;
    static const db::Registry reg = db::Registry::load(db::materialize_sql_dir(fixture_dir(), dir.path()));
    return reg;
}

CaseFixture load_case(const std::string& name) {
    const auto j = nlohmann::json::parse(text::read_file(fixture_dir() / "cases" / (name + ".json")));
    return {episode::DialogueTask::from_json(j.at("task")), j.at("emissions").get<std::vector<std::string>>()};
}

episode::Trajectory replay_case(const CaseFixture& c, const episode::EpisodeLimits& limits) {
    const auto& reg = fixture_registry();
    policy::ScriptedPolicy scripted(episode::record_fixtures(c.emissions, c.task, reg, limits));
    return episode::run_episode(scripted, c.task, reg, limits);
}

// ---- clause-F1 oracle -------------------------------------------------------

namespace {

const std::vector<std::string> kSelect = {"{t1}.a", "{t1}.b", "{t1}.c", "COUNT(*)", "max({t1}.b)", "MIN({t2}.d)",
                                          "{t2}.d", "{t2}.e", "sum({t1}.c)", "avg({t2}.E)"};
const std::vector<std::string> kWhere = {"{t1}.a > 3", "{t1}.a > 2", "{t1}.b = 'x'", "{t1}.b = 'X'",
                                         "{t2}.d < 7", "{t1}.c LIKE '%q%'", "{t2}.e != 4",
                                         "{t1}.a BETWEEN 1 AND 5", "{t2}.d >= 1"};
const std::vector<std::string> kGroup = {"{t1}.a", "{t2}.d", "{t1}.c"};
const std::vector<std::string> kHaving = {"count(*) > 1", "COUNT(*) > 2", "sum({t1}.c) < 10"};
const std::vector<std::string> kOrder = {"{t1}.a", "{t1}.b", "count(*)", "{t2}.e"};

std::string flip_case(Rng& rng, const std::string& s) {
    // Random case outside string literals.
    std::string out;
    bool in_str = false;
    std::bernoulli_distribution coin(0.5);
    for (char ch : s) {
        if (ch == '\'') in_str = !in_str;
        if (!in_str && std::isalpha(static_cast<unsigned char>(ch)))
            out += coin(rng) ? static_cast<char>(std::toupper(ch)) : static_cast<char>(std::tolower(ch));
        else
            out += ch;
    }
    return out;
}

std::string subst(std::string s, const std::string& t1, const std::string& t2) {
    for (auto [key, val] : {std::pair<std::string, std::string>{"{t1}", t1}, {"{t2}", t2}}) {
        for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key)) s.replace(pos, key.size(), val);
    }
    return s;
}

std::vector<int> pick(Rng& rng, int pool, int lo, int hi, const std::vector<int>& keep_from) {
    std::vector<int> chosen;
    std::bernoulli_distribution keep(0.6);
    for (int k : keep_from)
        if (keep(rng)) chosen.push_back(k);
    const int want = std::uniform_int_distribution<int>(lo, hi)(rng);
    for (int tries = 0; static_cast<int>(chosen.size()) < want && tries < 50; ++tries) {
        const int k = std::uniform_int_distribution<int>(0, pool - 1)(rng);
        if (std::find(chosen.begin(), chosen.end(), k) == chosen.end()) chosen.push_back(k);
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);
    return chosen;
}

std::vector<int> indices(const std::vector<std::string>& labels, char prefix) {
    std::vector<int> out;
    for (const auto& l : labels)
        if (!l.empty() && l[0] == prefix && std::isdigit(static_cast<unsigned char>(l[1]))) out.push_back(std::stoi(l.substr(1)));
    return out;
}

}  // namespace

const sql::Schema& generator_schema() {
    static const sql::Schema s{{{"t1", {"id", "a", "b", "c"}}, {"t2", {"id", "t1_id", "d", "e"}}}};
    return s;
}

GeneratedQuery random_query(Rng& rng, const GeneratedQuery* base) {
    std::bernoulli_distribution coin(0.5);
    GeneratedQuery q;
    const bool joined = base ? (std::find(base->labels[2].begin(), base->labels[2].end(), "jt2") != base->labels[2].end()) != (std::bernoulli_distribution(0.2)(rng))
                             : coin(rng);
    const bool alias = coin(rng);
    // An alias only resolves when its table is in FROM.
    const std::string t1 = alias ? "x" : "t1", t2 = alias && joined ? "y" : "t2";

    auto sel = pick(rng, static_cast<int>(kSelect.size()), 1, 4, base ? indices(base->labels[0], 's') : std::vector<int>{});
    if (sel.empty()) sel.push_back(0);
    const auto where = pick(rng, static_cast<int>(kWhere.size()), 0, 3, base ? indices(base->labels[1], 'w') : std::vector<int>{});
    const auto group = pick(rng, static_cast<int>(kGroup.size()), 0, coin(rng) ? 0 : 2,
                            base ? indices(base->labels[3], 'g') : std::vector<int>{});
    std::vector<int> having;
    if (!group.empty())
        having = pick(rng, static_cast<int>(kHaving.size()), 0, 1, base ? indices(base->labels[3], 'h') : std::vector<int>{});
    const auto order = pick(rng, static_cast<int>(kOrder.size()), 0, coin(rng) ? 0 : 2,
                            base ? indices(base->labels[4], 'o') : std::vector<int>{});
    std::vector<bool> desc;
    for (std::size_t i = 0; i < order.size(); ++i) desc.push_back(coin(rng));
    int limit = 0;
    if (!order.empty() && coin(rng)) limit = std::uniform_int_distribution<int>(1, 3)(rng);

    std::string sql = "SELECT ";
    for (std::size_t i = 0; i < sel.size(); ++i) {
        sql += (i ? ", " : "") + subst(kSelect[sel[i]], t1, t2);
        q.labels[0].push_back("s" + std::to_string(sel[i]));
    }
    sql += " FROM t1" + std::string(alias ? " AS x" : "");
    // JOIN units exist only when FROM holds more than one table.
    if (joined) {
        q.labels[2].push_back("jt1");
        sql += " JOIN t2" + std::string(alias ? " AS y" : "");
        sql += coin(rng) ? " ON " + t1 + ".id = " + t2 + ".t1_id" : " ON " + t2 + ".t1_id = " + t1 + ".id";
        q.labels[2].push_back("jt2");
        q.labels[2].push_back("jon");
    }
    for (std::size_t i = 0; i < where.size(); ++i) {
        sql += (i ? " AND " : " WHERE ") + subst(kWhere[where[i]], t1, t2);
        q.labels[1].push_back("w" + std::to_string(where[i]));
    }
    for (std::size_t i = 0; i < group.size(); ++i) {
        sql += (i ? ", " : " GROUP BY ") + subst(kGroup[group[i]], t1, t2);
        q.labels[3].push_back("g" + std::to_string(group[i]));
    }
    for (std::size_t i = 0; i < having.size(); ++i) {
        sql += " HAVING " + subst(kHaving[having[i]], t1, t2);
        q.labels[3].push_back("h" + std::to_string(having[i]));
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
        sql += (i ? ", " : " ORDER BY ") + subst(kOrder[order[i]], t1, t2);
        sql += desc[i] ? " DESC" : (coin(rng) ? " ASC" : "");
        q.labels[4].push_back("o" + std::to_string(order[i]) + (desc[i] ? "d" : "a"));
    }
    if (limit) {
        sql += " LIMIT " + std::to_string(limit);
        q.labels[4].push_back("l" + std::to_string(limit));
    }
    // Spacing noise around commas and operators.
    std::string spaced;
    for (char ch : sql) {
        spaced += ch;
        if ((ch == ',' || ch == ' ') && coin(rng) && coin(rng)) spaced += ' ';
    }
    q.sql = flip_case(rng, spaced);
    return q;
}

double oracle_set_f1(std::vector<std::string> pred, std::vector<std::string> gold) {
    std::sort(pred.begin(), pred.end());
    pred.erase(std::unique(pred.begin(), pred.end()), pred.end());
    std::sort(gold.begin(), gold.end());
    gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    int common = 0;
    for (const auto& p : pred)
        for (const auto& g : gold)
            if (p == g) ++common;
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2 * precision * recall / (precision + recall);
}

double oracle_clause_f1(const GeneratedQuery& pred, const GeneratedQuery& gold) {
    double sum = 0;
    for (int c = 0; c < 5; ++c) sum += oracle_set_f1(pred.labels[c], gold.labels[c]);
    return sum / 5;
}

// ---- transition grammar oracle ---------------------------------------------

namespace {

enum State { Start, Drafted, Executed, ExecOk, NeedsFix, MemOk, Done, Dead };

// Symbol: kind plus verdict where one applies.
std::string symbol(const Action& a) {
    std::string s = episode::to_string(a.kind);
    if (episode::is_verify(a.kind)) s += a.verdict ? (*a.verdict == Verdict::Pass ? "+" : "-") : "?";
    return s;
}

const std::map<std::pair<State, std::string>, State>& table() {
    static const std::map<std::pair<State, std::string>, State> t = {
        {{Start, "PROPOSE"}, Drafted},     {{Drafted, "EXECUTE"}, Executed},   {{Executed, "E_VERIFY+"}, ExecOk},
        {{Executed, "E_VERIFY-"}, NeedsFix}, {{ExecOk, "M_VERIFY+"}, MemOk},   {{ExecOk, "M_VERIFY-"}, NeedsFix},
        {{NeedsFix, "SELF_CORRECT"}, Drafted}, {{MemOk, "FINALIZE"}, Done},
    };
    return t;
}

Action make(ActionKind k, std::optional<Verdict> v = std::nullopt) {
    Action a;
    a.kind = k;
    a.verdict = v;
    return a;
}

}  // namespace

bool automaton_accepts(const std::vector<Action>& actions) {
    State s = Start;
    for (const auto& a : actions) {
        auto it = table().find({s, symbol(a)});
        s = it == table().end() ? Dead : it->second;
        if (s == Dead) return false;
    }
    return s == Done;
}

std::vector<Action> random_action_sequence(Rng& rng, int edits) {
    std::vector<Action> seq;
    std::bernoulli_distribution pass(0.6);
    State s = Start;
    while (s != Done) {
        const bool force = seq.size() >= 12;
        switch (s) {
            case Start: seq.push_back(make(ActionKind::Propose)); s = Drafted; break;
            case Drafted: seq.push_back(make(ActionKind::Execute)); s = Executed; break;
            case Executed: {
                const bool p = force || pass(rng);
                seq.push_back(make(ActionKind::EVerify, p ? Verdict::Pass : Verdict::Fail));
                s = p ? ExecOk : NeedsFix;
                break;
            }
            case ExecOk: {
                const bool p = force || pass(rng);
                seq.push_back(make(ActionKind::MVerify, p ? Verdict::Pass : Verdict::Fail));
                s = p ? MemOk : NeedsFix;
                break;
            }
            case NeedsFix: seq.push_back(make(ActionKind::SelfCorrect)); s = Drafted; break;
            case MemOk: seq.push_back(make(ActionKind::Finalize)); s = Done; break;
            default: s = Done;
        }
    }
    std::uniform_int_distribution<int> kind_d(0, 5);
    auto random_action = [&] {
        const auto k = episode::kAllKinds[static_cast<std::size_t>(kind_d(rng))];
        return make(k, episode::is_verify(k) ? std::optional<Verdict>(pass(rng) ? Verdict::Pass : Verdict::Fail)
                                             : std::nullopt);
    };
    for (int e = 0; e < edits; ++e) {
        const int op = std::uniform_int_distribution<int>(0, 3)(rng);
        const auto n = seq.size();
        if (op == 0 && n) {
            seq[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = random_action();
        } else if (op == 1) {
            seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(std::uniform_int_distribution<std::size_t>(0, n)(rng)),
                       random_action());
        } else if (op == 2 && n) {
            seq.erase(seq.begin() + static_cast<std::ptrdiff_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)));
        } else if (n) {
            auto& a = seq[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)];
            if (a.verdict) a.verdict = *a.verdict == Verdict::Pass ? Verdict::Fail : Verdict::Pass;
        }
    }
    return seq;
}

episode::Trajectory shell_trajectory(std::vector<Action> actions, episode::Termination t) {
    episode::Trajectory traj;
    traj.trajectory_id = "shell#0";
    traj.task_id = "shell";
    traj.prompt = "prompt";
    traj.segments.push_back({traj.prompt, episode::Origin::Environment, false});
    for (auto& a : actions) {
        if ((episode::requires_sql(a.kind) || a.kind == ActionKind::MVerify) && !a.sql) a.sql = "SELECT 1";
        if (a.kind == ActionKind::Execute && !a.exec_status) a.exec_status = "ok";
    }
    if (!actions.empty() && actions.back().kind == ActionKind::Finalize) traj.final_sql = actions.back().sql;
    traj.actions = std::move(actions);
    traj.termination = t;
    return traj;
}

// ---- emissions --------------------------------------------------------------

std::string think(const std::string& s) { return "<think>\n" + s + "\n</think>\n"; }

namespace {
std::string call(const std::string& name, const std::string& sql) {
    return "<tool_call>\n" + nlohmann::json{{"name", name}, {"arguments", {{"code", sql}}}}.dump() + "\n</tool_call>";
}
}  // namespace

std::string exec_call(const std::string& sql) { return call("exec_sql", sql); }
std::string memory_call(const std::string& sql) { return call("memory_retrieve", sql); }
std::string answer(const std::string& sql) { return "<answer_sql>" + sql + "</answer_sql>"; }

policy::GenerationResult LambdaPolicy::generate(const policy::GenerationRequest& r) {
    std::size_t step = 0;
    for (const auto& m : r.messages) step += m.role == "assistant";
    return policy::truncate_generation(fn_(r.messages, step, r.seed.value_or(0)), r.stop_markers, r.max_new);
}

// ---- synthetic corpus -------------------------------------------------------

namespace {

std::string shop_script() {
    static const char* cats[] = {"tools", "toys", "food", "books"};
    std::string s = "CREATE TABLE items (id INTEGER PRIMARY KEY, name TEXT, price REAL, cat TEXT, stock INTEGER);\n";
    for (int i = 1; i <= 24; ++i)
        s += "INSERT INTO items VALUES (" + std::to_string(i) + ", 'item_" + std::to_string(i) + "', " +
             std::to_string((i * 7) % 23) + ".5, '" + cats[i % 4] + "', " + std::to_string((i * 3) % 11) + ");\n";
    return s;
}

std::string gold_for(int i) {
    if (i < 20) return "SELECT name FROM items WHERE id = " + std::to_string(i + 1);
    if (i < 35)
        return "SELECT cat, COUNT(*) FROM items WHERE price > " + std::to_string((i - 20) % 10) +
               " GROUP BY cat HAVING COUNT(*) > 1 ORDER BY COUNT(*) DESC LIMIT 1";
    return "SELECT name FROM items WHERE stock = " + std::to_string(i % 11);
}

std::string wrong_for(int i) {
    if (i < 20) return "SELECT name FROM items WHERE id = " + std::to_string(100 + i);
    if (i < 35)
        return "SELECT cat, COUNT(*) FROM items WHERE price > " + std::to_string((i - 20) % 10) +
               " GROUP BY cat ORDER BY COUNT(*) DESC";
    return "SELECT name FROM items WHERE stock > 100";
}

bool solved_on(int i, std::uint64_t seed) {
    if (i < 10) return true;
    if (i < 20) return seed % 2 == 0;
    if (i >= 33 && i < 35) return seed == 1 || seed == 2;
    if (i < 35) return seed % 4 != 0;
    return false;
}

// Emission for task i at `step` under `seed`.
std::string emit(int i, std::size_t step, std::uint64_t seed) {
    const auto gold = gold_for(i), wrong = wrong_for(i);
    const auto note = [&](const std::string& s) { return think(s + " (attempt " + std::to_string(seed) + ")"); };
    // Path A: exec gold, memory gold, answer.  2 calls.
    // Path B: exec wrong, fix, exec gold, memory, answer.  3 calls.
    // Path C: exec gold, memory rejects, exec gold again, memory, answer.  4 calls.
    // Path F: exec wrong, memory wrong, answer wrong.  2 calls.
    char path = 'A';
    if (!solved_on(i, seed)) path = 'F';
    else if (i < 10) path = seed % 3 == 0 ? 'B' : 'A';
    else if (i >= 20 && i < 33) path = "ABC"[seed % 3];
    std::vector<std::string> steps;
    switch (path) {
        case 'A':
            steps = {note("Direct lookup.") + exec_call(gold),
                     "<exec_verify>pass</exec_verify>\n" + note("Check against the dialogue.") + memory_call(gold),
                     "<memory_verify>pass</memory_verify>\n" + answer(gold)};
            break;
        case 'B':
            steps = {note("First guess without the filter on groups.") + exec_call(wrong),
                     "<exec_verify>no_pass</exec_verify>\n" + note("The result looks off, correcting.") + exec_call(gold),
                     "<exec_verify>pass</exec_verify>\n" + memory_call(gold),
                     "<memory_verify>pass</memory_verify>\n" + answer(gold)};
            break;
        case 'C':
            steps = {note("Aggregate per category.") + exec_call(gold),
                     "<exec_verify>pass</exec_verify>\n" + memory_call(gold),
                     "<memory_verify>no_pass</memory_verify>\n" + note("Memory disagrees; rerun to be sure of the ordering.") +
                         exec_call(gold),
                     "<exec_verify>pass</exec_verify>\n" + memory_call(gold),
                     "<memory_verify>pass</memory_verify>\n" + answer(gold)};
            break;
        default:
            steps = {note("Guess.") + exec_call(wrong), "<exec_verify>pass</exec_verify>\n" + memory_call(wrong),
                     "<memory_verify>pass</memory_verify>\n" + answer(wrong)};
    }
    return step < steps.size() ? steps[step] : answer(wrong);
}

}  // namespace

SyntheticCorpus::SyntheticCorpus() {
    const auto db = dir.path() / "shop.sqlite";
    db::create_database(db, shop_script());
    registry.add("shop", db);
    for (int i = 0; i < 50; ++i) {
        episode::DialogueTask t;
        char id[16];
        std::snprintf(id, sizeof id, "syn-%02d", i);
        t.task_id = id;
        t.dialogue_id = id;
        t.db_id = "shop";
        t.turn_index = 0;
        t.question = std::string("[") + id + "] Which rows answer question " + std::to_string(i) + "?";
        t.gold_sql = gold_for(i);
        tasks.push_back(t);
        if (i < 35) solvable.insert(id);
    }
}

int SyntheticCorpus::expected_successes(int index) {
    int n = 0;
    for (std::uint64_t s = 0; s < 20; ++s) n += solved_on(index, s);
    return n;
}

std::unique_ptr<policy::Policy> SyntheticCorpus::policy() const {
    return std::make_unique<LambdaPolicy>([](const std::vector<policy::Message>& msgs, std::size_t step, std::uint64_t seed) {
        static const std::regex id_re(R"(\[syn-(\d\d)\])");
        std::smatch m;
        for (const auto& msg : msgs)
            if (msg.role == "user" && std::regex_search(msg.text, m, id_re)) return emit(std::stoi(m[1]), step, seed);
        return answer("SELECT 1");
    });
}

}  // namespace testsupport
