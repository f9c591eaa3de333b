#include "support.hpp"

#include "sqlenv/db/db.hpp"
#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <doctest.h>

#include <chrono>

using namespace sqlenv;
using namespace sqlenv::db;
using testsupport::Rng;
using testsupport::TempDir;

namespace {

const char* kUsa =
    "SELECT COUNT(*) FROM car_makers JOIN countries ON car_makers.Country = countries.CountryId "
    "WHERE countries.CountryName = 'USA'";
const char* kUsaLower =
    "SELECT COUNT(*) FROM car_makers JOIN countries ON car_makers.Country = countries.CountryId "
    "WHERE countries.CountryName = 'usa'";

ExecutionOutcome rows_of(std::vector<Row> rows) {
    ExecutionOutcome o;
    o.rows = std::move(rows);
    o.status = classify_outcome(o);
    return o;
}

}  // namespace

TEST_CASE("registry: lookup hit and miss") {
    const auto& reg = testsupport::fixture_registry();
    CHECK(reg.contains("car_1"));
    CHECK(reg.open("car_1").id() == "car_1");
    CHECK_THROWS_AS(reg.open("missing"), UnknownDatabase);
    CHECK_THROWS_AS(reg.info("missing"), UnknownDatabase);
}

TEST_CASE("registry: two hundred databases all open") {
    TempDir dir;
    for (int i = 0; i < 200; ++i)
        text::write_file(dir.path() / ("db" + std::to_string(i) + ".sql"),
                         "CREATE TABLE t (a INTEGER);\nINSERT INTO t VALUES (" + std::to_string(i) + ");\n");
    const auto reg = Registry::load(materialize_sql_dir(dir.path(), dir.path() / "out"));
    std::vector<Handle> handles;
    for (const auto& id : reg.ids()) handles.push_back(reg.open(id));
    CHECK(handles.size() == 200);
    CHECK(handles[7].execute("SELECT a FROM t").status == Status::Ok);
}

TEST_CASE("registry: corrupt file and stale cache") {
    TempDir dir;
    text::write_file(dir.path() / "junk.sqlite", "this is not a database file at all, just text padding it out");
    Registry reg;
    CHECK_THROWS_AS(reg.add("junk", dir.path() / "junk.sqlite"), CorruptFile);
    CHECK_THROWS_AS(reg.add("gone", dir.path() / "nope.sqlite"), CorruptFile);

    create_database(dir.path() / "ok.sqlite", "CREATE TABLE t (a INTEGER);");
    reg.add("ok", dir.path() / "ok.sqlite");
    CHECK(reg.cache_valid("ok"));
    create_database(dir.path() / "ok.sqlite", "CREATE TABLE u (b TEXT);");
    CHECK_FALSE(reg.cache_valid("ok"));
}

TEST_CASE("execute: literal case decides the Case 1 counts") {
    const auto h = testsupport::fixture_registry().open("car_1");
    const auto upper = h.execute(kUsa);
    CHECK(upper.status == Status::Ok);
    CHECK(render_rows(upper.rows) == "[(0,)]");
    const auto lower = h.execute(kUsaLower);
    CHECK(render_rows(lower.rows) == "[(4,)]");
}

TEST_CASE("execute: failures are outcomes, not exceptions") {
    const auto h = testsupport::fixture_registry().open("car_1");
    const auto bad = h.execute("SELECT * FROM no_such_table");
    CHECK(bad.status == Status::Error);
    CHECK(bad.error_message.find("no such table") != std::string::npos);
    CHECK(h.execute("").status == Status::Error);
    CHECK(h.execute("SELECT 1; SELECT 2").status == Status::Error);
    CHECK(h.execute("DELETE FROM car_makers").status == Status::Error);
    CHECK(h.execute("CREATE TABLE x (a)").status == Status::Error);
}

TEST_CASE("execute: read-only, including error and write paths") {
    const auto& reg = testsupport::fixture_registry();
    const auto path = reg.info("car_1").path;
    const auto before = hash_file(path);
    const auto h = reg.open("car_1");
    h.execute(kUsa);
    h.execute("SELECT * FROM nowhere");
    h.execute("DELETE FROM car_makers");
    h.execute("UPDATE countries SET CountryName = 'x'");
    h.execute("DROP TABLE countries");
    CHECK(hash_file(path) == before);
}

TEST_CASE("execute: row cap marks truncation") {
    const auto h = testsupport::fixture_registry().open("car_1");
    Limits lim;
    lim.max_rows = 10;
    const auto o = h.execute("WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c LIMIT 50) SELECT x FROM c", lim);
    CHECK(o.status == Status::Ok);
    CHECK(o.rows.size() == 10);
    CHECK(o.truncated);
}

TEST_CASE("execute: timeout fires within twice the limit") {
    const auto h = testsupport::fixture_registry().open("car_1");
    Limits lim;
    lim.timeout_ms = 200;
    const auto t0 = std::chrono::steady_clock::now();
    const auto o = h.execute("WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c", lim);
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    CHECK(o.status == Status::Error);
    CHECK(ms < 2 * lim.timeout_ms);
}

TEST_CASE("execute: deterministic for deterministic queries") {
    const auto h = testsupport::fixture_registry().open("world_1");
    for (const char* q : {"SELECT Name FROM city ORDER BY ID LIMIT 5", "SELECT count(*) FROM country",
                          "SELECT * FROM nothing"}) {
        const auto a = h.execute(q), b = h.execute(q);
        CHECK(a.status == b.status);
        CHECK(render_rows(a.rows) == render_rows(b.rows));
    }
}

TEST_CASE("classify outcome") {
    CHECK(classify_outcome(rows_of({{Value{std::int64_t{4}}}})) == Status::Ok);
    CHECK(classify_outcome(rows_of({})) == Status::Null);
    CHECK(classify_outcome(rows_of({{Value{}, Value{}}, {Value{}}})) == Status::Null);
    CHECK(classify_outcome(rows_of({{Value{}, Value{std::string("x")}}})) == Status::Ok);
    CHECK(classify_outcome(ExecutionOutcome::error("boom")) == Status::Error);
}

TEST_CASE("execution match") {
    const Value one{std::int64_t{1}}, two{std::int64_t{2}};
    const auto a = rows_of({{one}, {two}}), b = rows_of({{two}, {one}});
    CHECK(execution_match(a, a, false));
    CHECK(execution_match(a, b, false));
    CHECK_FALSE(execution_match(a, b, true));
    CHECK_FALSE(execution_match(ExecutionOutcome::error("x"), a, false));
    CHECK_FALSE(execution_match(a, ExecutionOutcome::error("x"), false));
    CHECK_FALSE(execution_match(ExecutionOutcome::error("x"), ExecutionOutcome::error("x"), false));
    // Integer-valued floats equal integers; text is case-sensitive; multiplicity counts.
    CHECK(execution_match(rows_of({{Value{1.0}}}), rows_of({{one}}), false));
    CHECK_FALSE(execution_match(rows_of({{Value{std::string("A")}}}), rows_of({{Value{std::string("a")}}}), false));
    CHECK_FALSE(execution_match(rows_of({{one}, {one}}), rows_of({{one}}), false));
}

TEST_CASE("execution match: reflexive and symmetric on random unordered rows") {
    Rng rng(5);
    std::uniform_int_distribution<int> small(0, 3), len(0, 5);
    for (int i = 0; i < 300; ++i) {
        auto make = [&] {
            std::vector<Row> rows;
            for (int r = len(rng); r > 0; --r) rows.push_back({Value{std::int64_t{small(rng)}}, Value{std::string(1, 'a' + small(rng))}});
            return rows_of(rows);
        };
        const auto a = make(), b = make();
        CHECK(execution_match(a, a, false));
        CHECK(execution_match(a, b, false) == execution_match(b, a, false));
        // Oracle: sort both row dumps and compare.
        auto key = [](const ExecutionOutcome& o) {
            std::vector<std::string> k;
            for (const auto& r : o.rows) k.push_back(render_rows({r}));
            std::sort(k.begin(), k.end());
            return k;
        };
        CHECK(execution_match(a, b, false) == (key(a) == key(b)));
    }
}

TEST_CASE("result snippets") {
    CHECK(render_result_snippet(rows_of({{Value{std::int64_t{0}}}}), 200) == "The sql results example is: [(0,)]");
    std::vector<Row> many;
    for (int i = 0; i < 40; ++i) many.push_back({Value{std::string("välue")}});
    CHECK(text::codepoints(render_result_snippet(rows_of(many), 50)) == 50);
    const auto err = ExecutionOutcome::error("no such table: x");
    CHECK(render_result_snippet(err, 200) == "no such table: x");
    CHECK(render_result_snippet(err, 5) == "no su");
}

TEST_CASE("schema rendering carries CREATE TABLE text and an example row") {
    const auto& info = testsupport::fixture_registry().info("car_1");
    const auto s = info.render_schema();
    CHECK(s.find("create table car_makers (") != std::string::npos);
    CHECK(s.find("1 example rows from table countries:") != std::string::npos);
    CHECK(s.find("foreign key (Country) references countries(CountryId)") != std::string::npos);
    const auto schema = info.schema();
    CHECK(schema.find("countries") != nullptr);
}
