#include "support.hpp"

#include "sqlenv/util/text.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <sys/wait.h>

using nlohmann::json;
using sqlenv::text::read_file;
using sqlenv::text::read_lines;
using sqlenv::text::write_file;
namespace fs = std::filesystem;

namespace {

struct Run {
    int rc = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(SQLENV_CLI) + " " + args + " -q 2>&1";
    Run r;
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Databases and task files shared by the cases below.
struct Workspace {
    testsupport::TempDir dir;
    fs::path manifest, tasks;
    Workspace() {
        const auto r = run("build-db --sql-dir " + q(testsupport::fixture_dir()) + " --out " + q(dir.path() / "dbs"));
        REQUIRE(r.rc == 0);
        manifest = dir.path() / "dbs" / "manifest.json";
        tasks = dir.path() / "tasks.jsonl";
        std::string lines;
        for (const char* name : {"case1", "case2"}) lines += testsupport::load_case(name).task.to_json().dump() + "\n";
        write_file(tasks, lines);
    }
};

Workspace& ws() {
    static Workspace w;
    return w;
}

}  // namespace

TEST_CASE("exit codes") {
    CHECK(run("").rc == 1);
    CHECK(run("--help").rc == 0);
    CHECK(run("frobnicate").rc == 1);
    CHECK(run("eval --tasks x").rc == 1);  // missing required options
    CHECK(run("eval --tasks /nonexistent/t.jsonl --predictions /nonexistent/p.jsonl --registry " + q(ws().manifest)).rc ==
          2);
    testsupport::TempDir tmp;
    write_file(tmp.path() / "cfg.json", R"({"registry": "m.json", "tasks": "t.jsonl", "bogus": 1})");
    const auto bad = run("collect --config " + q(tmp.path() / "cfg.json"));
    CHECK(bad.rc == 1);
    CHECK(bad.out.find("bogus") != std::string::npos);
}

TEST_CASE("eval") {
    testsupport::TempDir tmp;
    std::string gold, empty, ghost;
    for (const char* name : {"case1", "case2"}) {
        const auto t = testsupport::load_case(name).task;
        gold += json{{"task_id", t.task_id}, {"sql", t.gold_sql}}.dump() + "\n";
        empty += json{{"task_id", t.task_id}, {"sql", ""}}.dump() + "\n";
    }
    ghost = gold + json{{"task_id", "ghost"}, {"sql", "SELECT 1"}}.dump() + "\n";
    write_file(tmp.path() / "gold.jsonl", gold);
    write_file(tmp.path() / "empty.jsonl", empty);
    write_file(tmp.path() / "ghost.jsonl", ghost);
    const std::string base = "eval --tasks " + q(ws().tasks) + " --registry " + q(ws().manifest) + " --predictions ";

    auto r = run(base + q(tmp.path() / "gold.jsonl") + " --format json");
    REQUIRE(r.rc == 0);
    auto j = json::parse(r.out);
    CHECK(j["overall"]["em"] == 100.0);
    CHECK(j["overall"]["ex"] == 100.0);
    r = run(base + q(tmp.path() / "empty.jsonl") + " --json " + q(tmp.path() / "rep.json"));
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("EM") != std::string::npos);
    j = json::parse(read_file(tmp.path() / "rep.json"));
    CHECK(j["overall"]["em"] == 0.0);
    CHECK(j["overall"]["ex"] == 0.0);
    CHECK(run(base + q(tmp.path() / "ghost.jsonl")).rc == 1);
}

TEST_CASE("collect, export-sft and advantages") {
    testsupport::TempDir tmp;
    const auto c = testsupport::load_case("case1");
    std::string lines;
    for (int i = 0; i < 5; ++i) {
        auto t = c.task;
        t.task_id = "smoke-" + std::to_string(i);
        t.question += " [" + t.task_id + "]";
        if (i >= 3) t.gold_sql = "SELECT count(*) FROM countries";
        lines += t.to_json().dump() + "\n";
    }
    write_file(tmp.path() / "tasks.jsonl", lines);
    write_file(tmp.path() / "empty.pack.jsonl", "");
    const json cfg = {{"registry", ws().manifest.string()},
                      {"tasks", "tasks.jsonl"},
                      {"journal", "journal"},
                      {"policy",
                       {{"backend", "scripted"},
                        {"pack", "empty.pack.jsonl"},
                        {"default_continuation", testsupport::answer(c.task.gold_sql)}}}};
    write_file(tmp.path() / "cfg.json", cfg.dump());

    auto r = run("collect --config " + q(tmp.path() / "cfg.json") + " --round 1");
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("round 1: pool 5 raw 100 valid 60") != std::string::npos);
    CHECK(r.out.find("coverage 3/5") != std::string::npos);
    CHECK(read_lines(tmp.path() / "journal" / "round_0" / "raw.jsonl").size() == 100);

    r = run("collect --config " + q(tmp.path() / "cfg.json") + " --round 2");
    REQUIRE(r.rc == 0);
    CHECK(r.out.find("round 1 (journal)") != std::string::npos);
    CHECK(r.out.find("round 2: pool 2 raw 40 valid 0") != std::string::npos);
    CHECK(r.out.find("coverage 3/5") != std::string::npos);
    const auto pool = json::parse(read_file(tmp.path() / "journal" / "round_1" / "pool.json"));
    CHECK(pool["pool"] == json::array({"smoke-3", "smoke-4"}));

    r = run("export-sft --journal " + q(tmp.path() / "journal") + " --out " + q(tmp.path() / "sft.jsonl"));
    REQUIRE(r.rc == 0);
    const auto sft = read_lines(tmp.path() / "sft.jsonl");
    CHECK(sft.size() == 6);  // easy branch keeps two per solved task
    for (const auto& l : sft) CHECK(json::parse(l).contains("mask_spans"));

    r = run("advantages --rollouts " + q(tmp.path() / "journal" / "round_0" / "raw.jsonl") + " --out " +
            q(tmp.path() / "adv.jsonl"));
    REQUIRE(r.rc == 0);
    const auto adv = read_lines(tmp.path() / "adv.jsonl");
    CHECK(adv.size() == 100);
    for (const auto& l : adv) CHECK(std::abs(json::parse(l)["advantage"].get<double>()) < 1e-9);  // identical rewards
}

TEST_CASE("curriculum") {
    testsupport::TempDir tmp;
    write_file(tmp.path() / "none.jsonl", "");
    auto r = run("curriculum --profiles " + q(tmp.path() / "none.jsonl") + " --tasks " + q(ws().tasks) + " --out " +
                 q(tmp.path() / "out0"));
    REQUIRE(r.rc == 0);
    CHECK((!fs::exists(tmp.path() / "out0") || fs::is_empty(tmp.path() / "out0")));

    std::string profiles;
    std::string tasks;
    for (int i = 0; i < 6; ++i) {
        auto t = testsupport::load_case("case2").task;
        t.task_id = "p" + std::to_string(i);
        tasks += t.to_json().dump() + "\n";
        profiles += json{{"task_id", t.task_id}, {"successes", i == 5 ? 20 : i * 3}}.dump() + "\n";
    }
    write_file(tmp.path() / "p.jsonl", profiles);
    write_file(tmp.path() / "t.jsonl", tasks);
    r = run("curriculum --profiles " + q(tmp.path() / "p.jsonl") + " --tasks " + q(tmp.path() / "t.jsonl") + " --out " +
            q(tmp.path() / "out") + " --bin-size 2");
    REQUIRE(r.rc == 0);
    CHECK(read_lines(tmp.path() / "out" / "train_rl1.jsonl").size() == 2);
    CHECK(read_lines(tmp.path() / "out" / "train_rl2.jsonl").size() == 2);
    CHECK(read_lines(tmp.path() / "out" / "train_rl3.jsonl").size() == 1);
    CHECK_FALSE(fs::exists(tmp.path() / "out" / "train_rl4.jsonl"));
    CHECK(json::parse(read_lines(tmp.path() / "out" / "train_rl1.jsonl")[0])["task_id"] == "p4");
}

TEST_CASE("record-pack and score") {
    testsupport::TempDir tmp;
    const auto r = run("record-pack --case " + q(testsupport::fixture_dir() / "cases" / "case2.json") + " --registry " +
                       q(ws().manifest) + " --out " + q(tmp.path() / "pack.jsonl") + " --trajectory " +
                       q(tmp.path() / "traj.json"));
    REQUIRE(r.rc == 0);
    CHECK(read_file(tmp.path() / "pack.jsonl") ==
          read_file(testsupport::fixture_dir() / "cases" / "case2.pack.jsonl"));
    write_file(tmp.path() / "traj.jsonl", json::parse(read_file(tmp.path() / "traj.json")).dump() + "\n");
    const auto s = run("score --trajectories " + q(tmp.path() / "traj.jsonl") + " --tasks " + q(ws().tasks) +
                       " --registry " + q(ws().manifest));
    REQUIRE(s.rc == 0);
    const auto j = json::parse(s.out);
    CHECK(j["reward_breakdown"]["total"].get<double>() == doctest::Approx(2.1667).epsilon(1e-4));
    CHECK(j["termination"] == "finalized");
}
