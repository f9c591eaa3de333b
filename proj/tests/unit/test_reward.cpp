#include "support.hpp"

#include "sqlenv/reward/reward.hpp"
#include "sqlenv/util/error.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace sqlenv;
using namespace sqlenv::reward;
using episode::Verdict;
using testsupport::oracle_set_f1;
using testsupport::Rng;

namespace {

RewardBreakdown score_case(const std::string& name, const RewardWeights& w = {}) {
    const auto c = testsupport::load_case(name);
    const auto t = testsupport::replay_case(c);
    const auto& reg = testsupport::fixture_registry();
    return score_trajectory(t, c.task, reg.open(c.task.db_id), reg.info(c.task.db_id), w);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("E-Verify lookup table, all six cells") {
    using db::Status;
    CHECK(reward_e_verify(Status::Ok, Verdict::Pass) == 1.0);
    CHECK(reward_e_verify(Status::Ok, Verdict::Fail) == 0.0);
    CHECK(reward_e_verify(Status::Null, Verdict::Pass) == 0.0);
    CHECK(reward_e_verify(Status::Null, Verdict::Fail) == 0.1);
    CHECK(reward_e_verify(Status::Error, Verdict::Pass) == 0.0);
    CHECK(reward_e_verify(Status::Error, Verdict::Fail) == 1.0);
}

TEST_CASE("EX and EM") {
    db::ExecutionOutcome a;
    a.status = db::Status::Ok;
    a.rows = {{std::int64_t{4}}};
    CHECK(reward_ex(a, a, false) == 1.0);
    CHECK(reward_ex(db::ExecutionOutcome::error("no such table: x"), a, false) == 0.0);
    CHECK(reward_em("SELECT a FROM t", "select  a from t") == 1.0);
    CHECK(reward_em("SELECT a FROM t WHERE x = 1 AND y = 2", "SELECT a FROM t WHERE y = 2 AND x = 1") == 0.0);
    CHECK(reward_em("", "SELECT a FROM t") == 0.0);

    // Case 1: corrected SQL against gold, executed independently.
    const auto c = testsupport::load_case("case1");
    const auto h = testsupport::fixture_registry().open("car_1");
    const auto final_sql = *testsupport::replay_case(c).final_sql;
    const auto pred = h.execute(final_sql);
    const auto gold = h.execute(c.task.gold_sql);
    REQUIRE(pred.rows.size() == 1);
    CHECK(pred.rows == gold.rows);
    CHECK(reward_ex(pred, gold, false) == 1.0);
}

TEST_CASE("clause match process reward") {
    CHECK(reward_propose_or_correct("SELECT a FROM t", "SELECT a FROM t") == 1.0);
    CHECK(reward_propose_or_correct("SELEKT garbage", "SELECT a FROM t") == 0.0);
    // Only WHERE differs: four clauses at 1, one at 0.
    const double f = reward_propose_or_correct("SELECT a FROM t WHERE b = 2", "SELECT a FROM t WHERE b = 1");
    CHECK(f == doctest::Approx((1 + 1 + 1 + 1 + oracle_set_f1({"b=2"}, {"b=1"})) / 5));
    CHECK(f == doctest::Approx(0.8));
}

TEST_CASE("M-Verify on the Case 2 candidate") {
    const auto c = testsupport::load_case("case2");
    const std::string cand = "SELECT GovernmentForm, SUM(Population) FROM country GROUP BY GovernmentForm";
    // Hand decomposition: the candidate lacks only the HAVING unit.
    const double gh = oracle_set_f1({"group:GovernmentForm"}, {"group:GovernmentForm", "having:avg(LifeExpectancy)>72"});
    const double F = (1 + 1 + 1 + gh + 1) / 5;
    const auto& schema = testsupport::fixture_registry().info("world_1").schema();
    CHECK(reward_m_verify(Verdict::Pass, cand, c.task.gold_sql, &schema) == doctest::Approx(F));
    CHECK(reward_m_verify(Verdict::Fail, cand, c.task.gold_sql, &schema) == doctest::Approx(1 - F));
    CHECK(F < 1.0);
    CHECK(reward_m_verify(Verdict::Pass, c.task.gold_sql, c.task.gold_sql) == 1.0);
    CHECK(reward_m_verify(Verdict::Fail, c.task.gold_sql, c.task.gold_sql) == 0.0);
    CHECK(reward_m_verify(Verdict::Fail, "not sql at all", c.task.gold_sql) == 1.0);
}

TEST_CASE("property: M-Verify verdicts are complementary") {
    Rng rng(11);
    const auto& schema = testsupport::generator_schema();
    for (int i = 0; i < 300; ++i) {
        const auto gold = testsupport::random_query(rng);
        const auto pred = testsupport::random_query(rng, &gold);
        const double p = reward_m_verify(Verdict::Pass, pred.sql, gold.sql, &schema);
        const double f = reward_m_verify(Verdict::Fail, pred.sql, gold.sql, &schema);
        CHECK(p + f == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(p == doctest::Approx(testsupport::oracle_clause_f1(pred, gold)));
    }
}

TEST_CASE("Case 1 replay scored by hand") {
    const auto b = score_case("case1");
    // Proposal: 'USA' vs 'usa' misses the single WHERE unit; the fix is exact.
    const double propose = (4 + oracle_set_f1({"name='USA'"}, {"name='usa'"})) / 5;
    // First execute returned [(0,)] (ok) and the model moved on to fix it (fail),
    // the second returned [(4,)] (ok) and passed.
    const double e1 = 0.0, e2 = 1.0;
    CHECK(b.r_ex == 1.0);
    CHECK(b.r_em == 0.0);  // gold is written with aliases
    REQUIRE(b.propose_correct.size() == 2);
    CHECK(b.propose_correct[0] == doctest::Approx(propose));
    CHECK(b.propose_correct[1] == doctest::Approx(1.0));
    CHECK(b.e_verify == std::vector<double>{e1, e2});
    CHECK(b.m_verify == std::vector<double>{1.0});
    const double total = 1.0 * 1 + 0.5 * 0 + 0.3 * (propose + 1) / 2 + 0.2 * ((e1 + e2) / 2 + 1);
    CHECK(b.total == doctest::Approx(total));
    CHECK(b.total == doctest::Approx(1.57));
}

TEST_CASE("Case 2 replay scored by hand") {
    const auto b = score_case("case2");
    const double F = (4 + oracle_set_f1({"g"}, {"g", "h"})) / 5;
    CHECK(b.r_ex == 1.0);
    CHECK(b.r_em == 1.0);
    CHECK(b.propose_correct.size() == 1);
    CHECK(b.propose_correct[0] == doctest::Approx(F));
    CHECK(b.e_verify == std::vector<double>{1.0});
    REQUIRE(b.m_verify.size() == 1);
    CHECK(b.m_verify[0] == doctest::Approx(F));
    CHECK(b.total == doctest::Approx(1.0 + 0.5 + 0.3 * F + 0.2 * (1 + F)));
    CHECK(b.total == doctest::Approx(2.1667).epsilon(1e-4));
}

TEST_CASE("repeat handling flag sums instead of averaging") {
    RewardWeights w;
    w.sum_repeats = true;
    const auto b = score_case("case1", w);
    CHECK(b.total == doctest::Approx(1.0 + 0.3 * 1.8 + 0.2 * (1.0 + 1.0)));
}

TEST_CASE("weights: projection, validation") {
    RewardWeights only_ex{1, 0, 0, 0};
    const auto b = score_case("case2", only_ex);
    CHECK(b.total == b.r_ex);
    RewardWeights bad;
    bad.w3 = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.w3 = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(RewardWeights::from_json({{"w1", 1}, {"w9", 2}}), ConfigError);
    const auto rt = RewardWeights::from_json(RewardWeights{}.to_json());
    CHECK(rt.w2 == 0.5);
}

TEST_CASE("parse failure keeps only process terms") {
    const auto c = testsupport::load_case("case1");
    policy::SequencePolicy p({testsupport::exec_call(c.task.gold_sql), "<exec_verify>pass</exec_verify> and then nothing"});
    const auto& reg = testsupport::fixture_registry();
    const auto t = episode::run_episode(p, c.task, reg);
    REQUIRE(t.termination == episode::Termination::ParseFailure);
    const auto b = score_trajectory(t, c.task, reg.open("car_1"), reg.info("car_1"));
    CHECK(b.r_ex == 0.0);
    CHECK(b.r_em == 0.0);
    CHECK(b.propose_correct == std::vector<double>{1.0});
    CHECK(b.e_verify == std::vector<double>{1.0});
    CHECK(b.total == doctest::Approx(0.3 * 1.0 + 0.2 * 1.0));
}

TEST_CASE("property: total follows the weighted sum and is monotone") {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 500; ++i) {
        RewardWeights w{u(rng), u(rng), u(rng), u(rng)};
        RewardBreakdown b;
        b.r_ex = rng() % 2;
        b.r_em = rng() % 2;
        for (int k = rng() % 4; k > 0; --k) b.propose_correct.push_back(u(rng));
        for (int k = rng() % 4; k > 0; --k) b.e_verify.push_back(std::vector<double>{0, 0.1, 1}[rng() % 3]);
        for (int k = rng() % 3; k > 0; --k) b.m_verify.push_back(u(rng));
        finalize_total(b, w);
        const double expect = w.w1 * b.r_ex + w.w2 * b.r_em + w.w3 * mean(b.propose_correct) +
                              w.w4 * (mean(b.e_verify) + mean(b.m_verify));
        CHECK(b.total == doctest::Approx(expect).epsilon(1e-12));
        auto better = b;
        better.r_ex = 1;
        if (!better.propose_correct.empty()) better.propose_correct[0] = 1;
        finalize_total(better, w);
        CHECK(better.total >= b.total - 1e-12);
    }
}

TEST_CASE("scoring is pure and EM implies EX") {
    CHECK(score_case("case2").to_json().dump() == score_case("case2").to_json().dump());
    const std::vector<std::string> qs = {
        "SELECT Name FROM country WHERE Continent = 'Asia'", "SELECT count(*) FROM city",
        "SELECT Continent, avg(LifeExpectancy) FROM country GROUP BY Continent",
        "SELECT Name FROM country ORDER BY Population DESC LIMIT 3", "SELECT Language FROM countrylanguage"};
    const auto h = testsupport::fixture_registry().open("world_1");
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const auto& a = qs[rng() % qs.size()];
        const auto& b = qs[rng() % qs.size()];
        if (reward_em(a, b) == 1.0) CHECK(reward_ex(h.execute(a), h.execute(b), true) == 1.0);
    }
}
