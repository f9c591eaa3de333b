#pragma once
// Shared helpers for unit and acceptance tests: fixture databases, case
// transcripts, random generators, and oracles written without reference to
// the library's implementation.

#include "sqlenv/db/db.hpp"
#include "sqlenv/episode/actions.hpp"
#include "sqlenv/episode/episode.hpp"
#include "sqlenv/episode/task.hpp"
#include "sqlenv/policy/policy.hpp"

#include <array>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testsupport {

namespace fs = std::filesystem;
using Rng = std::mt19937_64;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

fs::path fixture_dir();

/// car_1 and world_1 built once per process from the bundled .sql scripts.
const sqlenv::db::Registry& fixture_registry();

struct CaseFixture {
    sqlenv::episode::DialogueTask task;
    std::vector<std::string> emissions;
};

/// "case1" or "case2".
CaseFixture load_case(const std::string& name);

/// Replays a case through a scripted policy built from its transcript.
sqlenv::episode::Trajectory replay_case(const CaseFixture& c,
                                        const sqlenv::episode::EpisodeLimits& limits = {});

// ---- clause-F1 oracle -------------------------------------------------------

/// A query built from labelled parts. `labels[c]` names the units of clause
/// c (SELECT, WHERE, JOIN, GROUP+HAVING, ORDER+LIMIT) in the generator's own
/// vocabulary; the SQL text is rendered with random casing, spacing, aliasing
/// and item order.
struct GeneratedQuery {
    std::string sql;
    std::array<std::vector<std::string>, 5> labels;
};

/// Schema of the generated queries; decompose with it so every column is
/// qualified the same way whether or not the query joins.
const sqlenv::sql::Schema& generator_schema();

/// Queries over tables t1(id, a, b, c) and t2(id, t1_id, d, e). When
/// `base` is given, parts are resampled from it so pairs overlap.
GeneratedQuery random_query(Rng& rng, const GeneratedQuery* base = nullptr);

/// Set F1 by counting: precision and recall from explicit loops.
double oracle_set_f1(std::vector<std::string> pred, std::vector<std::string> gold);
double oracle_clause_f1(const GeneratedQuery& pred, const GeneratedQuery& gold);

// ---- transition grammar oracle ---------------------------------------------

/// Table-driven automaton over action kinds with verdicts. Accepts exactly
/// the sequences that start from nothing and end in FINALIZE.
bool automaton_accepts(const std::vector<sqlenv::episode::Action>& actions);

/// A legal sequence from the automaton's own table, then `edits` random
/// single-action corruptions (replace, insert, delete, verdict flip).
std::vector<sqlenv::episode::Action> random_action_sequence(Rng& rng, int edits);

/// Trajectory shell around `actions` with the given termination; sql and
/// verdicts are filled where the action kind calls for them.
sqlenv::episode::Trajectory shell_trajectory(std::vector<sqlenv::episode::Action> actions,
                                             sqlenv::episode::Termination t);

// ---- emissions --------------------------------------------------------------

std::string think(const std::string& s);
std::string exec_call(const std::string& sql);
std::string memory_call(const std::string& sql);
std::string answer(const std::string& sql);

/// A policy that ignores the conversation and answers every request with
/// `make(step, seed)`, where step counts assistant turns so far.
class LambdaPolicy : public sqlenv::policy::Policy {
public:
    using Fn = std::function<std::string(const std::vector<sqlenv::policy::Message>&, std::size_t step,
                                         std::uint64_t seed)>;
    explicit LambdaPolicy(Fn fn) : fn_(std::move(fn)) {}
    sqlenv::policy::GenerationResult generate(const sqlenv::policy::GenerationRequest& r) override;

private:
    Fn fn_;
};

// ---- synthetic corpus -------------------------------------------------------

/// Fifty tasks on one small database with designed solvability:
///  0..9   easy gold, always solved (20/20)
///  10..19 easy gold, solved on some seeds
///  20..34 hard gold, solved on some seeds, varied multi-call paths
///  35..49 never solved
struct SyntheticCorpus {
    TempDir dir;
    sqlenv::db::Registry registry;
    std::vector<sqlenv::episode::DialogueTask> tasks;
    std::set<std::string> solvable;

    SyntheticCorpus();
    /// The scripted policy whose behaviour realises the design above.
    std::unique_ptr<sqlenv::policy::Policy> policy() const;
    /// Expected successes out of 20 for a task index.
    static int expected_successes(int index);
};

}  // namespace testsupport
