// sqlenv: operator CLI. Exit codes: 0 ok, 1 validation failure, 2 runtime failure.
#include "sqlenv/db/db.hpp"
#include "sqlenv/episode/episode.hpp"
#include "sqlenv/grpo/grpo.hpp"
#include "sqlenv/pipeline/pipeline.hpp"
#include "sqlenv/service/config.hpp"
#include "sqlenv/service/service.hpp"
#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>
#include <set>

using namespace sqlenv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

bool is_validation(const Error& e) {
    static const std::set<std::string> codes = {"ConfigError", "SchemaMismatch", "ParseError", "UnknownTask",
                                                "DuplicateKey", "UnknownDatabase", "IllegalHistory", "EmptyQuery"};
    return codes.count(e.code()) != 0;
}

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty() || out_path == "-")
        std::cout << content;
    else
        text::write_file(out_path, content);
}

std::vector<pipeline::SuccessProfile> read_profiles(const fs::path& path) {
    // Either a journal pool.json or JSONL profile lines.
    const auto raw = text::read_file(path);
    try {
        const auto j = json::parse(raw);
        if (j.is_object() && j.contains("profiles") && !j.contains("task_id")) {
            std::vector<pipeline::SuccessProfile> out;
            for (const auto& p : j["profiles"]) out.push_back(pipeline::profile_from_json(p));
            return out;
        }
    } catch (const json::exception&) {
    }
    return pipeline::load_profiles(path);
}

service::HttpFrontend* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("sqlenv"));
    CLI::App app{"Multi-turn text-to-SQL environment: evaluation, data collection and the env service"};
    app.require_subcommand(1);
    app.fallthrough();
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");
    app.add_flag("-q,--quiet", quiet, "warnings and errors only");

    // eval
    std::string tasks_path, registry_path, predictions_path, json_out, format = "table";
    auto* eval = app.add_subcommand("eval", "EM/EX of predictions, sliced by turn and hardness");
    eval->add_option("--tasks", tasks_path, "task JSONL")->required();
    eval->add_option("--predictions", predictions_path, "JSONL of {task_id, sql}")->required();
    eval->add_option("--registry", registry_path, "database manifest")->required();
    eval->add_option("--json", json_out, "also write the JSON report here");
    eval->add_option("--format", format, "stdout format")->check(CLI::IsMember({"table", "json"}));

    // collect
    std::string config_path;
    int round = 1;
    auto* collect = app.add_subcommand("collect", "run warm-start rounds up to --round, resuming from the journal");
    collect->add_option("--config", config_path, "run config JSON")->required();
    collect->add_option("--round", round, "last round to run (1-based)")->check(CLI::PositiveNumber);

    // curriculum
    std::string profiles_path, out_dir;
    std::size_t bin_size = 0;
    int rollouts = 20;
    auto* curriculum = app.add_subcommand("curriculum", "bin tasks by success count into train_rl{k}.jsonl");
    curriculum->add_option("--profiles", profiles_path, "profile JSONL or a journal pool.json")->required();
    curriculum->add_option("--tasks", tasks_path, "task JSONL")->required();
    curriculum->add_option("--out", out_dir, "output directory")->required();
    curriculum->add_option("--bin-size", bin_size, "items per bin (default 2000)");
    curriculum->add_option("--rollouts", rollouts, "rollouts per task behind the counts")->check(CLI::PositiveNumber);

    // export-sft
    std::string journal_dir, out_path;
    auto* export_sft = app.add_subcommand("export-sft", "concatenate kept trajectories of every journal round");
    export_sft->add_option("--journal", journal_dir, "journal directory")->required()->check(CLI::ExistingDirectory);
    export_sft->add_option("--out", out_path, "output JSONL (default stdout)");

    // score
    std::string trajectories_path, weights_path;
    auto* score = app.add_subcommand("score", "reward breakdown for each trajectory");
    score->add_option("--trajectories", trajectories_path, "trajectory JSONL")->required();
    score->add_option("--tasks", tasks_path, "task JSONL")->required();
    score->add_option("--registry", registry_path, "database manifest")->required();
    score->add_option("--weights", weights_path, "reward weights JSON");
    score->add_option("--out", out_path, "output JSONL (default stdout)");

    // advantages
    std::string rollouts_path;
    double eps = grpo::kDefaultEpsilon;
    auto* advantages = app.add_subcommand("advantages", "group-relative advantages and loss masks for rollouts");
    advantages->add_option("--rollouts", rollouts_path, "rollout JSONL (raw.jsonl of a journal round)")->required();
    advantages->add_option("--eps", eps, "std floor");
    advantages->add_option("--out", out_path, "output JSONL (default stdout)");

    // serve
    int port = -1;
    auto* serve = app.add_subcommand("serve", "reset/step environment service over HTTP");
    serve->add_option("--config", config_path, "run config JSON")->required();
    serve->add_option("--port", port, "override service.port (0 picks a free port)");

    // build-db
    std::string sql_dir;
    auto* build_db = app.add_subcommand("build-db", "materialise <id>.sql scripts into SQLite files and a manifest");
    build_db->add_option("--sql-dir", sql_dir, "directory of .sql scripts")->required()->check(CLI::ExistingDirectory);
    build_db->add_option("--out", out_dir, "output directory")->required();

    // record-pack
    std::string case_path, traj_out;
    auto* record = app.add_subcommand("record-pack", "turn a transcript fixture into a scripted-policy pack");
    record->add_option("--case", case_path, "JSON {task, emissions}")->required();
    record->add_option("--registry", registry_path, "database manifest")->required();
    record->add_option("--out", out_path, "pack JSONL")->required();
    record->add_option("--trajectory", traj_out, "also write the replayed trajectory JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*eval) {
            const auto registry = db::Registry::load(registry_path);
            const auto report = service::evaluate(episode::load_tasks(tasks_path),
                                                  service::load_predictions(predictions_path), registry);
            if (!json_out.empty()) text::write_file(json_out, report.to_json().dump(2) + "\n");
            std::cout << (format == "json" ? report.to_json().dump(2) + "\n" : report.table());
        } else if (*collect) {
            const auto config = service::RunConfig::load(config_path);
            const auto registry = db::Registry::load(config.registry);
            const auto tasks = episode::load_tasks(config.tasks);
            auto policy = service::make_policy(config.policy);
            auto options = config.warm_start_options();
            options.rounds = round;
            const auto result = pipeline::run_warm_start(tasks, *policy, registry, options, config.journal);
            std::size_t cumulative = 0;
            for (const auto& r : result.rounds) {
                cumulative += r.solved;
                std::cout << "round " << r.round + 1 << (r.resumed ? " (journal)" : "") << ": pool " << r.pool_size
                          << " raw " << r.attempted << " valid " << r.valid << " kept " << r.kept << " solved "
                          << r.solved << " skipped " << r.skipped << " coverage " << cumulative << "/"
                          << tasks.size() << "\n";
            }
        } else if (*curriculum) {
            std::map<std::string, episode::DialogueTask> by_id;
            for (auto& t : episode::load_tasks(tasks_path)) by_id.emplace(t.task_id, std::move(t));
            const auto bins = pipeline::curriculum_bins(read_profiles(profiles_path), bin_size ? bin_size : 2000, rollouts);
            for (const auto& p : pipeline::write_curriculum(bins, by_id, out_dir)) std::cout << p.string() << "\n";
        } else if (*export_sft) {
            std::string out;
            for (int r = 0; fs::exists(fs::path(journal_dir) / ("round_" + std::to_string(r))); ++r) {
                const auto kept = fs::path(journal_dir) / ("round_" + std::to_string(r)) / "kept.jsonl";
                if (!fs::exists(kept)) throw SchemaMismatch(kept.string() + " is missing; round incomplete?");
                // Round-trip through the store so malformed records are caught here.
                out += pipeline::export_sft(pipeline::import_sft(text::read_file(kept)));
            }
            emit(out_path, out);
        } else if (*score) {
            const auto registry = db::Registry::load(registry_path);
            reward::RewardWeights w;
            if (!weights_path.empty()) w = reward::RewardWeights::from_json(json::parse(text::read_file(weights_path)));
            std::string out;
            for (const auto& j : service::score_trajectories(text::read_lines(trajectories_path),
                                                             episode::load_tasks(tasks_path), registry, w))
                out += j.dump() + "\n";
            emit(out_path, out);
        } else if (*advantages) {
            std::map<std::string, std::vector<pipeline::Rollout>> groups;
            for (const auto& line : text::read_lines(rollouts_path)) {
                auto r = pipeline::Rollout::from_json(json::parse(line));
                groups[r.task_id].push_back(std::move(r));
            }
            std::string out;
            for (const auto& [task_id, group] : groups) {
                std::vector<double> rewards;
                for (const auto& r : group) rewards.push_back(r.reward.total);
                if (group.size() < 2) {
                    spdlog::warn("task {}: group of {} skipped", task_id, group.size());
                    continue;
                }
                const auto adv = grpo::group_advantages(rewards, eps);
                for (std::size_t i = 0; i < group.size(); ++i)
                    out += grpo::export_row(group[i].trajectory.trajectory_id, adv[i],
                                            grpo::build_loss_mask(group[i].trajectory))
                               .dump() +
                           "\n";
            }
            emit(out_path, out);
        } else if (*serve) {
            const auto config = service::RunConfig::load(config_path);
            const auto registry = db::Registry::load(config.registry);
            service::EnvService env(registry, episode::load_tasks(config.tasks), config.limits, config.weights,
                                    std::chrono::seconds(config.service.idle_timeout_s));
            service::HttpFrontend http(env, config.service.workers);
            const int bound = http.bind(config.service.host, port >= 0 ? port : config.service.port);
            std::cout << "serving on http://" << config.service.host << ":" << bound << "/v1/env" << std::endl;
            g_server = &http;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            http.run();
            g_server = nullptr;
        } else if (*build_db) {
            std::cout << db::materialize_sql_dir(sql_dir, out_dir).string() << "\n";
        } else if (*record) {
            const auto fixture = json::parse(text::read_file(case_path));
            const auto task = episode::DialogueTask::from_json(fixture.at("task"));
            const auto emissions = fixture.at("emissions").get<std::vector<std::string>>();
            const auto registry = db::Registry::load(registry_path);
            const auto fixtures = episode::record_fixtures(emissions, task, registry, {});
            policy::write_pack(out_path, fixtures);
            if (!traj_out.empty()) {
                policy::ScriptedPolicy scripted(fixtures);
                const auto traj = episode::run_episode(scripted, task, registry, {});
                text::write_file(traj_out, traj.to_json().dump(2) + "\n");
            }
        }
    } catch (const Error& e) {
        spdlog::error("{}: {}", e.code(), e.what());
        return is_validation(e) ? kValidation : kRuntime;
    } catch (const json::exception& e) {
        spdlog::error("malformed JSON input: {}", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kRuntime;
    }
    return kOk;
}
