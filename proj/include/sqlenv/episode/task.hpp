#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace sqlenv::episode {

using nlohmann::json;

struct HistoryTurn {
    std::string question;
    std::string gold_sql;
};

/// One turn of a conversation to be answered.
struct DialogueTask {
    std::string task_id;
    std::string dialogue_id;
    std::string db_id;
    int turn_index = 0;
    std::string question;
    std::string gold_sql;
    std::vector<HistoryTurn> history;

    json to_json() const;
    static DialogueTask from_json(const json& j);
};

std::vector<DialogueTask> load_tasks(const std::filesystem::path& path);
void save_tasks(const std::filesystem::path& path, const std::vector<DialogueTask>& tasks);

}  // namespace sqlenv::episode
