#include "sqlenv/episode/task.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <set>

namespace sqlenv::episode {

json DialogueTask::to_json() const {
    json hist = json::array();
    for (const auto& h : history) hist.push_back({{"question", h.question}, {"gold_sql", h.gold_sql}});
    return {{"task_id", task_id},       {"dialogue_id", dialogue_id}, {"db_id", db_id},   {"turn_index", turn_index},
            {"question", question},     {"gold_sql", gold_sql},       {"history", hist}};
}

DialogueTask DialogueTask::from_json(const json& j) {
    static const std::set<std::string> known = {"task_id", "dialogue_id", "db_id",  "turn_index",
                                                "question", "gold_sql",   "history"};
    DialogueTask t;
    try {
        for (const auto& [k, _] : j.items())
            if (!known.count(k)) throw SchemaMismatch("unknown task field '" + k + "'");
        t.dialogue_id = j.at("dialogue_id").get<std::string>();
        t.db_id = j.at("db_id").get<std::string>();
        t.turn_index = j.at("turn_index").get<int>();
        t.question = j.at("question").get<std::string>();
        t.gold_sql = j.at("gold_sql").get<std::string>();
        for (const auto& h : j.value("history", json::array()))
            t.history.push_back({h.at("question").get<std::string>(), h.at("gold_sql").get<std::string>()});
        t.task_id = j.value("task_id", t.dialogue_id + "#" + std::to_string(t.turn_index));
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad task record: ") + e.what());
    }
    return t;
}

std::vector<DialogueTask> load_tasks(const std::filesystem::path& path) {
    std::vector<DialogueTask> tasks;
    std::set<std::string> ids;
    for (const auto& line : text::read_lines(path)) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaMismatch(path.string() + ": " + e.what());
        }
        auto t = DialogueTask::from_json(j);
        if (!ids.insert(t.task_id).second) throw SchemaMismatch("duplicate task id '" + t.task_id + "'");
        tasks.push_back(std::move(t));
    }
    return tasks;
}

void save_tasks(const std::filesystem::path& path, const std::vector<DialogueTask>& tasks) {
    std::string out;
    for (const auto& t : tasks) out += t.to_json().dump() + "\n";
    text::write_file(path, out);
}

}  // namespace sqlenv::episode
