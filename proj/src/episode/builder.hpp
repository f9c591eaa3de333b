#pragma once

#include "sqlenv/episode/episode.hpp"

namespace sqlenv::episode::detail {

/// Turns tags into actions on top of an existing action list.
class ActionBuilder {
public:
    explicit ActionBuilder(std::vector<Action>& actions) : actions_(actions) {}

    void think(const std::string& body) { thought_ += body; }
    void exec_verdict(Verdict v);
    void memory_verdict(Verdict v);
    /// Settles an implicit verdict before a tool call or answer.
    void infer_before(TagKind next, std::string_view tool_name = {});
    /// Appends PROPOSE|SELF_CORRECT + EXECUTE, or an M_VERIFY request.
    void tool(std::string_view tool_name, const std::string& code);
    void answer(const std::string& sql);

    /// Index of the first action appended by this builder.
    std::size_t start() const { return start_; }

private:
    void push(Action a);

    std::vector<Action>& actions_;
    std::size_t start_ = actions_.size();
    std::string thought_;
};

}  // namespace sqlenv::episode::detail
