#include "builder.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

#include <array>

namespace sqlenv::episode {

namespace {

struct TagName {
    TagKind kind;
    std::string_view open;
    std::string_view close;
};

constexpr std::array<TagName, 5> kTags = {{
    {TagKind::Think, "<think>", "</think>"},
    {TagKind::ToolCall, "<tool_call>", "</tool_call>"},
    {TagKind::ExecVerify, "<exec_verify>", "</exec_verify>"},
    {TagKind::MemoryVerify, "<memory_verify>", "</memory_verify>"},
    {TagKind::Answer, "<answer_sql>", "</answer_sql>"},
}};

// Earliest opening tag at or after `from`, optionally skipping <think>.
std::pair<std::size_t, const TagName*> next_open(std::string_view s, std::size_t from, bool skip_think) {
    std::size_t best = std::string_view::npos;
    const TagName* which = nullptr;
    for (const auto& t : kTags) {
        if (skip_think && t.kind == TagKind::Think) continue;
        auto p = s.find(t.open, from);
        if (p < best) {
            best = p;
            which = &t;
        }
    }
    return {best, which};
}

std::string verdict_word(std::string_view body, std::string_view tag) {
    auto w = text::to_lower(text::trim(body));
    if (w != "pass" && w != "no_pass" && w != "fail")
        throw TagParseError("<" + std::string(tag) + "> holds '" + std::string(text::trim(body)) + "'");
    return w;
}

}  // namespace

std::vector<Tag> parse_tags(std::string_view s) {
    std::vector<Tag> out;
    std::size_t pos = 0;
    while (true) {
        auto [at, tag] = next_open(s, pos, false);
        if (!tag) break;
        const std::size_t body_start = at + tag->open.size();
        auto close = s.find(tag->close, body_start);
        std::string_view body;
        if (close == std::string_view::npos) {
            if (tag->kind != TagKind::Think)
                throw TagParseError("unclosed " + std::string(tag->open) + " at offset " + std::to_string(at));
            auto [next, _] = next_open(s, body_start, true);
            const std::size_t end = next == std::string_view::npos ? s.size() : next;
            body = s.substr(body_start, end - body_start);
            pos = end;
        } else {
            body = s.substr(body_start, close - body_start);
            pos = close + tag->close.size();
        }

        Tag t{tag->kind, std::string(body), ""};
        switch (tag->kind) {
            case TagKind::ToolCall: {
                json j;
                try {
                    j = json::parse(text::trim(body));
                } catch (const json::exception& e) {
                    throw TagParseError(std::string("tool_call is not valid JSON: ") + e.what());
                }
                if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
                    throw TagParseError("tool_call lacks a string \"name\"");
                t.tool_name = j["name"].get<std::string>();
                if (t.tool_name != kExecTool && t.tool_name != kMemoryTool)
                    throw TagParseError("unknown tool '" + t.tool_name + "'");
                auto args = j.value("arguments", json::object());
                if (args.is_string()) {
                    try {
                        args = json::parse(args.get<std::string>());
                    } catch (const json::exception&) {
                        throw TagParseError("tool_call arguments string is not JSON");
                    }
                }
                if (!args.is_object() || !args.contains("code") || !args["code"].is_string())
                    throw TagParseError("tool_call lacks a string \"code\" argument");
                t.body = args["code"].get<std::string>();
                break;
            }
            case TagKind::ExecVerify: t.body = verdict_word(body, "exec_verify"); break;
            case TagKind::MemoryVerify: t.body = verdict_word(body, "memory_verify"); break;
            case TagKind::Answer: t.body = std::string(text::trim(body)); break;
            case TagKind::Think: break;
        }
        out.push_back(std::move(t));
    }
    return out;
}

namespace detail {

void ActionBuilder::push(Action a) {
    a.thought = std::move(thought_);
    thought_.clear();
    actions_.push_back(std::move(a));
}

void ActionBuilder::exec_verdict(Verdict v) {
    push(Action{ActionKind::EVerify, std::nullopt, v, "", false, std::nullopt});
}

void ActionBuilder::memory_verdict(Verdict v) {
    if (!actions_.empty() && actions_.back().kind == ActionKind::MVerify && !actions_.back().verdict) {
        actions_.back().verdict = v;
        return;
    }
    push(Action{ActionKind::MVerify, std::nullopt, v, "", false, std::nullopt});
}

void ActionBuilder::infer_before(TagKind next, std::string_view tool_name) {
    if (actions_.empty()) return;
    auto& last = actions_.back();
    const bool exec_next = next == TagKind::ToolCall && tool_name == kExecTool;
    if (last.kind == ActionKind::Execute) {
        push(Action{ActionKind::EVerify, std::nullopt, exec_next ? Verdict::Fail : Verdict::Pass, "", true,
                    std::nullopt});
    } else if (last.kind == ActionKind::MVerify && !last.verdict) {
        if (exec_next) {
            last.verdict = Verdict::Fail;
        } else if (next == TagKind::Answer) {
            last.verdict = Verdict::Pass;
        } else {
            return;
        }
        last.inferred = true;
    }
}

void ActionBuilder::tool(std::string_view tool_name, const std::string& code) {
    if (tool_name == kExecTool) {
        push(Action{actions_.empty() ? ActionKind::Propose : ActionKind::SelfCorrect, code, std::nullopt, "", false,
                    std::nullopt});
        push(Action{ActionKind::Execute, code, std::nullopt, "", false, std::nullopt});
    } else {
        push(Action{ActionKind::MVerify, code, std::nullopt, "", false, std::nullopt});
    }
}

void ActionBuilder::answer(const std::string& sql) {
    push(Action{ActionKind::Finalize, sql, std::nullopt, "", false, std::nullopt});
}

}  // namespace detail

std::vector<Action> parse_model_output(std::string_view text) {
    std::vector<Action> actions;
    detail::ActionBuilder b(actions);
    for (const auto& tag : parse_tags(text)) {
        switch (tag.kind) {
            case TagKind::Think: b.think(tag.body); break;
            case TagKind::ExecVerify: b.exec_verdict(verdict_from_string(tag.body)); break;
            case TagKind::MemoryVerify: b.memory_verdict(verdict_from_string(tag.body)); break;
            case TagKind::ToolCall:
                b.infer_before(tag.kind, tag.tool_name);
                b.tool(tag.tool_name, tag.body);
                break;
            case TagKind::Answer:
                b.infer_before(tag.kind);
                b.answer(tag.body);
                break;
        }
    }
    return actions;
}

}  // namespace sqlenv::episode
