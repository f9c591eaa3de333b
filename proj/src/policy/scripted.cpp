#include "sqlenv/policy/policy.hpp"

#include "sqlenv/util/error.hpp"
#include "sqlenv/util/text.hpp"

namespace sqlenv::policy {

std::string to_string(Finish f) {
    switch (f) {
        case Finish::StopMarker: return "stop_marker";
        case Finish::Budget: return "budget";
        case Finish::EndpointEnd: return "endpoint_end";
    }
    return "endpoint_end";
}

GenerationResult truncate_generation(std::string_view text, const std::vector<std::string>& stop_markers,
                                     std::size_t max_new) {
    GenerationResult r;
    r.finish = Finish::EndpointEnd;
    std::size_t cut = std::string_view::npos;
    for (const auto& m : stop_markers) {
        if (m.empty()) continue;
        auto p = text.find(m);
        if (p != std::string_view::npos && (cut == std::string_view::npos || p + m.size() < cut)) cut = p + m.size();
    }
    if (cut != std::string_view::npos) {
        text = text.substr(0, cut);
        r.finish = Finish::StopMarker;
    }
    if (text::codepoints(text) > max_new) {
        text = text::take_codepoints(text, max_new);
        r.finish = Finish::Budget;
    }
    r.text = std::string(text);
    r.usage = text::codepoints(r.text);
    return r;
}

std::string conversation_key(const std::vector<Message>& messages) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& m : messages) {
        h = text::fnv1a64(m.role, h);
        h = text::fnv1a64(std::string_view("\x1f", 1), h);
        h = text::fnv1a64(text::collapse_whitespace(m.text), h);
        h = text::fnv1a64(std::string_view("\x1e", 1), h);
    }
    return text::hex64(h);
}

ScriptedPolicy::ScriptedPolicy(const Fixtures& fixtures, std::optional<std::string> default_continuation)
    : default_(std::move(default_continuation)) {
    for (const auto& [key, conts] : fixtures) {
        if (table_.count(key)) throw DuplicateKey("fixture key '" + key + "' appears twice");
        if (conts.empty()) throw ConfigError("fixture key '" + key + "' has no continuations");
        table_[key] = Entry{conts, 0};
    }
}

ScriptedPolicy ScriptedPolicy::from_pack(const std::filesystem::path& pack,
                                         std::optional<std::string> default_continuation) {
    return ScriptedPolicy(read_pack(pack), std::move(default_continuation));
}

GenerationResult ScriptedPolicy::generate(const GenerationRequest& request) {
    if (request.messages.empty()) throw PolicyUnavailable("empty conversation");
    const auto key = conversation_key(request.messages);
    std::string text;
    {
        std::lock_guard lock(mu_);
        auto it = table_.find(key);
        if (it == table_.end()) {
            if (!default_) throw PolicyUnavailable("no scripted continuation for conversation " + key);
            text = *default_;
        } else {
            auto& e = it->second;
            if (request.seed) {
                text = e.continuations[*request.seed % e.continuations.size()];
            } else {
                text = e.continuations[e.next % e.continuations.size()];
                ++e.next;
            }
        }
    }
    return truncate_generation(text, request.stop_markers, request.max_new);
}

void write_pack(const std::filesystem::path& path, const ScriptedPolicy::Fixtures& fixtures) {
    std::string out;
    for (const auto& [key, conts] : fixtures) out += json{{"key", key}, {"continuations", conts}}.dump() + "\n";
    text::write_file(path, out);
}

ScriptedPolicy::Fixtures read_pack(const std::filesystem::path& path) {
    ScriptedPolicy::Fixtures out;
    for (const auto& line : text::read_lines(path)) {
        try {
            auto j = json::parse(line);
            out.emplace_back(j.at("key").get<std::string>(), j.at("continuations").get<std::vector<std::string>>());
        } catch (const json::exception& e) {
            throw SchemaMismatch(path.string() + ": " + e.what());
        }
    }
    return out;
}

GenerationResult SequencePolicy::generate(const GenerationRequest& request) {
    if (next_ >= continuations_.size()) throw PolicyUnavailable("transcript exhausted");
    const auto key = conversation_key(request.messages);
    const auto& text = continuations_[next_++];
    bool merged = false;
    for (auto& [k, conts] : recorded_)
        if (k == key) {
            conts.push_back(text);
            merged = true;
        }
    if (!merged) recorded_.push_back({key, {text}});
    return truncate_generation(text, request.stop_markers, request.max_new);
}

}  // namespace sqlenv::policy
