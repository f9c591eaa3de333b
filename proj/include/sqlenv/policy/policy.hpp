#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace sqlenv::policy {

using nlohmann::json;

struct Message {
    std::string role;  ///< system | user | assistant | tool
    std::string text;
};

enum class Finish { StopMarker, Budget, EndpointEnd };

std::string to_string(Finish f);

struct GenerationRequest {
    std::vector<Message> messages;
    double temperature = 0.7;
    std::size_t max_new = 8000;  ///< codepoints
    std::vector<std::string> stop_markers;
    std::optional<std::uint64_t> seed;  ///< rollout index; picks among scripted continuations
};

struct GenerationResult {
    std::string text;
    Finish finish = Finish::EndpointEnd;
    std::size_t usage = 0;  ///< generated codepoints
};

/// Cuts `text` after the first stop marker (marker kept) and then to
/// `max_new` codepoints. `finish` reports which limit applied.
GenerationResult truncate_generation(std::string_view text, const std::vector<std::string>& stop_markers,
                                     std::size_t max_new);

/// Stable key of a conversation: FNV-1a over role and whitespace-collapsed text.
std::string conversation_key(const std::vector<Message>& messages);

class Policy {
public:
    virtual ~Policy() = default;
    /// Throws PolicyUnavailable on any backend failure.
    virtual GenerationResult generate(const GenerationRequest& request) = 0;
};

/// Replays fixed continuations keyed by conversation. A request seed selects
/// continuation seed % count; without a seed, repeated calls with the same key
/// cycle through the list.
class ScriptedPolicy : public Policy {
public:
    using Fixtures = std::vector<std::pair<std::string, std::vector<std::string>>>;

    /// Throws DuplicateKey when a key appears twice.
    explicit ScriptedPolicy(const Fixtures& fixtures, std::optional<std::string> default_continuation = std::nullopt);

    static ScriptedPolicy from_pack(const std::filesystem::path& pack,
                                    std::optional<std::string> default_continuation = std::nullopt);

    GenerationResult generate(const GenerationRequest& request) override;

    std::size_t size() const { return table_.size(); }

private:
    struct Entry {
        std::vector<std::string> continuations;
        std::size_t next = 0;
    };
    std::map<std::string, Entry> table_;
    std::optional<std::string> default_;
    std::mutex mu_;
};

/// Fixture pack lines: {"key": ..., "continuations": [...]}.
void write_pack(const std::filesystem::path& path, const ScriptedPolicy::Fixtures& fixtures);
ScriptedPolicy::Fixtures read_pack(const std::filesystem::path& path);

/// Returns continuations in order regardless of conversation, and records the
/// key each one was served under. Used to turn transcripts into packs.
class SequencePolicy : public Policy {
public:
    explicit SequencePolicy(std::vector<std::string> continuations) : continuations_(std::move(continuations)) {}

    GenerationResult generate(const GenerationRequest& request) override;

    const ScriptedPolicy::Fixtures& recorded() const { return recorded_; }

private:
    std::vector<std::string> continuations_;
    std::size_t next_ = 0;
    ScriptedPolicy::Fixtures recorded_;
};

struct RemoteConfig {
    std::string url;    ///< http://host[:port]/path
    std::string token;  ///< bearer token, empty for none
    std::chrono::milliseconds timeout{60000};
    int retries = 1;
    std::size_t max_inflight = 8;
};

/// Reads POLICY_URL / POLICY_TOKEN from the environment.
RemoteConfig remote_config_from_env();

/// Chat-completions style client: POST {messages, temperature, max_tokens, stop}
/// and read {"text"} or {"choices":[{"message":{"content"}}|{"text"}]}.
class RemotePolicy : public Policy {
public:
    explicit RemotePolicy(RemoteConfig config);

    GenerationResult generate(const GenerationRequest& request) override;

private:
    RemoteConfig config_;
    std::string scheme_host_;
    std::string path_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t inflight_ = 0;
};

}  // namespace sqlenv::policy
