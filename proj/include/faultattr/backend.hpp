#pragma once

// Chat-completion abstraction shared by every attribution method: request and
// response values, a scripted backend for offline runs, transcript recording
// and replay, and a client that enforces the context budget and in-flight cap.

#include "error.hpp"
#include "trace.hpp"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace faultattr {

enum class Role { system, user, assistant };

inline std::string_view to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

inline Role role_from_string(std::string_view name) {
    if (name == "system") return Role::system;
    if (name == "assistant") return Role::assistant;
    if (name == "user") return Role::user;
    throw Error(ErrorCode::malformed_response, "unknown role '" + std::string(name) + "'");
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::size_t max_output_tokens = 4096;
    double temperature = 0.0;
    std::string model_id;
    std::string record_id;
    std::string tag;   // pipeline stage, e.g. "raffles/judge/iter=1"

    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

struct ChatResponse {
    std::string text;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    std::int64_t latency_ms = 0;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(4),
                                                   std::chrono::seconds(16)};
};

struct BackendConfig {
    std::string endpoint_url;
    std::string credential_env;     // name of the variable holding the bearer token
    std::string model_id;
    std::size_t context_limit_tokens = 128000;
    std::size_t max_output_tokens = 4096;
    RetryPolicy retry;
    int timeout_s = 600;
    std::size_t max_in_flight = 4;
    Json extra = Json::object();    // passed through verbatim, e.g. {"reasoning_effort": "low"}
};

/// Context profiles for the model settings used in the experiments.
inline BackendConfig profile_128k() { return BackendConfig{}; }
inline BackendConfig profile_64k() {
    BackendConfig config;
    config.context_limit_tokens = 64000;
    return config;
}

inline std::size_t estimate_prompt_tokens(const std::vector<ChatMessage>& messages, const TokenCounter& counter) {
    std::size_t total = 0;
    for (const auto& m : messages) total += counter(m.content);
    return total;
}

inline Json to_json(const ChatRequest& request) {
    Json messages = Json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return {{"model", request.model_id},
            {"messages", std::move(messages)},
            {"max_tokens", request.max_output_tokens},
            {"temperature", request.temperature}};
}

inline ChatRequest request_from_json(const Json& doc) {
    ChatRequest request;
    request.model_id = doc.value("model", std::string());
    request.max_output_tokens = doc.value("max_tokens", std::size_t{4096});
    request.temperature = doc.value("temperature", 0.0);
    for (const auto& m : doc.value("messages", Json::array()))
        request.messages.push_back({role_from_string(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    return request;
}

/// Transport for one request; implementations may be called concurrently.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse send(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Pre-authored responses keyed by (record_id, tag). Unknown keys are errors.
class ScriptedBackend : public ChatBackend {
public:
    using Key = std::pair<std::string, std::string>;

    ScriptedBackend() = default;
    explicit ScriptedBackend(std::map<Key, std::string> script) : script_(std::move(script)) {}

    void add(std::string record_id, std::string tag, std::string text) {
        Key key{std::move(record_id), std::move(tag)};
        if (script_.contains(key))
            throw Error(ErrorCode::config_invalid, "duplicate script entry " + key.first + " / " + key.second);
        script_.emplace(std::move(key), std::move(text));
    }

    std::size_t size() const noexcept { return script_.size(); }

    ChatResponse send(const ChatRequest& request) override {
        auto it = script_.find({request.record_id, request.tag});
        if (it == script_.end())
            throw Error(ErrorCode::missing_script_entry, request.record_id + " / " + request.tag);
        ChatResponse response;
        response.text = it->second;
        response.completion_tokens = approx_token_count(response.text);
        return response;
    }

    std::string name() const override { return "scripted"; }

    /// One {"record_id", "tag", "text"} object per line.
    static ScriptedBackend from_jsonl(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::io_error, "cannot open script " + path.string());
        ScriptedBackend backend;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            Json doc = Json::parse(line, nullptr, false);
            if (doc.is_discarded() || !doc.is_object())
                throw Error(ErrorCode::config_invalid, path.string() + ":" + std::to_string(line_no) + " is not JSON");
            backend.add(doc.at("record_id").get<std::string>(), doc.at("tag").get<std::string>(),
                        doc.at("text").get<std::string>());
        }
        return backend;
    }

private:
    std::map<Key, std::string> script_;
};

struct TranscriptEntry {
    std::string run_id;
    std::string record_id;
    std::string tag;
    ChatRequest request;
    ChatResponse response;
    std::string timestamp;
};

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    auto secs = std::chrono::floor<std::chrono::seconds>(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - secs).count();
    std::time_t tt = std::chrono::system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
    return out;
}

inline Json to_json(const TranscriptEntry& e) {
    return {{"run_id", e.run_id},
            {"record_id", e.record_id},
            {"tag", e.tag},
            {"request", to_json(e.request)},
            {"response",
             {{"text", e.response.text},
              {"prompt_tokens", e.response.prompt_tokens},
              {"completion_tokens", e.response.completion_tokens},
              {"latency_ms", e.response.latency_ms}}},
            {"timestamp", e.timestamp}};
}

inline TranscriptEntry transcript_entry_from_json(const Json& doc) {
    TranscriptEntry e;
    e.run_id = doc.value("run_id", std::string());
    e.record_id = doc.at("record_id").get<std::string>();
    e.tag = doc.at("tag").get<std::string>();
    e.request = request_from_json(doc.at("request"));
    e.request.record_id = e.record_id;
    e.request.tag = e.tag;
    const Json& r = doc.at("response");
    e.response.text = r.at("text").get<std::string>();
    e.response.prompt_tokens = r.value("prompt_tokens", std::size_t{0});
    e.response.completion_tokens = r.value("completion_tokens", std::size_t{0});
    e.response.latency_ms = r.value("latency_ms", std::int64_t{0});
    e.timestamp = doc.value("timestamp", std::string());
    return e;
}

/// Append-only exchange log; optionally mirrored line by line to a file.
class Transcript {
public:
    explicit Transcript(std::string run_id = {}) : run_id_(std::move(run_id)) {}

    void open_sink(const std::filesystem::path& path, bool append) {
        std::lock_guard lock(mutex_);
        sink_.open(path, append ? std::ios::app : std::ios::trunc);
        if (!sink_) throw Error(ErrorCode::io_error, "cannot open transcript " + path.string());
    }

    void append(const ChatRequest& request, const ChatResponse& response) {
        TranscriptEntry entry{run_id_, request.record_id, request.tag, request, response, utc_timestamp()};
        std::lock_guard lock(mutex_);
        if (sink_.is_open()) {
            sink_ << to_json(entry).dump() << '\n';
            sink_.flush();
        }
        entries_.push_back(std::move(entry));
    }

    std::vector<TranscriptEntry> entries() const {
        std::lock_guard lock(mutex_);
        return entries_;
    }

    const std::string& run_id() const noexcept { return run_id_; }

    static std::vector<TranscriptEntry> read_jsonl(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::io_error, "cannot open transcript " + path.string());
        std::vector<TranscriptEntry> entries;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            Json doc = Json::parse(line, nullptr, false);
            if (doc.is_discarded()) continue;   // torn final line from an interrupted run
            entries.push_back(transcript_entry_from_json(doc));
        }
        return entries;
    }

private:
    std::string run_id_;
    mutable std::mutex mutex_;
    std::vector<TranscriptEntry> entries_;
    std::ofstream sink_;
};

/// Serves recorded responses; never touches the network.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(const std::vector<TranscriptEntry>& entries) {
        for (const auto& e : entries) responses_[{e.record_id, e.tag}] = e.response;
    }

    ChatResponse send(const ChatRequest& request) override {
        auto it = responses_.find({request.record_id, request.tag});
        if (it == responses_.end())
            throw Error(ErrorCode::missing_script_entry, "not in transcript: " + request.record_id + " / " + request.tag);
        return it->second;
    }

    std::string name() const override { return "replay"; }

private:
    std::map<std::pair<std::string, std::string>, ChatResponse> responses_;
};

/// Front door for every LLM call: context pre-flight, bounded concurrency,
/// transcript recording.
class LlmClient {
public:
    LlmClient(BackendConfig config, ChatBackend& backend, Transcript* transcript = nullptr,
              TokenCounter counter = default_token_counter())
        : config_(std::move(config)), backend_(backend), transcript_(transcript), counter_(std::move(counter)) {}

    ChatResponse complete(ChatRequest request) {
        const auto estimate = estimate_prompt_tokens(request.messages, counter_);
        if (estimate > config_.context_limit_tokens)
            throw Error(ErrorCode::context_overflow, request.record_id + " / " + request.tag + ": ~" +
                                                         std::to_string(estimate) + " prompt tokens exceed limit " +
                                                         std::to_string(config_.context_limit_tokens));
        if (request.model_id.empty()) request.model_id = config_.model_id;
        acquire();
        ChatResponse response;
        try {
            const auto start = std::chrono::steady_clock::now();
            response = backend_.send(request);
            if (response.latency_ms == 0)
                response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - start)
                                          .count();
        } catch (...) {
            release();
            throw;
        }
        release();
        if (response.prompt_tokens == 0) response.prompt_tokens = estimate;
        if (transcript_) transcript_->append(request, response);
        return response;
    }

    const BackendConfig& config() const noexcept { return config_; }
    const TokenCounter& counter() const noexcept { return counter_; }

private:
    void acquire() {
        std::unique_lock lock(mutex_);
        const auto cap = std::max<std::size_t>(1, config_.max_in_flight);
        cv_.wait(lock, [&] { return in_flight_ < cap; });
        ++in_flight_;
    }
    void release() {
        {
            std::lock_guard lock(mutex_);
            --in_flight_;
        }
        cv_.notify_one();
    }

    BackendConfig config_;
    ChatBackend& backend_;
    Transcript* transcript_;
    TokenCounter counter_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
};

} // namespace faultattr
