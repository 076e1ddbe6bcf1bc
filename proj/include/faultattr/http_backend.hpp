#pragma once

// OpenAI-compatible chat-completions transport (POST {endpoint}/chat/completions).

#include "backend.hpp"
#include "error.hpp"

#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>

namespace faultattr {

class OpenAICompatibleBackend : public ChatBackend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit OpenAICompatibleBackend(BackendConfig config,
                                     Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : config_(std::move(config)), sleeper_(std::move(sleeper)) {
        split_endpoint(config_.endpoint_url);
    }

    std::string name() const override { return "openai-compatible"; }

    /// Request body as sent on the wire; extra parameters are merged last.
    Json build_body(const ChatRequest& request) const {
        Json body = to_json(request);
        if (body["model"].get<std::string>().empty()) body["model"] = config_.model_id;
        for (auto it = config_.extra.begin(); it != config_.extra.end(); ++it) body[it.key()] = it.value();
        return body;
    }

    ChatResponse send(const ChatRequest& request) override {
        const std::string body = build_body(request).dump();
        httplib::Headers headers;
        if (!config_.credential_env.empty()) {
            if (const char* token = std::getenv(config_.credential_env.c_str()); token && *token)
                headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        const int attempts = std::max(1, config_.retry.max_attempts);
        std::string last_error;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                const auto& schedule = config_.retry.backoff;
                if (!schedule.empty())
                    sleeper_(schedule[std::min<std::size_t>(static_cast<std::size_t>(attempt - 1), schedule.size() - 1)]);
            }
            httplib::Client client(origin_);
            client.set_connection_timeout(std::chrono::seconds(std::min(config_.timeout_s, 30)));
            client.set_read_timeout(std::chrono::seconds(config_.timeout_s));
            client.set_write_timeout(std::chrono::seconds(config_.timeout_s));
            const auto start = std::chrono::steady_clock::now();
            auto result = client.Post(base_path_ + "/chat/completions", headers, body, "application/json");
            const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                                     std::chrono::steady_clock::now() - start)
                                     .count();
            if (!result) {
                last_error = "connection failed: " + httplib::to_string(result.error());
                continue;
            }
            if (result->status == 429 || result->status >= 500) {
                last_error = "HTTP " + std::to_string(result->status);
                continue;
            }
            if (result->status != 200)
                throw Error(ErrorCode::transport_error,
                            "HTTP " + std::to_string(result->status) + ": " + result->body.substr(0, 500));
            return parse_response(result->body, latency);
        }
        throw Error(ErrorCode::transport_error,
                    "giving up after " + std::to_string(attempts) + " attempts: " + last_error);
    }

    static ChatResponse parse_response(const std::string& body, std::int64_t latency_ms = 0) {
        Json doc = Json::parse(body, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::malformed_response, "body is not JSON");
        const auto choices = doc.find("choices");
        if (choices == doc.end() || !choices->is_array() || choices->empty())
            throw Error(ErrorCode::malformed_response, "no choices");
        const Json& message = (*choices)[0].value("message", Json::object());
        if (!message.contains("content") || !message["content"].is_string())
            throw Error(ErrorCode::malformed_response, "first choice has no text content");
        ChatResponse response;
        response.text = message["content"].get<std::string>();
        if (response.text.empty()) throw Error(ErrorCode::malformed_response, "empty completion text");
        if (auto usage = doc.find("usage"); usage != doc.end() && usage->is_object()) {
            response.prompt_tokens = usage->value("prompt_tokens", std::size_t{0});
            response.completion_tokens = usage->value("completion_tokens", std::size_t{0});
        }
        response.latency_ms = latency_ms;
        return response;
    }

private:
    void split_endpoint(const std::string& url) {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos)
            throw Error(ErrorCode::config_invalid, "endpoint_url needs a scheme: '" + url + "'");
        const auto path_start = url.find('/', scheme_end + 3);
        origin_ = url.substr(0, path_start);
        base_path_ = path_start == std::string::npos ? std::string() : url.substr(path_start);
        while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
    }

    BackendConfig config_;
    Sleeper sleeper_;
    std::string origin_;
    std::string base_path_;
};

} // namespace faultattr
