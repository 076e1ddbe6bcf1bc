#pragma once

// Fault attribution methods. Every method sees only the trajectory, an LLM
// session and its own configuration; labels are not reachable from here.

#include "backend.hpp"
#include "error.hpp"
#include "prompting.hpp"
#include "trace.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace faultattr {

// ---------------------------------------------------------------------------
// Session

struct SessionOptions {
    std::filesystem::path prompt_dump_dir;   // empty: no dumps
};

/// Per-record view of the client: stamps record id and stage tag on each
/// request, counts calls, and applies the single re-ask repair.
class Session {
public:
    Session(LlmClient& client, std::string record_id, SessionOptions options = {})
        : client_(client), record_id_(std::move(record_id)), options_(std::move(options)) {}

    std::string ask(const std::string& tag, std::vector<ChatMessage> messages) {
        ChatRequest request;
        request.messages = std::move(messages);
        request.record_id = record_id_;
        request.tag = tag;
        request.max_output_tokens = client_.config().max_output_tokens;
        request.model_id = client_.config().model_id;
        dump(request);
        auto response = client_.complete(std::move(request));
        ++llm_calls_;
        return response.text;
    }

    template <class Payload>
    ParseOutcome<Payload> ask_structured(const std::string& tag, const std::vector<ChatMessage>& messages) {
        const std::string first = ask(tag, messages);
        auto outcome = parse_structured<Payload>(first);
        if (outcome.ok()) return outcome;

        auto retry_messages = messages;
        retry_messages.push_back({Role::assistant, first});
        retry_messages.push_back({Role::user, std::string(kRepairReminder)});
        const std::string second = ask(tag + "/repair", std::move(retry_messages));
        auto repaired = parse_structured<Payload>(second);
        repaired.notes.insert(repaired.notes.begin(), "first attempt: " + outcome.error_message);
        if (repaired.ok()) repaired.repair = Repair::re_ask;
        return repaired;
    }

    int llm_calls() const noexcept { return llm_calls_; }
    const std::string& record_id() const noexcept { return record_id_; }

private:
    void dump(const ChatRequest& request) {
        if (options_.prompt_dump_dir.empty()) return;
        const auto dir = options_.prompt_dump_dir / record_id_;
        std::filesystem::create_directories(dir);
        std::string file = request.tag;
        for (auto& c : file)
            if (c == '/' || c == '=' || c == ' ') c = '_';
        char prefix[8];
        std::snprintf(prefix, sizeof prefix, "%03d_", llm_calls_);
        std::ofstream out(dir / (prefix + file + ".txt"), std::ios::binary | std::ios::trunc);
        for (const auto& m : request.messages) out << "=== " << to_string(m.role) << " ===\n" << m.content << "\n";
    }

    LlmClient& client_;
    std::string record_id_;
    SessionOptions options_;
    int llm_calls_ = 0;
};

// ---------------------------------------------------------------------------
// Result types

struct Prediction {
    std::string agent_name;
    long long step = 0;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct Candidate {
    std::string agent_name;
    long long step_number = 0;
    std::array<std::string, 3> rationales;   // mistake, first mistake, not corrected

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct HistoryEntry {
    int iteration = 0;
    Candidate candidate;
    std::array<std::string, 4> evaluator_reasons;
    std::array<int, 4> confidences{};
    int total = 0;

    friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

enum class Status { converged, max_iterations, no_fault_found, parse_failure, context_overflow };

inline std::string_view to_string(Status s) {
    switch (s) {
    case Status::converged: return "converged";
    case Status::max_iterations: return "max_iterations";
    case Status::no_fault_found: return "no_fault_found";
    case Status::parse_failure: return "parse_failure";
    case Status::context_overflow: return "context_overflow";
    }
    return "parse_failure";
}

inline Status status_from_string(std::string_view s) {
    for (auto status : {Status::converged, Status::max_iterations, Status::no_fault_found, Status::parse_failure,
                        Status::context_overflow})
        if (to_string(status) == s) return status;
    throw Error(ErrorCode::malformed_record, "unknown status '" + std::string(s) + "'");
}

struct AttributionResult {
    std::string method;
    std::string record_id;
    std::optional<Prediction> final;
    std::vector<HistoryEntry> history;
    Json trace = Json::object();   // method-specific detail
    Status status = Status::parse_failure;
    int llm_calls = 0;
    int parse_failures = 0;

    friend bool operator==(const AttributionResult&, const AttributionResult&) = default;
};

struct RafflesConfig {
    int max_iterations = 2;
    int confidence_threshold = 350;
    int evaluator4_pass_score = 100;
    int evaluator4_fail_score = 0;
};

inline void validate(const RafflesConfig& c) {
    if (c.max_iterations < 1) throw Error(ErrorCode::config_invalid, "max_iterations must be >= 1");
    if (c.confidence_threshold <= 0 || c.confidence_threshold > 400)
        throw Error(ErrorCode::config_invalid, "confidence_threshold must be in (0, 400]");
    for (int score : {c.evaluator4_pass_score, c.evaluator4_fail_score})
        if (score < 0 || score > 100) throw Error(ErrorCode::config_invalid, "evaluator-4 scores must be in [0, 100]");
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const HistoryEntry& e) {
    return {{"iteration", e.iteration},
            {"agent_name", e.candidate.agent_name},
            {"step_number", e.candidate.step_number},
            {"rationales", e.candidate.rationales},
            {"evaluator_reasons", e.evaluator_reasons},
            {"confidences", e.confidences},
            {"total", e.total}};
}

inline HistoryEntry history_entry_from_json(const Json& doc) {
    HistoryEntry e;
    e.iteration = doc.at("iteration").get<int>();
    e.candidate.agent_name = doc.at("agent_name").get<std::string>();
    e.candidate.step_number = doc.at("step_number").get<long long>();
    e.candidate.rationales = doc.at("rationales").get<std::array<std::string, 3>>();
    e.evaluator_reasons = doc.at("evaluator_reasons").get<std::array<std::string, 4>>();
    e.confidences = doc.at("confidences").get<std::array<int, 4>>();
    e.total = doc.at("total").get<int>();
    return e;
}

/// One results line. Contains no timestamps, so reruns compare byte-for-byte.
inline Json to_json(const AttributionResult& r) {
    Json doc;
    doc["record_id"] = r.record_id;
    doc["method"] = r.method;
    doc["status"] = to_string(r.status);
    doc["final"] = r.final ? Json{{"agent_name", r.final->agent_name}, {"step_number", r.final->step}} : Json(nullptr);
    doc["llm_calls"] = r.llm_calls;
    doc["parse_failures"] = r.parse_failures;
    Json history = Json::array();
    for (const auto& e : r.history) history.push_back(to_json(e));
    doc["history"] = std::move(history);
    doc["trace"] = r.trace;
    return doc;
}

inline AttributionResult attribution_result_from_json(const Json& doc) {
    AttributionResult r;
    r.record_id = doc.at("record_id").get<std::string>();
    r.method = doc.at("method").get<std::string>();
    r.status = status_from_string(doc.at("status").get<std::string>());
    if (const Json& f = doc.at("final"); !f.is_null())
        r.final = Prediction{f.at("agent_name").get<std::string>(), f.at("step_number").get<long long>()};
    r.llm_calls = doc.value("llm_calls", 0);
    r.parse_failures = doc.value("parse_failures", 0);
    for (const auto& e : doc.value("history", Json::array())) r.history.push_back(history_entry_from_json(e));
    r.trace = doc.value("trace", Json::object());
    return r;
}

// ---------------------------------------------------------------------------
// RAFFLES

inline bool log_consistent(const Trajectory& trajectory, const Candidate& candidate) {
    return candidate.step_number >= 0 && static_cast<std::size_t>(candidate.step_number) < trajectory.size() &&
           same_agent(trajectory.steps[static_cast<std::size_t>(candidate.step_number)].agent_name, candidate.agent_name);
}

/// Rule-based fourth evaluator: is (agent, step) an actual pair in the log?
inline int evaluator4_rule(const Trajectory& trajectory, const Candidate& candidate, const RafflesConfig& config = {}) {
    return log_consistent(trajectory, candidate) ? config.evaluator4_pass_score : config.evaluator4_fail_score;
}

inline std::string evaluator4_reason(const Trajectory& trajectory, const Candidate& candidate) {
    const std::string pair = "(" + candidate.agent_name + ", " + std::to_string(candidate.step_number) + ")";
    if (candidate.step_number < 0 || static_cast<std::size_t>(candidate.step_number) >= trajectory.size())
        return "The pair " + pair + " is not consistent with the log: the log has steps 0 to " +
               std::to_string(trajectory.size() - 1) + ".";
    const auto& actual = trajectory.steps[static_cast<std::size_t>(candidate.step_number)].agent_name;
    if (!same_agent(actual, candidate.agent_name))
        return "The pair " + pair + " is not consistent with the log: step " + std::to_string(candidate.step_number) +
               " was taken by " + actual + ".";
    return "The pair " + pair + " is consistent with the log.";
}

/// Compact feedback block for the next Judge call, oldest iteration first.
inline std::string format_history_digest(const std::vector<HistoryEntry>& history) {
    if (history.empty()) return {};
    static constexpr std::array<std::string_view, 4> labels{"mistake", "first mistake", "not corrected",
                                                            "log consistency"};
    std::string out = "## Previous Candidates and Evaluator Feedback ##";
    for (const auto& e : history) {
        out += "\nIteration " + std::to_string(e.iteration) + ": agent_name=" + e.candidate.agent_name +
               ", step_number=" + std::to_string(e.candidate.step_number) + ", confidences=[";
        for (std::size_t p = 0; p < 4; ++p)
            out += (p ? ", E" : "E") + std::to_string(p + 1) + "=" + std::to_string(e.confidences[p]);
        out += "], total=" + std::to_string(e.total) + "/400";
        for (std::size_t p = 0; p < 4; ++p)
            out += "\n- Evaluator " + std::to_string(p + 1) + " (" + std::string(labels[p]) + "): " + e.evaluator_reasons[p];
    }
    return out;
}

/// Entry with the highest total; ties go to the earliest iteration.
inline const HistoryEntry* best_entry(const std::vector<HistoryEntry>& history) {
    const HistoryEntry* best = nullptr;
    for (const auto& e : history)
        if (!best || e.total > best->total) best = &e;
    return best;
}

inline bool terminated(const std::vector<HistoryEntry>& history, int threshold) {
    return !history.empty() && history.back().total > threshold;
}

/// What the run would have returned with max_iterations = k, read off a
/// longer history from the same transcript.
inline std::optional<Prediction> prediction_at_budget(const std::vector<HistoryEntry>& history, int k, int threshold) {
    std::vector<HistoryEntry> prefix;
    for (const auto& e : history) {
        if (static_cast<int>(prefix.size()) >= k) break;
        prefix.push_back(e);
        if (terminated(prefix, threshold)) break;
    }
    if (prefix.empty()) return std::nullopt;
    const HistoryEntry* chosen = terminated(prefix, threshold) ? &prefix.back() : best_entry(prefix);
    return Prediction{chosen->candidate.agent_name, chosen->candidate.step_number};
}

inline AttributionResult raffles_attribute(const Trajectory& trajectory, Session& session, const RafflesConfig& config) {
    validate(config);
    if (trajectory.empty()) throw Error(ErrorCode::precondition_violation, "empty trajectory");
    AttributionResult result;
    result.method = "raffles";
    result.record_id = session.record_id();
    result.trace["confidence_threshold"] = config.confidence_threshold;
    result.trace["max_iterations"] = config.max_iterations;
    std::vector<HistoryEntry> history;
    std::optional<Status> abort_status;

    try {
        int k = 0;
        while (!terminated(history, config.confidence_threshold) && k < config.max_iterations) {
            ++k;
            const std::string iter = "/iter=" + std::to_string(k);
            auto judged = session.ask_structured<ParsedJudgment>(
                "raffles/judge" + iter, render_judge(trajectory, format_history_digest(history)).messages);
            if (!judged.ok()) {
                ++result.parse_failures;
                abort_status = Status::parse_failure;
                break;
            }
            const ParsedJudgment& j = *judged.value;
            HistoryEntry entry;
            entry.iteration = k;
            entry.candidate = Candidate{j.agent_name, j.step_number, {j.mistake_reason, j.first_mistake, j.mistake_not_corrected}};
            for (int p = 1; p <= 3; ++p) {
                auto evaluated = session.ask_structured<ParsedEvaluation>(
                    "raffles/evaluator" + std::to_string(p) + iter,
                    render_evaluator(static_cast<Criterion>(p), trajectory, j).messages);
                const auto slot = static_cast<std::size_t>(p - 1);
                if (evaluated.ok()) {
                    entry.confidences[slot] = evaluated.value->confidence;
                    entry.evaluator_reasons[slot] = evaluated.value->reason;
                } else {
                    ++result.parse_failures;
                    entry.confidences[slot] = 0;
                    entry.evaluator_reasons[slot] = "(evaluator output could not be parsed)";
                }
            }
            entry.confidences[3] = evaluator4_rule(trajectory, entry.candidate, config);
            entry.evaluator_reasons[3] = evaluator4_reason(trajectory, entry.candidate);
            entry.total = std::accumulate(entry.confidences.begin(), entry.confidences.end(), 0);
            history.push_back(std::move(entry));
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::context_overflow) throw;
        abort_status = Status::context_overflow;
        result.trace["error"] = e.what();
    }

    if (abort_status) {
        result.status = *abort_status;
        if (const auto* best = best_entry(history))
            result.final = Prediction{best->candidate.agent_name, best->candidate.step_number};
    } else if (terminated(history, config.confidence_threshold)) {
        result.status = Status::converged;
        result.final = Prediction{history.back().candidate.agent_name, history.back().candidate.step_number};
    } else {
        result.status = Status::max_iterations;
        const auto* best = best_entry(history);
        result.final = Prediction{best->candidate.agent_name, best->candidate.step_number};
    }
    result.history = std::move(history);
    result.llm_calls = session.llm_calls();
    return result;
}

// ---------------------------------------------------------------------------
// Baselines

namespace detail {

inline AttributionResult start(std::string method, const Session& session) {
    AttributionResult r;
    r.method = std::move(method);
    r.record_id = session.record_id();
    return r;
}

inline std::optional<Prediction> step_prediction(const Trajectory& trajectory, std::size_t t) {
    return Prediction{trajectory.steps[t].agent_name, static_cast<long long>(t)};
}

inline bool is_no_mistake(const ParsedAnswer& a) {
    return a.step_number < 0 || lower(a.agent_name) == "no mistake";
}

} // namespace detail

inline AttributionResult chat_llm_attribute(const Trajectory& trajectory, Session& session) {
    auto result = detail::start("chat_llm", session);
    try {
        auto answer = session.ask_structured<ParsedAnswer>("chat_llm", render_chat_llm(trajectory).messages);
        if (!answer.ok()) {
            result.status = Status::parse_failure;
            ++result.parse_failures;
        } else if (detail::is_no_mistake(*answer.value)) {
            result.status = Status::no_fault_found;
        } else {
            result.status = Status::converged;
            result.final = Prediction{answer.value->agent_name, answer.value->step_number};
            result.trace["reason"] = answer.value->reason;
            result.trace["repair"] = to_string(answer.repair);
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::context_overflow) throw;
        result.status = Status::context_overflow;
        result.trace["error"] = e.what();
    }
    result.llm_calls = session.llm_calls();
    return result;
}

/// Judges growing prefixes; stops at the first "yes". With no "yes" the
/// last step is returned under status no_fault_found.
inline AttributionResult step_by_step_attribute(const Trajectory& trajectory, Session& session) {
    if (trajectory.empty()) throw Error(ErrorCode::precondition_violation, "empty trajectory");
    auto result = detail::start("step_by_step", session);
    Json verdicts = Json::array();
    std::optional<std::size_t> flagged;
    try {
        for (std::size_t t = 0; t < trajectory.size() && !flagged; ++t) {
            auto verdict = session.ask_structured<YesNoVerdict>("step_by_step/t=" + std::to_string(t),
                                                                render_step_by_step(trajectory, t).messages);
            if (!verdict.ok()) {
                ++result.parse_failures;
                verdicts.push_back("unparsed");
                continue;
            }
            verdicts.push_back(verdict.value->yes ? "yes" : "no");
            if (verdict.value->yes) flagged = t;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::context_overflow) throw;
        result.status = Status::context_overflow;
        result.trace["error"] = e.what();
    }
    result.trace["verdicts"] = std::move(verdicts);
    if (result.status != Status::context_overflow) {
        if (flagged) {
            result.status = Status::converged;
            result.final = detail::step_prediction(trajectory, *flagged);
        } else {
            result.status = Status::no_fault_found;
            result.final = detail::step_prediction(trajectory, trajectory.size() - 1);
        }
    }
    result.llm_calls = session.llm_calls();
    return result;
}

/// Halves [0, T-1] until one step remains; lower half is [lo, mid].
inline AttributionResult binary_search_attribute(const Trajectory& trajectory, Session& session) {
    if (trajectory.empty()) throw Error(ErrorCode::precondition_violation, "empty trajectory");
    auto result = detail::start("binary_search", session);
    std::size_t lo = 0, hi = trajectory.size() - 1;
    Json queries = Json::array();
    bool failed = false;
    try {
        while (lo < hi) {
            const auto halves = split_range(lo, hi);
            auto verdict = session.ask_structured<HalfVerdict>(
                "binary_search/range=" + std::to_string(lo) + "-" + std::to_string(hi),
                render_binary_search(trajectory, lo, hi).messages);
            if (!verdict.ok()) {
                ++result.parse_failures;
                result.status = Status::parse_failure;
                failed = true;
                break;
            }
            queries.push_back({{"lo", lo}, {"hi", hi}, {"verdict", verdict.value->upper ? "upper half" : "lower half"}});
            if (verdict.value->upper) lo = halves.mid + 1;
            else hi = halves.mid;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::context_overflow) throw;
        result.status = Status::context_overflow;
        result.trace["error"] = e.what();
        failed = true;
    }
    result.trace["queries"] = std::move(queries);
    if (!failed) {
        result.status = Status::converged;
        result.final = detail::step_prediction(trajectory, lo);
    }
    result.llm_calls = session.llm_calls();
    return result;
}

inline constexpr std::string_view kForcedAnswer =
    "You have used all allowed agent calls. Do not call any more agents. Answer now with Option B: output only the "
    "JSON block with agent_name, step_number and reason_for_mistake.";

/// Planner chooses steps to have judged (at most max_tool_calls), then answers.
inline AttributionResult tool_caller_attribute(const Trajectory& trajectory, Session& session, int max_tool_calls = 3) {
    if (trajectory.empty()) throw Error(ErrorCode::precondition_violation, "empty trajectory");
    auto result = detail::start("tool_caller", session);
    auto messages = render_tool_caller_planner(trajectory).messages;
    Json calls = Json::array();
    int used = 0;
    int turn = 0;
    bool forced = false;
    try {
        for (;;) {
            ++turn;
            const std::string tag = forced ? "tool_caller/planner/forced" : "tool_caller/planner/turn=" + std::to_string(turn);
            const std::string reply = session.ask(tag, messages);

            std::optional<ToolCall> call;
            std::string call_error;
            try {
                call = parse_tool_call(reply);
            } catch (const Error& e) {
                call_error = e.what();
            }
            const bool wants_tool = call.has_value() || !call_error.empty();

            if (wants_tool && forced) {
                result.status = Status::parse_failure;
                ++result.parse_failures;
                break;
            }
            if (wants_tool && used >= max_tool_calls) {
                calls.push_back({{"refused", true}, {"raw", reply}});
                messages.push_back({Role::assistant, reply});
                messages.push_back({Role::user, std::string(kForcedAnswer)});
                forced = true;
                continue;
            }
            if (wants_tool) {
                ++used;
                messages.push_back({Role::assistant, reply});
                const auto id = call ? call->step_id() : std::nullopt;
                if (!call_error.empty() || call->name != "judge" || !id || *id < 0 ||
                    static_cast<std::size_t>(*id) >= trajectory.size()) {
                    const std::string why = !call_error.empty() ? call_error
                                            : call->name != "judge"
                                                ? "unknown agent '" + call->name + "'; the only agent is judge"
                                                : "judge needs an integer id between 0 and " +
                                                      std::to_string(trajectory.size() - 1);
                    calls.push_back({{"error", why}, {"raw", reply}});
                    messages.push_back({Role::user, "The agent call failed: " + why});
                    continue;
                }
                const auto step = static_cast<std::size_t>(*id);
                auto verdict = session.ask_structured<YesNoVerdict>("tool_caller/judge/call=" + std::to_string(used),
                                                                    render_tool_caller_judge(trajectory, step).messages);
                std::string summary;
                if (verdict.ok()) {
                    summary = std::string("judge(id=") + std::to_string(step) + ") returned: " +
                              (verdict.value->yes ? "yes" : "no") + ". Reason: " + verdict.value->reason;
                    calls.push_back({{"id", step}, {"verdict", verdict.value->yes ? "yes" : "no"}});
                } else {
                    ++result.parse_failures;
                    summary = "judge(id=" + std::to_string(step) + ") returned an unreadable answer.";
                    calls.push_back({{"id", step}, {"verdict", nullptr}});
                }
                messages.push_back({Role::user, summary});
                continue;
            }

            auto answer = parse_structured<ParsedAnswer>(reply);
            if (!answer.ok()) {
                auto retry = messages;
                retry.push_back({Role::assistant, reply});
                retry.push_back({Role::user, std::string(kRepairReminder)});
                answer = parse_structured<ParsedAnswer>(session.ask(tag + "/repair", std::move(retry)));
                if (answer.ok()) answer.repair = Repair::re_ask;
            }
            if (!answer.ok()) {
                result.status = Status::parse_failure;
                ++result.parse_failures;
            } else if (detail::is_no_mistake(*answer.value)) {
                result.status = Status::no_fault_found;
            } else {
                result.status = Status::converged;
                result.final = Prediction{answer.value->agent_name, answer.value->step_number};
                result.trace["reason"] = answer.value->reason;
            }
            break;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::context_overflow) throw;
        result.status = Status::context_overflow;
        result.trace["error"] = e.what();
    }
    result.trace["tool_calls"] = std::move(calls);
    result.llm_calls = session.llm_calls();
    return result;
}

// ---------------------------------------------------------------------------
// Dispatch

enum class Method { raffles, chat_llm, step_by_step, binary_search, tool_caller };

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::raffles: return "raffles";
    case Method::chat_llm: return "chat_llm";
    case Method::step_by_step: return "step_by_step";
    case Method::binary_search: return "binary_search";
    case Method::tool_caller: return "tool_caller";
    }
    return "raffles";
}

inline Method method_from_string(std::string_view name) {
    for (auto m : {Method::raffles, Method::chat_llm, Method::step_by_step, Method::binary_search, Method::tool_caller})
        if (to_string(m) == name) return m;
    throw Error(ErrorCode::config_invalid, "unknown method '" + std::string(name) + "'");
}

struct MethodConfig {
    Method method = Method::raffles;
    RafflesConfig raffles;
    int max_tool_calls = 3;
};

inline AttributionResult attribute(const Trajectory& trajectory, Session& session, const MethodConfig& config) {
    switch (config.method) {
    case Method::raffles: return raffles_attribute(trajectory, session, config.raffles);
    case Method::chat_llm: return chat_llm_attribute(trajectory, session);
    case Method::step_by_step: return step_by_step_attribute(trajectory, session);
    case Method::binary_search: return binary_search_attribute(trajectory, session);
    case Method::tool_caller: return tool_caller_attribute(trajectory, session, config.max_tool_calls);
    }
    throw Error(ErrorCode::config_invalid, "unknown method");
}

} // namespace faultattr
