#pragma once

// Prompt rendering and structured-output parsing.

#include "backend.hpp"
#include "error.hpp"
#include "prompt_assets.hpp"
#include "trace.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace faultattr {

// ---------------------------------------------------------------------------
// Templates

class PromptTemplate {
public:
    using Bindings = std::map<std::string, std::string, std::less<>>;

    PromptTemplate(std::string name, std::string_view body) : name_(std::move(name)), body_(body) {
        scan([&](std::string_view placeholder) { required_.insert(std::string(placeholder)); }, nullptr);
    }

    const std::string& name() const noexcept { return name_; }
    std::string_view body() const noexcept { return body_; }
    const std::set<std::string>& required_placeholders() const noexcept { return required_; }

    /// Throws UnboundPlaceholder if any required name is missing from bindings.
    std::string render(const Bindings& bindings) const {
        for (const auto& name : required_)
            if (!bindings.contains(name))
                throw Error(ErrorCode::unbound_placeholder, name_ + ": {" + name + "} is unbound");
        std::string out;
        out.reserve(body_.size());
        scan(
            [&](std::string_view placeholder) { out += bindings.find(placeholder)->second; },
            [&](std::string_view literal) { out += literal; });
        return out;
    }

    /// True when `c` may start a placeholder name.
    static bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }

private:
    template <class OnPlaceholder, class OnLiteral>
    void scan(OnPlaceholder&& on_placeholder, OnLiteral&& on_literal) const {
        auto emit = [&](std::string_view text) {
            if constexpr (!std::is_same_v<std::decay_t<OnLiteral>, std::nullptr_t>) on_literal(text);
        };
        std::string_view body = body_;
        std::size_t i = 0;
        while (i < body.size()) {
            const char c = body[i];
            if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
                emit("{");
                i += 2;
                continue;
            }
            if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
                emit("}");
                i += 2;
                continue;
            }
            if (c == '{' && i + 1 < body.size() && is_name_start(body[i + 1])) {
                std::size_t j = i + 1;
                while (j < body.size() && body[j] != '}' && body[j] != '{' &&
                       !std::isspace(static_cast<unsigned char>(body[j])))
                    ++j;
                if (j < body.size() && body[j] == '}') {
                    on_placeholder(body.substr(i + 1, j - i - 1));
                    i = j + 1;
                    continue;
                }
            }
            emit(body.substr(i, 1));
            ++i;
        }
    }

    std::string name_;
    std::string_view body_;
    std::set<std::string> required_;
};

/// Rendered text plus the chat messages that carry it.
struct RenderedPrompt {
    std::string text;
    std::vector<ChatMessage> messages;
};

inline RenderedPrompt single_user_message(std::string text) {
    RenderedPrompt prompt;
    prompt.messages.push_back({Role::user, text});
    prompt.text = std::move(text);
    return prompt;
}

namespace detail {

inline std::string problem_and_log(const Trajectory& trajectory, std::size_t first, std::size_t last) {
    return "The problem is: " + trajectory.problem + "\n\nConversation log:\n" + format_log(trajectory, first, last);
}

inline std::string render_generic(std::string task_description, std::string input_metadata, std::string task_output) {
    static const PromptTemplate generic("generic_template", prompts::kGenericTemplate);
    return generic.render({{"task_description", std::move(task_description)},
                           {"input_metadata", std::move(input_metadata)},
                           {"task_output", std::move(task_output)}});
}

inline void require_steps(const Trajectory& trajectory) {
    if (trajectory.empty()) throw Error(ErrorCode::precondition_violation, "trajectory has no steps");
}

} // namespace detail

// ---------------------------------------------------------------------------
// RAFFLES prompts

/// Judge prompt; `history_digest` is empty on the first iteration.
inline RenderedPrompt render_judge(const Trajectory& trajectory, std::string_view history_digest) {
    detail::require_steps(trajectory);
    static const PromptTemplate instruction("judge_instruction", prompts::kJudgeInstruction);
    static const PromptTemplate output("judge_output_format", prompts::kJudgeOutputFormat);
    std::string metadata = detail::problem_and_log(trajectory, 0, trajectory.size() - 1);
    if (!history_digest.empty()) metadata += "\n\n" + std::string(history_digest);
    return single_user_message(detail::render_generic(instruction.render({}), std::move(metadata), output.render({})));
}

struct ParsedJudgment {
    std::string agent_name;
    long long step_number = 0;
    std::string mistake_reason;
    std::string first_mistake;
    std::string mistake_not_corrected;
};

/// Evaluator criteria: 1 mistake, 2 first mistake, 3 never corrected.
enum class Criterion { mistake = 1, first_mistake = 2, not_corrected = 3 };

inline std::string_view rationale_key(Criterion c) {
    switch (c) {
    case Criterion::mistake: return "mistake_reason";
    case Criterion::first_mistake: return "first_mistake";
    case Criterion::not_corrected: return "mistake_not_corrected";
    }
    return "mistake_reason";
}

inline const std::string& rationale_for(const ParsedJudgment& j, Criterion c) {
    switch (c) {
    case Criterion::mistake: return j.mistake_reason;
    case Criterion::first_mistake: return j.first_mistake;
    case Criterion::not_corrected: return j.mistake_not_corrected;
    }
    return j.mistake_reason;
}

inline RenderedPrompt render_evaluator(Criterion criterion, const Trajectory& trajectory, const ParsedJudgment& judgment) {
    detail::require_steps(trajectory);
    static const PromptTemplate mistake("evaluator_mistake", prompts::kEvaluatorMistake);
    static const PromptTemplate first("evaluator_first_mistake", prompts::kEvaluatorFirstMistake);
    static const PromptTemplate corrected("evaluator_not_corrected", prompts::kEvaluatorNotCorrected);
    const PromptTemplate& tpl = criterion == Criterion::mistake         ? mistake
                                : criterion == Criterion::first_mistake ? first
                                                                        : corrected;
    Json error_step = Json::object();
    error_step["agent_name"] = judgment.agent_name;
    error_step["step_number"] = judgment.step_number;
    error_step[std::string(rationale_key(criterion))] = rationale_for(judgment, criterion);
    return single_user_message(tpl.render({{"task_log", detail::problem_and_log(trajectory, 0, trajectory.size() - 1)},
                                           {"error_step", error_step.dump(4)}}));
}

// ---------------------------------------------------------------------------
// Baseline prompts

enum class BaselineKind { chat_llm, step_by_step, binary_search, tool_caller_planner, tool_caller_judge };

struct HalfRanges {
    std::size_t lo = 0, mid = 0, hi = 0;   // lower [lo, mid], upper [mid+1, hi]
};

/// Inclusive range [lo, hi] split at the floor midpoint.
inline HalfRanges split_range(std::size_t lo, std::size_t hi) { return {lo, lo + (hi - lo) / 2, hi}; }

inline std::string format_range(std::size_t a, std::size_t b) {
    return "[" + std::to_string(a) + ", " + std::to_string(b) + "]";
}

inline RenderedPrompt render_chat_llm(const Trajectory& trajectory) {
    detail::require_steps(trajectory);
    static const PromptTemplate tpl("chat_llm", prompts::kChatLlm);
    return single_user_message(tpl.render({{"problem", trajectory.problem}, {"failure_log", format_log(trajectory)}}));
}

/// Prefix-judgment prompt for the step at index `step`.
inline RenderedPrompt render_step_by_step(const Trajectory& trajectory, std::size_t step) {
    detail::require_steps(trajectory);
    if (step >= trajectory.size()) throw Error(ErrorCode::precondition_violation, "step beyond log");
    static const PromptTemplate instruction("step_by_step_instruction", prompts::kStepByStepInstruction);
    static const PromptTemplate output("step_by_step_task_output", prompts::kStepByStepTaskOutput);
    std::string metadata = "The problem is: " + trajectory.problem + "\n\nhistory_up_to_step:\n" +
                           format_log(trajectory, 0, step) + "\n\nThe most recent step is step " +
                           std::to_string(step) + " by " + trajectory.steps[step].agent_name + ".";
    return single_user_message(detail::render_generic(instruction.render({}), std::move(metadata), output.render({})));
}

inline RenderedPrompt render_binary_search(const Trajectory& trajectory, std::size_t lo, std::size_t hi) {
    detail::require_steps(trajectory);
    if (lo > hi || hi >= trajectory.size()) throw Error(ErrorCode::precondition_violation, "bad search range");
    static const PromptTemplate instruction("binary_search_instruction", prompts::kBinarySearchInstruction);
    static const PromptTemplate output("binary_search_task_output", prompts::kBinarySearchTaskOutput);
    const auto halves = split_range(lo, hi);
    std::string description = instruction.render({{"lower_half_range", format_range(halves.lo, halves.mid)},
                                                  {"upper_half_range", format_range(halves.mid + 1, halves.hi)}});
    std::string metadata = "The problem is: " + trajectory.problem + "\n\nConversation segment (steps " +
                           std::to_string(lo) + " to " + std::to_string(hi) + "):\n" + format_log(trajectory, lo, hi);
    return single_user_message(detail::render_generic(std::move(description), std::move(metadata), output.render({})));
}

inline constexpr std::string_view kChatTemplateUserMarker = "<|eot_id|><|start_header_id|>user<|end_header_id|>\n\n";

/// Planner prompt; the agent list and log go into the metadata binding.
inline RenderedPrompt render_tool_caller_planner(const Trajectory& trajectory) {
    detail::require_steps(trajectory);
    static const PromptTemplate tpl("tool_caller_planner", prompts::kToolCallerPlanner);
    const Json agents = Json::array({{{"name", "judge"},
                                      {"description", "Judges whether the step with the given id (0-based) contains "
                                                      "an error, looking at the conversation up to that step."},
                                      {"arguments", {{"id", "integer step number"}}}}});
    std::string metadata = "Agents: " + agents.dump() + "\n\n" +
                           detail::problem_and_log(trajectory, 0, trajectory.size() - 1);
    RenderedPrompt prompt;
    prompt.text = tpl.render({{"input_data['metadata']", std::move(metadata)}});
    const auto cut = prompt.text.find(kChatTemplateUserMarker);
    if (cut == std::string::npos) {
        prompt.messages.push_back({Role::user, prompt.text});
    } else {
        prompt.messages.push_back({Role::system, prompt.text.substr(0, cut)});
        prompt.messages.push_back({Role::user, prompt.text.substr(cut + kChatTemplateUserMarker.size())});
    }
    return prompt;
}

inline RenderedPrompt render_tool_caller_judge(const Trajectory& trajectory, std::size_t step) {
    detail::require_steps(trajectory);
    if (step >= trajectory.size()) throw Error(ErrorCode::precondition_violation, "step beyond log");
    static const PromptTemplate tpl("tool_caller_judge", prompts::kToolCallerJudge);
    std::string history = "The problem is: " + trajectory.problem + "\n" + format_log(trajectory, 0, step);
    return single_user_message(tpl.render({{"prompt_history", std::move(history)}}));
}

struct BaselineContext {
    const Trajectory* trajectory = nullptr;
    std::size_t step = 0;          // step_by_step, tool_caller_judge
    std::size_t lo = 0, hi = 0;    // binary_search
};

inline RenderedPrompt render_baseline(BaselineKind kind, const BaselineContext& context) {
    if (!context.trajectory) throw Error(ErrorCode::unbound_placeholder, "baseline context has no trajectory");
    const Trajectory& t = *context.trajectory;
    switch (kind) {
    case BaselineKind::chat_llm: return render_chat_llm(t);
    case BaselineKind::step_by_step: return render_step_by_step(t, context.step);
    case BaselineKind::binary_search: return render_binary_search(t, context.lo, context.hi);
    case BaselineKind::tool_caller_planner: return render_tool_caller_planner(t);
    case BaselineKind::tool_caller_judge: return render_tool_caller_judge(t, context.step);
    }
    throw Error(ErrorCode::unbound_placeholder, "unknown baseline kind");
}

// ---------------------------------------------------------------------------
// Structured output

enum class Repair { none, fence_stripped, trailing_prose_stripped, re_ask };

inline std::string_view to_string(Repair r) {
    switch (r) {
    case Repair::none: return "none";
    case Repair::fence_stripped: return "fence-stripped";
    case Repair::trailing_prose_stripped: return "trailing-prose-stripped";
    case Repair::re_ask: return "re-ask";
    }
    return "none";
}

template <class Payload>
struct ParseOutcome {
    std::optional<Payload> value;
    Repair repair = Repair::none;
    std::string raw;
    std::vector<std::string> notes;
    std::optional<ErrorCode> error;
    std::string error_message;

    bool ok() const noexcept { return value.has_value(); }
};

struct ParsedEvaluation {
    std::string reason;
    int confidence = 0;
};

/// Final answer of Chat-LLM and the tool-caller planner. step_number is -1
/// when the model reports "no mistake".
struct ParsedAnswer {
    std::string agent_name;
    long long step_number = 0;
    std::string reason;
};

struct YesNoVerdict {
    bool yes = false;
    std::string reason;
};

struct HalfVerdict {
    bool upper = false;
    std::string reason;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

/// Smart quotes, single-quoted dicts and trailing commas.
inline std::string loosen_json(std::string_view text) {
    std::string s(text);
    replace_all(s, "\xE2\x80\x9C", "\"");
    replace_all(s, "\xE2\x80\x9D", "\"");
    replace_all(s, "\xE2\x80\x98", "'");
    replace_all(s, "\xE2\x80\x99", "'");
    if (s.find('"') == std::string::npos) std::replace(s.begin(), s.end(), '\'', '"');
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            out.push_back(c);
            if (c == '\\' && i + 1 < s.size()) out.push_back(s[++i]);
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        if (c == ',') {
            std::size_t j = i + 1;
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;
        }
        out.push_back(c);
    }
    return out;
}

inline std::optional<Json> parse_object(std::string_view text, std::vector<std::string>& notes) {
    Json doc = Json::parse(text, nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) return doc;
    doc = Json::parse(loosen_json(text), nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) {
        notes.emplace_back("lenient JSON fix-ups applied");
        return doc;
    }
    return std::nullopt;
}

/// First balanced {...} span that parses as an object.
inline std::optional<Json> find_embedded_object(std::string_view text, std::vector<std::string>& notes) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (c == '\\') ++i;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                if (auto doc = parse_object(text.substr(start, i - start + 1), notes)) return doc;
                break;
            }
        }
    }
    return std::nullopt;
}

struct Extracted {
    Json doc;
    Repair repair = Repair::none;
};

inline std::optional<Extracted> extract_object(std::string_view raw, std::vector<std::string>& notes) {
    const std::string_view text = trim(raw);
    if (auto doc = parse_object(text, notes)) return Extracted{*doc, Repair::none};

    if (auto open = text.find("```"); open != std::string_view::npos) {
        std::size_t body = text.find('\n', open + 3);
        body = body == std::string_view::npos ? open + 3 : body + 1;
        const auto close = text.find("```", body);
        const std::string_view inside = text.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body);
        const std::string_view before = trim(text.substr(0, open));
        const std::string_view after = close == std::string_view::npos ? std::string_view{} : trim(text.substr(close + 3));
        const Repair repair = before.empty() && after.empty() ? Repair::fence_stripped : Repair::trailing_prose_stripped;
        if (close == std::string_view::npos) notes.emplace_back("unterminated code fence");
        if (auto doc = parse_object(trim(inside), notes)) return Extracted{*doc, repair};
        if (auto doc = find_embedded_object(inside, notes)) return Extracted{*doc, Repair::trailing_prose_stripped};
    }
    if (auto doc = find_embedded_object(text, notes)) return Extracted{*doc, Repair::trailing_prose_stripped};
    return std::nullopt;
}

inline const Json* find_key(const Json& doc, std::initializer_list<std::string_view> keys) {
    for (auto key : keys) {
        auto it = doc.find(std::string(key));
        if (it != doc.end() && !it->is_null()) return &*it;
    }
    return nullptr;
}

inline std::string text_field(const Json& doc, std::initializer_list<std::string_view> keys) {
    const Json* v = find_key(doc, keys);
    return v ? json_text(*v) : std::string();
}

/// Integers, integral floats, and text such as "4", " 4 ", "Step 4".
inline std::optional<long long> coerce_integer(const Json& value, std::vector<std::string>& notes) {
    if (value.is_number_integer()) return value.get<long long>();
    if (value.is_number_float()) {
        const double d = value.get<double>();
        if (std::floor(d) == d) return static_cast<long long>(d);
        return std::nullopt;
    }
    if (!value.is_string()) return std::nullopt;
    std::string s = lower(trim(value.get<std::string>()));
    if (auto n = parse_integer(s)) {
        notes.emplace_back("integer coerced from text");
        return n;
    }
    for (std::string_view prefix : {"step number", "step", "#"}) {
        if (s.rfind(prefix, 0) == 0) {
            if (auto n = parse_integer(trim(std::string_view(s).substr(prefix.size())))) {
                notes.emplace_back("integer coerced from text");
                return n;
            }
        }
    }
    return std::nullopt;
}

template <class Payload>
ParseOutcome<Payload> fail(ParseOutcome<Payload> out, ErrorCode code, std::string message) {
    out.value.reset();
    out.error = code;
    out.error_message = std::move(message);
    return out;
}

inline std::optional<bool> yes_no_word(std::string_view text) {
    std::string s = lower(trim(text));
    std::size_t i = 0;
    while (i < s.size() && !std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
    s = s.substr(i);
    auto starts_word = [&](std::string_view word) {
        return s.rfind(word, 0) == 0 && (s.size() == word.size() || !std::isalpha(static_cast<unsigned char>(s[word.size()])));
    };
    if (starts_word("yes")) return true;
    if (starts_word("no")) return false;
    return std::nullopt;
}

inline std::optional<bool> half_word(std::string_view text) {
    const std::string s = lower(text);
    const bool upper = s.find("upper") != std::string::npos;
    const bool lower_half = s.find("lower") != std::string::npos;
    if (upper == lower_half) return std::nullopt;
    return upper;
}

} // namespace detail

template <class Payload>
struct SchemaTraits;

template <>
struct SchemaTraits<ParsedJudgment> {
    static std::optional<ParsedJudgment> from(const Json& doc, std::vector<std::string>& notes, std::string& error) {
        ParsedJudgment j;
        j.agent_name = std::string(detail::trim(detail::text_field(doc, {"agent_name", "agent"})));
        if (j.agent_name.empty()) {
            error = "agent_name missing or empty";
            return std::nullopt;
        }
        const Json* step = detail::find_key(doc, {"step_number", "step"});
        auto n = step ? detail::coerce_integer(*step, notes) : std::nullopt;
        if (!n || *n < 0) {
            error = "step_number missing, negative or not an integer";
            return std::nullopt;
        }
        j.step_number = *n;
        j.mistake_reason = detail::text_field(doc, {"mistake_reason", "reason_for_mistake", "reason"});
        j.first_mistake = detail::text_field(doc, {"first_mistake"});
        j.mistake_not_corrected = detail::text_field(doc, {"mistake_not_corrected"});
        if (j.first_mistake.empty() || j.mistake_not_corrected.empty() || j.mistake_reason.empty())
            notes.emplace_back("one or more rationales missing");
        return j;
    }
    static std::optional<ParsedJudgment> from_text(std::string_view, std::vector<std::string>&) { return std::nullopt; }
};

template <>
struct SchemaTraits<ParsedEvaluation> {
    static std::optional<ParsedEvaluation> from(const Json& doc, std::vector<std::string>& notes, std::string& error) {
        ParsedEvaluation e;
        e.reason = detail::text_field(doc, {"reason", "rationale"});
        const Json* c = detail::find_key(doc, {"confidence", "confidence_score", "score"});
        std::optional<double> value;
        if (c && c->is_number()) {
            value = c->get<double>();
        } else if (c && c->is_string()) {
            std::string s(detail::trim(c->get<std::string>()));
            std::size_t used = 0;
            try {
                value = std::stod(s, &used);
            } catch (...) {
                value.reset();
            }
            if (value) notes.emplace_back("confidence coerced from text");
        }
        if (!value) {
            error = "confidence missing or not numeric";
            return std::nullopt;
        }
        long long rounded = std::llround(*value);
        if (rounded < 0 || rounded > 100) {
            notes.emplace_back("confidence " + std::to_string(rounded) + " clamped into [0,100]");
            rounded = std::clamp<long long>(rounded, 0, 100);
        }
        e.confidence = static_cast<int>(rounded);
        return e;
    }
    static std::optional<ParsedEvaluation> from_text(std::string_view, std::vector<std::string>&) { return std::nullopt; }
};

template <>
struct SchemaTraits<ParsedAnswer> {
    static std::optional<ParsedAnswer> from(const Json& doc, std::vector<std::string>& notes, std::string& error) {
        ParsedAnswer a;
        a.agent_name = std::string(detail::trim(detail::text_field(doc, {"agent_name", "agent"})));
        const Json* step = detail::find_key(doc, {"step_number", "step"});
        auto n = step ? detail::coerce_integer(*step, notes) : std::nullopt;
        if (a.agent_name.empty() || !n || *n < -1) {
            error = "agent_name/step_number missing or invalid";
            return std::nullopt;
        }
        a.step_number = *n;
        a.reason = detail::text_field(doc, {"reason_for_mistake", "reason", "mistake_reason"});
        return a;
    }
    static std::optional<ParsedAnswer> from_text(std::string_view, std::vector<std::string>&) { return std::nullopt; }
};

template <>
struct SchemaTraits<YesNoVerdict> {
    static std::optional<YesNoVerdict> from(const Json& doc, std::vector<std::string>&, std::string& error) {
        const Json* v = detail::find_key(doc, {"judgement", "judgment", "verdict", "answer"});
        std::optional<bool> yes;
        if (v && v->is_boolean()) yes = v->get<bool>();
        else if (v && v->is_string()) yes = detail::yes_no_word(v->get<std::string>());
        if (!yes) {
            error = "judgement is not yes/no";
            return std::nullopt;
        }
        return YesNoVerdict{*yes, detail::text_field(doc, {"reason"})};
    }
    static std::optional<YesNoVerdict> from_text(std::string_view text, std::vector<std::string>&) {
        auto body = detail::trim(text);
        if (body.rfind("1.", 0) == 0) body = detail::trim(body.substr(2));
        if (auto yes = detail::yes_no_word(body)) return YesNoVerdict{*yes, std::string(body)};
        return std::nullopt;
    }
};

template <>
struct SchemaTraits<HalfVerdict> {
    static std::optional<HalfVerdict> from(const Json& doc, std::vector<std::string>&, std::string& error) {
        const Json* v = detail::find_key(doc, {"judgement", "judgment", "verdict", "answer"});
        std::optional<bool> upper = v && v->is_string() ? detail::half_word(v->get<std::string>()) : std::nullopt;
        if (!upper) {
            error = "judgement is not 'upper half' or 'lower half'";
            return std::nullopt;
        }
        return HalfVerdict{*upper, detail::text_field(doc, {"reason"})};
    }
    static std::optional<HalfVerdict> from_text(std::string_view text, std::vector<std::string>&) {
        const std::string s = detail::lower(text);
        const bool upper = s.find("upper half") != std::string::npos;
        const bool lower = s.find("lower half") != std::string::npos;
        if (upper == lower) return std::nullopt;
        return HalfVerdict{upper, std::string(detail::trim(text))};
    }
};

/// Extracts the first fenced or embedded JSON object (or the whole text),
/// maps it onto Payload, and records which repair was needed.
template <class Payload>
ParseOutcome<Payload> parse_structured(std::string_view text) {
    ParseOutcome<Payload> out;
    out.raw = std::string(text);
    std::string schema_error;
    if (auto extracted = detail::extract_object(text, out.notes)) {
        out.repair = extracted->repair;
        if (auto value = SchemaTraits<Payload>::from(extracted->doc, out.notes, schema_error)) {
            out.value = std::move(value);
            return out;
        }
    }
    // Plain-text answers ("Yes. ...", "lower half") for verdict schemas.
    if (auto value = SchemaTraits<Payload>::from_text(text, out.notes)) {
        const auto body = detail::trim(text);
        const bool bare = detail::lower(body).find_first_not_of("abcdefghijklmnopqrstuvwxyz .'\"") == std::string::npos &&
                          body.size() <= 12;
        out.repair = bare ? Repair::none : Repair::trailing_prose_stripped;
        out.value = std::move(value);
        return out;
    }
    if (!schema_error.empty()) return detail::fail(std::move(out), ErrorCode::schema_mismatch, schema_error);
    return detail::fail(std::move(out), ErrorCode::unparseable_output, "no structured block found");
}

inline constexpr std::string_view kRepairReminder =
    "Your previous answer could not be parsed. Output only the JSON block in the requested format, with no other text.";

// ---------------------------------------------------------------------------
// Tool calls

struct ToolCall {
    std::string name;
    std::vector<std::string> positional;
    std::map<std::string, std::string> kwargs;

    /// The judged step: `id=` keyword or first positional argument.
    std::optional<long long> step_id() const {
        if (auto it = kwargs.find("id"); it != kwargs.end()) return detail::parse_integer(it->second);
        if (auto it = kwargs.find("step"); it != kwargs.end()) return detail::parse_integer(it->second);
        if (!positional.empty()) return detail::parse_integer(positional.front());
        return std::nullopt;
    }
};

/// Recognizes one <agent>name(args)</agent> (or <tool>...</tool>) span.
/// Returns nullopt when no tag is present; throws MalformedToolCall when a
/// tag is present but its inside does not parse.
inline std::optional<ToolCall> parse_tool_call(std::string_view text) {
    const std::string lowered = detail::lower(text);
    std::size_t open = std::string::npos;
    std::string tag;
    for (std::string candidate : {"agent", "tool"}) {
        auto pos = lowered.find("<" + candidate + ">");
        if (pos != std::string::npos && pos < open) {
            open = pos;
            tag = candidate;
        }
    }
    if (open == std::string::npos) return std::nullopt;
    const std::size_t start = open + tag.size() + 2;
    const std::size_t close = lowered.find("</" + tag + ">", start);
    const std::string_view inside = detail::trim(text.substr(start, close == std::string::npos ? std::string_view::npos : close - start));
    auto malformed = [&](const std::string& why) {
        return Error(ErrorCode::malformed_tool_call, why + ": '" + std::string(inside) + "'");
    };

    std::size_t i = 0;
    while (i < inside.size() && (std::isalnum(static_cast<unsigned char>(inside[i])) || inside[i] == '_')) ++i;
    if (i == 0 || !PromptTemplate::is_name_start(inside[0])) throw malformed("missing agent name");
    ToolCall call;
    call.name = std::string(inside.substr(0, i));
    std::string_view rest = detail::trim(inside.substr(i));
    if (rest.size() < 2 || rest.front() != '(' || rest.back() != ')') throw malformed("missing argument list");
    rest = rest.substr(1, rest.size() - 2);

    std::vector<std::string> args;
    std::string current;
    char quote = 0;
    int depth = 0;
    for (char c : rest) {
        if (quote) {
            if (c == quote) quote = 0;
            else current.push_back(c);
            continue;
        }
        if (c == '"' || c == '\'') quote = c;
        else if (c == '(' || c == '[' || c == '{') { ++depth; current.push_back(c); }
        else if (c == ')' || c == ']' || c == '}') {
            if (--depth < 0) throw malformed("unbalanced brackets");
            current.push_back(c);
        } else if (c == ',' && depth == 0) {
            args.push_back(current);
            current.clear();
        } else current.push_back(c);
    }
    if (quote || depth != 0) throw malformed("unterminated argument");
    if (!detail::trim(current).empty() || !args.empty()) args.push_back(current);
    for (const auto& arg : args) {
        const auto a = detail::trim(arg);
        if (a.empty()) throw malformed("empty argument");
        if (auto eq = a.find('='); eq != std::string_view::npos) {
            const auto key = detail::trim(a.substr(0, eq));
            const auto value = detail::trim(a.substr(eq + 1));
            if (key.empty() || value.empty()) throw malformed("bad keyword argument");
            call.kwargs[std::string(key)] = std::string(value);
        } else {
            call.positional.emplace_back(a);
        }
    }
    return call;
}

} // namespace faultattr
