#pragma once

// Trajectory data model and Who&When log ingestion.
//
// On-disk record layout (one JSON document per file, file stem = record id):
//
//   question        string, required
//   history         array, required, non-empty; each entry has "content" and
//                   the acting agent in "name" (Algorithm-Generated) or
//                   "role" (Hand-Crafted); "name" wins when non-empty
//   mistake_agent   string, required
//   mistake_step    integer or quoted digits, required, 0-based
//   mistake_reason  string, optional
//   ground_truth    optional; kept for bookkeeping, never shown to methods

#include "error.hpp"
#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace faultattr {

using Json = nlohmann::json;

struct Step {
    std::size_t index = 0;
    std::string agent_name;
    std::string content;

    friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
    std::string problem;
    std::vector<Step> steps;
    std::optional<bool> final_outcome;

    std::size_t size() const noexcept { return steps.size(); }
    bool empty() const noexcept { return steps.empty(); }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct GroundTruthLabel {
    std::string mistake_agent;
    std::size_t mistake_step = 0;
    std::optional<std::string> mistake_reason;

    friend bool operator==(const GroundTruthLabel&, const GroundTruthLabel&) = default;
};

struct DatasetRecord {
    std::string record_id;
    Trajectory trajectory;
    GroundTruthLabel label;
    std::optional<std::string> ground_truth_answer;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct DatasetStats {
    std::size_t n_samples = 0;
    double avg_steps = 0.0;
    double avg_token_size = 0.0;
};

struct ConsistencyReport {
    std::string record_id;
    bool is_consistent = false;
    std::string reason;
};

/// Maps text to an approximate token count.
using TokenCounter = std::function<std::size_t(std::string_view)>;

inline std::size_t count_code_points(std::string_view text) {
    return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0U) != 0x80U;
    }));
}

/// ceil(characters / 4)
inline std::size_t approx_token_count(std::string_view text) {
    return (count_code_points(text) + 3) / 4;
}

inline TokenCounter default_token_counter() { return &approx_token_count; }

/// Trim, ASCII case-fold, drop a trailing "(qualifier)", and collapse runs
/// of whitespace/underscores into a single underscore.
inline std::string normalize_agent_name(std::string_view name) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!name.empty() && is_space(name.front())) name.remove_prefix(1);
    while (!name.empty() && is_space(name.back())) name.remove_suffix(1);
    if (!name.empty() && name.back() == ')') {
        if (auto open = name.rfind('('); open != std::string_view::npos && open > 0) {
            auto base = name.substr(0, open);
            while (!base.empty() && is_space(base.back())) base.remove_suffix(1);
            if (!base.empty()) name = base;
        }
    }
    std::string out;
    out.reserve(name.size());
    bool pending_sep = false;
    for (char c : name) {
        if (is_space(c) || c == '_') {
            pending_sep = true;
            continue;
        }
        if (pending_sep && !out.empty()) out.push_back('_');
        pending_sep = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

inline bool same_agent(std::string_view a, std::string_view b) {
    return normalize_agent_name(a) == normalize_agent_name(b);
}

/// One line per step, "Step {i} - {agent}: {content}", for steps in [first, last].
inline std::string format_log(const Trajectory& trajectory, std::size_t first, std::size_t last) {
    std::string out;
    for (std::size_t i = first; i <= last && i < trajectory.steps.size(); ++i) {
        const auto& step = trajectory.steps[i];
        if (!out.empty()) out.push_back('\n');
        out += "Step " + std::to_string(step.index) + " - " + step.agent_name + ": " + step.content;
    }
    return out;
}

inline std::string format_log(const Trajectory& trajectory) {
    if (trajectory.empty()) return {};
    return format_log(trajectory, 0, trajectory.size() - 1);
}

namespace detail {

inline std::optional<long long> parse_integer(std::string_view text) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
    return value;
}

inline std::string json_text(const Json& value) {
    return value.is_string() ? value.get<std::string>() : value.dump();
}

} // namespace detail

/// Parses one Who&When log document.
inline DatasetRecord parse_record(std::string_view raw, std::string record_id) {
    Json doc = Json::parse(raw, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw Error(ErrorCode::malformed_record, record_id + ": not a JSON object");

    auto require = [&](const char* key) -> const Json& {
        auto it = doc.find(key);
        if (it == doc.end() || it->is_null())
            throw Error(ErrorCode::malformed_record, record_id + ": missing key '" + key + "'");
        return *it;
    };

    DatasetRecord record;
    record.record_id = std::move(record_id);
    record.trajectory.problem = detail::json_text(require("question"));

    const Json& history = require("history");
    if (!history.is_array() || history.empty())
        throw Error(ErrorCode::malformed_record, record.record_id + ": empty history");
    for (std::size_t i = 0; i < history.size(); ++i) {
        const Json& entry = history[i];
        if (!entry.is_object() || !entry.contains("content"))
            throw Error(ErrorCode::malformed_record,
                        record.record_id + ": history entry " + std::to_string(i) + " lacks content");
        std::string agent;
        if (auto it = entry.find("name"); it != entry.end() && it->is_string() && !it->get<std::string>().empty())
            agent = it->get<std::string>();
        else if (auto role = entry.find("role"); role != entry.end() && role->is_string())
            agent = role->get<std::string>();
        if (normalize_agent_name(agent).empty())
            throw Error(ErrorCode::malformed_record,
                        record.record_id + ": history entry " + std::to_string(i) + " has no agent");
        record.trajectory.steps.push_back(Step{i, std::move(agent), detail::json_text(entry["content"])});
    }

    record.label.mistake_agent = detail::json_text(require("mistake_agent"));
    const Json& step = require("mistake_step");
    std::optional<long long> step_value;
    if (step.is_number_integer())
        step_value = step.get<long long>();
    else if (step.is_string())
        step_value = detail::parse_integer(step.get<std::string>());
    if (!step_value)
        throw Error(ErrorCode::non_integer_step, record.record_id + ": mistake_step " + step.dump());
    if (*step_value < 0)
        throw Error(ErrorCode::malformed_record, record.record_id + ": negative mistake_step");
    record.label.mistake_step = static_cast<std::size_t>(*step_value);

    if (auto it = doc.find("mistake_reason"); it != doc.end() && !it->is_null())
        record.label.mistake_reason = detail::json_text(*it);
    if (auto it = doc.find("ground_truth"); it != doc.end() && !it->is_null())
        record.ground_truth_answer = detail::json_text(*it);
    if (auto it = doc.find("is_correct"); it != doc.end() && it->is_boolean())
        record.trajectory.final_outcome = it->get<bool>();
    return record;
}

/// Canonical serialization in the same layout parse_record reads.
inline std::string serialize_record(const DatasetRecord& record) {
    Json doc = Json::object();
    doc["question"] = record.trajectory.problem;
    Json history = Json::array();
    for (const auto& step : record.trajectory.steps)
        history.push_back({{"content", step.content}, {"name", step.agent_name}});
    doc["history"] = std::move(history);
    doc["mistake_agent"] = record.label.mistake_agent;
    doc["mistake_step"] = std::to_string(record.label.mistake_step);
    if (record.label.mistake_reason) doc["mistake_reason"] = *record.label.mistake_reason;
    if (record.ground_truth_answer) doc["ground_truth"] = *record.ground_truth_answer;
    if (record.trajectory.final_outcome) doc["is_correct"] = *record.trajectory.final_outcome;
    return doc.dump(2) + "\n";
}

inline ConsistencyReport validate_label(const DatasetRecord& record) {
    ConsistencyReport report{record.record_id, true, ""};
    const auto& steps = record.trajectory.steps;
    const auto& label = record.label;
    if (label.mistake_step >= steps.size()) {
        report.is_consistent = false;
        report.reason = "mistake_step " + std::to_string(label.mistake_step) + " out of range (log has " +
                        std::to_string(steps.size()) + " steps)";
    } else if (!same_agent(steps[label.mistake_step].agent_name, label.mistake_agent)) {
        report.is_consistent = false;
        report.reason = "mistake_agent '" + label.mistake_agent + "' but step " +
                        std::to_string(label.mistake_step) + " is by '" +
                        steps[label.mistake_step].agent_name + "'";
    }
    return report;
}

/// Numeric ids sort numerically ("2" < "10"), everything else lexicographically.
inline bool record_id_less(std::string_view a, std::string_view b) {
    auto na = detail::parse_integer(a);
    auto nb = detail::parse_integer(b);
    if (na && nb && *na != *nb) return *na < *nb;
    if (na.has_value() != nb.has_value()) return na.has_value();
    return a < b;
}

inline DatasetStats compute_stats(const std::vector<DatasetRecord>& records,
                                  const TokenCounter& counter = default_token_counter()) {
    if (records.empty()) throw Error(ErrorCode::empty_dataset, "no records");
    std::size_t steps = 0;
    std::size_t tokens = 0;
    for (const auto& r : records) {
        steps += r.trajectory.size();
        tokens += counter(format_log(r.trajectory));
    }
    const auto n = static_cast<double>(records.size());
    return DatasetStats{records.size(), static_cast<double>(steps) / n, static_cast<double>(tokens) / n};
}

/// Rank-based quartiles within this dataset: sort by (tokens, record id) and
/// give rank r of n the quartile floor(4r/n)+1.
inline std::map<std::string, int> assign_length_quartiles(const std::vector<DatasetRecord>& records,
                                                          const TokenCounter& counter = default_token_counter()) {
    if (records.size() < 4)
        throw Error(ErrorCode::too_few_records, "need at least 4 records, got " + std::to_string(records.size()));
    std::vector<std::pair<std::size_t, const DatasetRecord*>> ranked;
    ranked.reserve(records.size());
    for (const auto& r : records) ranked.emplace_back(counter(format_log(r.trajectory)), &r);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return record_id_less(a.second->record_id, b.second->record_id);
    });
    std::map<std::string, int> quartiles;
    const std::size_t n = ranked.size();
    for (std::size_t rank = 0; rank < n; ++rank)
        quartiles[ranked[rank].second->record_id] = static_cast<int>(4 * rank / n) + 1;
    return quartiles;
}

struct LoadFailure {
    std::string file;
    std::string error;
};

struct LoadedDataset {
    std::vector<DatasetRecord> records;
    std::vector<LoadFailure> failures;
};

/// Loads every *.json file in a directory, sorted by record id. Files that
/// fail to parse are reported, never dropped silently.
inline LoadedDataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::io_error, "not a directory: " + dir.string());
    LoadedDataset out;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        return record_id_less(a.stem().string(), b.stem().string());
    });
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::stringstream buffer;
        buffer << in.rdbuf();
        try {
            out.records.push_back(parse_record(buffer.str(), file.stem().string()));
        } catch (const Error& e) {
            out.failures.push_back({file.filename().string(), e.what()});
        }
    }
    return out;
}

inline void write_record(const std::filesystem::path& dir, const DatasetRecord& record) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / (record.record_id + ".json"), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write record " + record.record_id);
    out << serialize_record(record);
}

inline Json to_json(const ConsistencyReport& report) {
    return {{"record_id", report.record_id}, {"is_consistent", report.is_consistent}, {"reason", report.reason}};
}

inline Json to_json(const DatasetStats& stats) {
    return {{"n_samples", stats.n_samples}, {"avg_steps", stats.avg_steps}, {"avg_token_size", stats.avg_token_size}};
}

} // namespace faultattr
