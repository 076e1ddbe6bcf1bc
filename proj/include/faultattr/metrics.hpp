#pragma once

// Scoring of attribution results against labels.

#include "attrib.hpp"
#include "error.hpp"
#include "trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace faultattr {

struct ScoredOutcome {
    std::string record_id;
    std::optional<Prediction> predicted;
    Prediction truth;
    Status status = Status::converged;
};

struct ScoringOptions {
    bool require_agent = false;   // step metrics also demand the right agent
    int max_tolerance = 5;
};

struct AccuracyReport {
    std::size_t n = 0;
    std::optional<double> strict_step;
    std::map<int, std::optional<double>> tolerant_step;
    std::optional<double> agent_level;
};

namespace detail {

inline void require_outcomes(const std::vector<ScoredOutcome>& outcomes) {
    if (outcomes.empty()) throw Error(ErrorCode::empty_outcomes, "no outcomes to score");
}

inline bool step_hit(const ScoredOutcome& o, long long k, const ScoringOptions& options) {
    if (!o.predicted) return false;
    const long long diff = o.predicted->step > o.truth.step ? o.predicted->step - o.truth.step
                                                            : o.truth.step - o.predicted->step;
    if (diff > k) return false;
    return !options.require_agent || same_agent(o.predicted->agent_name, o.truth.agent_name);
}

} // namespace detail

inline double tolerant_step_accuracy(const std::vector<ScoredOutcome>& outcomes, int k, const ScoringOptions& options = {}) {
    detail::require_outcomes(outcomes);
    if (k < 0) throw Error(ErrorCode::precondition_violation, "tolerance must be >= 0");
    const auto hits = std::count_if(outcomes.begin(), outcomes.end(),
                                    [&](const ScoredOutcome& o) { return detail::step_hit(o, k, options); });
    return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

inline double strict_step_accuracy(const std::vector<ScoredOutcome>& outcomes, const ScoringOptions& options = {}) {
    return tolerant_step_accuracy(outcomes, 0, options);
}

inline double agent_level_accuracy(const std::vector<ScoredOutcome>& outcomes) {
    detail::require_outcomes(outcomes);
    const auto hits = std::count_if(outcomes.begin(), outcomes.end(), [](const ScoredOutcome& o) {
        return o.predicted && same_agent(o.predicted->agent_name, o.truth.agent_name);
    });
    return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

/// Empty input yields n=0 and null accuracies instead of raising.
inline AccuracyReport accuracy_report(const std::vector<ScoredOutcome>& outcomes, const ScoringOptions& options = {}) {
    AccuracyReport report;
    report.n = outcomes.size();
    for (int k = 0; k <= options.max_tolerance; ++k)
        report.tolerant_step[k] = outcomes.empty() ? std::nullopt : std::optional(tolerant_step_accuracy(outcomes, k, options));
    report.strict_step = report.tolerant_step[0];
    if (!outcomes.empty()) report.agent_level = agent_level_accuracy(outcomes);
    return report;
}

struct TrivialBaseline {
    std::string agent_name;
    double accuracy = 0;
};

/// Modal ground-truth agent (normalized; ties lexicographic) and the accuracy
/// of always predicting it.
inline TrivialBaseline trivial_agent_baseline(const std::vector<DatasetRecord>& records) {
    if (records.empty()) throw Error(ErrorCode::empty_outcomes, "no labelled records");
    std::map<std::string, std::size_t> counts;
    std::map<std::string, std::string> display;
    for (const auto& r : records) {
        const auto key = normalize_agent_name(r.label.mistake_agent);
        ++counts[key];
        display.emplace(key, r.label.mistake_agent);
    }
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return {display[best->first], static_cast<double>(best->second) / static_cast<double>(records.size())};
}

// ---------------------------------------------------------------------------
// Convergence

struct ChangeRate {
    std::size_t changed = 0;
    std::size_t total = 0;
    double rate() const { return total ? static_cast<double>(changed) / static_cast<double>(total) : 0.0; }
};

struct ConvergenceReport {
    std::map<int, ChangeRate> changed_pair_rate;                            // key k: transition k -> k+1
    std::map<int, std::map<long long, std::size_t>> per_iteration_histogram; // iteration -> step -> count
};

/// Only records with an entry at an iteration contribute to it, so records
/// that converged earlier drop out of later denominators.
inline ConvergenceReport changed_pair_rate(const std::vector<std::vector<HistoryEntry>>& histories) {
    const bool any_multi = std::any_of(histories.begin(), histories.end(), [](const auto& h) { return h.size() >= 2; });
    if (!any_multi) throw Error(ErrorCode::no_multi_iteration_runs, "no history reaches a second iteration");
    ConvergenceReport report;
    for (const auto& history : histories) {
        for (const auto& e : history) ++report.per_iteration_histogram[e.iteration][e.candidate.step_number];
        for (std::size_t i = 0; i + 1 < history.size(); ++i) {
            auto& cell = report.changed_pair_rate[history[i].iteration];
            ++cell.total;
            const auto& a = history[i].candidate;
            const auto& b = history[i + 1].candidate;
            if (a.step_number != b.step_number || !same_agent(a.agent_name, b.agent_name)) ++cell.changed;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Quartiles

inline std::map<int, AccuracyReport> quartile_breakdown(const std::vector<ScoredOutcome>& outcomes,
                                                        const std::map<std::string, int>& quartile_map,
                                                        const ScoringOptions& options = {}) {
    std::map<int, std::vector<ScoredOutcome>> buckets{{1, {}}, {2, {}}, {3, {}}, {4, {}}};
    for (const auto& o : outcomes) {
        const auto it = quartile_map.find(o.record_id);
        if (it == quartile_map.end()) throw Error(ErrorCode::missing_quartile, "no quartile for '" + o.record_id + "'");
        buckets[it->second].push_back(o);
    }
    std::map<int, AccuracyReport> out;
    for (const auto& [q, bucket] : buckets) out[q] = accuracy_report(bucket, options);
    return out;
}

// ---------------------------------------------------------------------------
// Joining and status counts

inline std::vector<ScoredOutcome> join_outcomes(const std::vector<AttributionResult>& results,
                                                const std::vector<DatasetRecord>& records) {
    std::map<std::string, const DatasetRecord*> by_id;
    for (const auto& r : records) by_id[r.record_id] = &r;
    std::set<std::string> seen;
    std::vector<ScoredOutcome> out;
    for (const auto& result : results) {
        const auto it = by_id.find(result.record_id);
        if (it == by_id.end()) throw Error(ErrorCode::join_failure, "result for unknown record '" + result.record_id + "'");
        if (!seen.insert(result.record_id).second)
            throw Error(ErrorCode::join_failure, "duplicate result for record '" + result.record_id + "'");
        const auto& label = it->second->label;
        out.push_back({result.record_id, result.final,
                       Prediction{label.mistake_agent, static_cast<long long>(label.mistake_step)}, result.status});
    }
    return out;
}

inline std::map<std::string, std::size_t> status_counts(const std::vector<ScoredOutcome>& outcomes) {
    std::map<std::string, std::size_t> counts;
    for (auto s : {Status::converged, Status::max_iterations, Status::no_fault_found, Status::parse_failure,
                   Status::context_overflow})
        counts[std::string(to_string(s))] = 0;
    for (const auto& o : outcomes) ++counts[std::string(to_string(o.status))];
    return counts;
}

/// Step accuracy had the RAFFLES run stopped after k iterations, k = 1..max.
inline std::map<int, double> accuracy_by_iteration(const std::vector<AttributionResult>& results,
                                                   const std::vector<ScoredOutcome>& outcomes, int threshold,
                                                   const ScoringOptions& options = {}) {
    std::map<int, double> series;
    int max_k = 0;
    for (const auto& r : results)
        for (const auto& e : r.history) max_k = std::max(max_k, e.iteration);
    for (int k = 1; k <= max_k; ++k) {
        std::vector<ScoredOutcome> budgeted = outcomes;
        for (std::size_t i = 0; i < results.size(); ++i)
            if (!results[i].history.empty()) budgeted[i].predicted = prediction_at_budget(results[i].history, k, threshold);
        series[k] = strict_step_accuracy(budgeted, options);
    }
    return series;
}

// ---------------------------------------------------------------------------
// Formatting

/// Percentage with two decimals ("64.29"); "n/a" for an empty bucket.
inline std::string format_percent(const std::optional<double>& fraction) {
    if (!fraction) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", std::round(*fraction * 10000.0) / 100.0);
    return buf;
}

inline Json to_json(const AccuracyReport& r) {
    auto value = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
    Json tolerant = Json::object();
    for (const auto& [k, v] : r.tolerant_step) tolerant[std::to_string(k)] = value(v);
    return {{"n", r.n}, {"strict_step", value(r.strict_step)}, {"tolerant_step", tolerant}, {"agent_level", value(r.agent_level)}};
}

} // namespace faultattr
