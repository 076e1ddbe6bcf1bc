#pragma once

// Batch runs, resumable result files, reports and synthetic dataset export.

#include "attrib.hpp"
#include "backend.hpp"
#include "error.hpp"
#include "faultlab.hpp"
#include "http_backend.hpp"
#include "metrics.hpp"
#include "prompt_assets.hpp"
#include "trace.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace faultattr {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

enum class BackendKind { openai, scripted, replay };

inline std::string_view to_string(BackendKind k) {
    switch (k) {
    case BackendKind::openai: return "openai";
    case BackendKind::scripted: return "scripted";
    case BackendKind::replay: return "replay";
    }
    return "openai";
}

inline BackendKind backend_kind_from_string(std::string_view s) {
    for (auto k : {BackendKind::openai, BackendKind::scripted, BackendKind::replay})
        if (to_string(k) == s) return k;
    throw Error(ErrorCode::config_invalid, "unknown backend kind '" + std::string(s) + "'");
}

struct RunConfig {
    fs::path dataset_path;
    std::string subset;             // subdirectory of dataset_path, if any
    MethodConfig method;
    BackendConfig backend;
    BackendKind backend_kind = BackendKind::openai;
    fs::path script_path;           // scripted backend responses (JSONL)
    fs::path replay_path;           // transcript to replay
    std::size_t workers = 1;
    fs::path out_dir;
    std::string run_id = "run";
    bool resume = false;
    std::uint64_t seed = 0;
    bool dump_prompts = false;

    fs::path dataset_dir() const { return subset.empty() ? dataset_path : dataset_path / subset; }
};

inline Json to_json(const BackendConfig& c) {
    Json backoff = Json::array();
    for (auto d : c.retry.backoff) backoff.push_back(d.count());
    return {{"endpoint_url", c.endpoint_url},
            {"credential_env", c.credential_env},
            {"model_id", c.model_id},
            {"context_limit_tokens", c.context_limit_tokens},
            {"max_output_tokens", c.max_output_tokens},
            {"retry", {{"max_attempts", c.retry.max_attempts}, {"backoff_ms", backoff}}},
            {"timeout_s", c.timeout_s},
            {"max_in_flight", c.max_in_flight},
            {"extra", c.extra}};
}

/// Missing keys keep their defaults. A literal credential is rejected: only
/// the name of the environment variable belongs in a profile.
inline BackendConfig backend_config_from_json(const Json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::config_invalid, "backend profile must be an object");
    for (const char* forbidden : {"api_key", "credential", "token"})
        if (doc.contains(forbidden))
            throw Error(ErrorCode::config_invalid, std::string("backend profile must not contain '") + forbidden +
                                                       "'; name an environment variable in credential_env");
    BackendConfig c;
    c.endpoint_url = doc.value("endpoint_url", c.endpoint_url);
    c.credential_env = doc.value("credential_env", c.credential_env);
    c.model_id = doc.value("model_id", c.model_id);
    c.context_limit_tokens = doc.value("context_limit_tokens", c.context_limit_tokens);
    c.max_output_tokens = doc.value("max_output_tokens", c.max_output_tokens);
    c.timeout_s = doc.value("timeout_s", c.timeout_s);
    c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
    c.extra = doc.value("extra", Json::object());
    if (auto r = doc.find("retry"); r != doc.end()) {
        c.retry.max_attempts = r->value("max_attempts", c.retry.max_attempts);
        if (r->contains("backoff_ms")) {
            c.retry.backoff.clear();
            for (const auto& ms : r->at("backoff_ms")) c.retry.backoff.emplace_back(ms.get<long long>());
        }
    }
    return c;
}

inline BackendConfig load_backend_profile(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::config_invalid, "cannot read backend profile " + path.string());
    Json doc = Json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::config_invalid, "backend profile is not JSON: " + path.string());
    return backend_config_from_json(doc);
}

inline Json to_json(const MethodConfig& m) {
    return {{"name", to_string(m.method)},
            {"max_iterations", m.raffles.max_iterations},
            {"confidence_threshold", m.raffles.confidence_threshold},
            {"evaluator4_pass_score", m.raffles.evaluator4_pass_score},
            {"evaluator4_fail_score", m.raffles.evaluator4_fail_score},
            {"max_tool_calls", m.max_tool_calls}};
}

inline MethodConfig method_config_from_json(const Json& doc) {
    MethodConfig m;
    m.method = method_from_string(doc.value("name", std::string("raffles")));
    m.raffles.max_iterations = doc.value("max_iterations", m.raffles.max_iterations);
    m.raffles.confidence_threshold = doc.value("confidence_threshold", m.raffles.confidence_threshold);
    m.raffles.evaluator4_pass_score = doc.value("evaluator4_pass_score", m.raffles.evaluator4_pass_score);
    m.raffles.evaluator4_fail_score = doc.value("evaluator4_fail_score", m.raffles.evaluator4_fail_score);
    m.max_tool_calls = doc.value("max_tool_calls", m.max_tool_calls);
    return m;
}

/// Effective configuration with defaults expanded. The resume flag is an
/// action, not part of the configuration, so it is left out.
inline Json to_json(const RunConfig& c) {
    return {{"dataset_path", c.dataset_path.generic_string()},
            {"subset", c.subset},
            {"method", to_json(c.method)},
            {"backend", to_json(c.backend)},
            {"backend_kind", to_string(c.backend_kind)},
            {"script_path", c.script_path.generic_string()},
            {"replay_path", c.replay_path.generic_string()},
            {"workers", c.workers},
            {"out_dir", c.out_dir.generic_string()},
            {"run_id", c.run_id},
            {"seed", c.seed},
            {"dump_prompts", c.dump_prompts}};
}

inline RunConfig run_config_from_json(const Json& doc) {
    if (!doc.is_object()) throw Error(ErrorCode::config_invalid, "run config must be an object");
    RunConfig c;
    c.dataset_path = doc.value("dataset_path", std::string());
    c.subset = doc.value("subset", std::string());
    if (doc.contains("method")) c.method = method_config_from_json(doc.at("method"));
    if (doc.contains("backend")) c.backend = backend_config_from_json(doc.at("backend"));
    c.backend_kind = backend_kind_from_string(doc.value("backend_kind", std::string("openai")));
    c.script_path = doc.value("script_path", std::string());
    c.replay_path = doc.value("replay_path", std::string());
    c.workers = doc.value("workers", c.workers);
    c.out_dir = doc.value("out_dir", std::string());
    c.run_id = doc.value("run_id", c.run_id);
    c.resume = doc.value("resume", false);
    c.seed = doc.value("seed", c.seed);
    c.dump_prompts = doc.value("dump_prompts", false);
    return c;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Worker count and prompt dumping do not change results, so a resume may alter them.
inline std::string config_hash(const RunConfig& c) {
    auto doc = to_json(c);
    doc.erase("workers");
    doc.erase("dump_prompts");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(doc.dump())));
    return buf;
}

inline void validate(const RunConfig& c) {
    if (c.dataset_path.empty()) throw Error(ErrorCode::config_invalid, "dataset path is required");
    if (c.out_dir.empty()) throw Error(ErrorCode::config_invalid, "output directory is required");
    if (c.workers < 1) throw Error(ErrorCode::config_invalid, "workers must be >= 1");
    if (c.run_id.empty()) throw Error(ErrorCode::config_invalid, "run_id must not be empty");
    if (c.method.max_tool_calls < 1) throw Error(ErrorCode::config_invalid, "max_tool_calls must be >= 1");
    validate(c.method.raffles);
    if (c.backend_kind == BackendKind::scripted && c.script_path.empty())
        throw Error(ErrorCode::config_invalid, "scripted backend needs a script file");
    if (c.backend_kind == BackendKind::replay && c.replay_path.empty())
        throw Error(ErrorCode::config_invalid, "replay needs a transcript file");
    if (c.backend_kind == BackendKind::openai && c.backend.endpoint_url.empty())
        throw Error(ErrorCode::backend_unavailable, "live backend needs endpoint_url in the backend profile");
}

// ---------------------------------------------------------------------------
// Result files

struct ResultFile {
    std::vector<AttributionResult> results;
    std::uintmax_t valid_bytes = 0;   // length of the prefix made of complete lines
    bool torn_tail = false;
};

/// Reads results.jsonl; a final line without newline or unparseable JSON is
/// treated as torn and excluded.
inline ResultFile read_results(const fs::path& path) {
    ResultFile out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < content.size()) {
        const auto nl = content.find('\n', pos);
        if (nl == std::string::npos) {
            out.torn_tail = true;
            break;
        }
        const std::string line = content.substr(pos, nl - pos);
        Json doc = Json::parse(line, nullptr, false);
        if (doc.is_discarded()) {
            out.torn_tail = true;
            break;
        }
        out.results.push_back(attribution_result_from_json(doc));
        pos = nl + 1;
        out.valid_bytes = pos;
    }
    return out;
}

struct RecordOutcome {
    std::string record_id;
    std::string status;   // a Status name, or "error"
    int llm_calls = 0;
    std::string error;
};

struct RunManifest {
    Json config;
    std::string config_hash;
    std::string run_id;
    std::uint64_t seed = 0;
    std::string template_version{prompts::kTemplateVersion};
    std::vector<RecordOutcome> records;
    long long llm_calls_total = 0;
    double elapsed_s = 0;
    std::string started_at;
    std::string finished_at;
};

inline Json to_json(const RunManifest& m) {
    Json records = Json::array();
    std::map<std::string, std::size_t> counts;
    for (const auto& r : m.records) {
        Json line{{"record_id", r.record_id}, {"status", r.status}, {"llm_calls", r.llm_calls}};
        if (!r.error.empty()) line["error"] = r.error;
        records.push_back(std::move(line));
        ++counts[r.status];
    }
    return {{"run_id", m.run_id},
            {"config", m.config},
            {"config_hash", m.config_hash},
            {"seed", m.seed},
            {"template_version", m.template_version},
            {"records", records},
            {"status_counts", counts},
            {"llm_calls_total", m.llm_calls_total},
            {"elapsed_s", m.elapsed_s},
            {"started_at", m.started_at},
            {"finished_at", m.finished_at}};
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
    out << text;
}

// ---------------------------------------------------------------------------
// Run

inline std::vector<DatasetRecord> load_clean_dataset(const fs::path& dir) {
    auto loaded = load_dataset(dir);
    if (!loaded.failures.empty())
        throw Error(ErrorCode::malformed_record,
                    loaded.failures.front().file + ": " + loaded.failures.front().error + " (" +
                        std::to_string(loaded.failures.size()) + " file(s) failed)");
    if (loaded.records.empty()) throw Error(ErrorCode::empty_dataset, "no records in " + dir.string());
    return std::move(loaded.records);
}

inline std::unique_ptr<ChatBackend> make_backend(const RunConfig& c) {
    switch (c.backend_kind) {
    case BackendKind::scripted: return std::make_unique<ScriptedBackend>(ScriptedBackend::from_jsonl(c.script_path));
    case BackendKind::replay: return std::make_unique<ReplayBackend>(Transcript::read_jsonl(c.replay_path));
    case BackendKind::openai: return std::make_unique<OpenAICompatibleBackend>(c.backend);
    }
    throw Error(ErrorCode::config_invalid, "unknown backend kind");
}

/// Runs the configured method over every record not already in results.jsonl.
/// Results are committed in record order, so worker count does not change the
/// file. Errors other than the statuses a method reports are recorded in the
/// manifest and leave the record pending for the next resume.
inline RunManifest run(const RunConfig& config, ChatBackend* backend_override = nullptr,
                       const std::atomic<bool>* stop = nullptr) {
    validate(config);
    const auto started = std::chrono::steady_clock::now();
    RunManifest manifest;
    manifest.config = to_json(config);
    manifest.config_hash = config_hash(config);
    manifest.run_id = config.run_id;
    manifest.seed = config.seed;
    manifest.started_at = utc_timestamp();

    const auto records = load_clean_dataset(config.dataset_dir());
    fs::create_directories(config.out_dir);
    const auto results_path = config.out_dir / "results.jsonl";
    const auto manifest_path = config.out_dir / "manifest.json";

    ResultFile previous;
    if (fs::exists(results_path) && fs::file_size(results_path) > 0) {
        if (!config.resume)
            throw Error(ErrorCode::config_invalid,
                        "output directory already holds results; pass --resume or choose another directory");
        if (fs::exists(manifest_path)) {
            Json stored = Json::parse(read_text(manifest_path), nullptr, false);
            if (!stored.is_discarded() && stored.value("config_hash", std::string()) != manifest.config_hash)
                throw Error(ErrorCode::config_invalid, "resume refused: configuration differs from the stored run");
        }
        previous = read_results(results_path);
        if (previous.torn_tail) fs::resize_file(results_path, previous.valid_bytes);
    }

    std::set<std::string> done;
    for (const auto& r : previous.results) done.insert(r.record_id);
    std::vector<const DatasetRecord*> pending;
    for (const auto& r : records)
        if (!done.contains(r.record_id)) pending.push_back(&r);

    std::unique_ptr<ChatBackend> owned;
    ChatBackend* backend = backend_override;
    if (!backend) {
        owned = make_backend(config);
        backend = owned.get();
    }
    Transcript transcript(config.run_id);
    transcript.open_sink(config.out_dir / "transcript.jsonl", config.resume);
    LlmClient client(config.backend, *backend, &transcript);
    SessionOptions session_options;
    if (config.dump_prompts) session_options.prompt_dump_dir = config.out_dir / "prompts";

    std::ofstream results_out(results_path, std::ios::binary | std::ios::app);
    if (!results_out) throw Error(ErrorCode::io_error, "cannot open " + results_path.string());

    using Slot = std::variant<std::monostate, AttributionResult, RecordOutcome>;
    std::vector<Slot> slots(pending.size());
    std::vector<bool> filled(pending.size(), false);
    std::size_t next_commit = 0;
    std::mutex commit_mutex;
    std::vector<RecordOutcome> attempted;

    auto commit = [&](std::size_t index, Slot slot) {
        std::lock_guard lock(commit_mutex);
        slots[index] = std::move(slot);
        filled[index] = true;
        while (next_commit < pending.size() && filled[next_commit]) {
            auto& ready = slots[next_commit];
            if (auto* result = std::get_if<AttributionResult>(&ready)) {
                results_out << to_json(*result).dump() << '\n';
                results_out.flush();
                attempted.push_back({result->record_id, std::string(to_string(result->status)), result->llm_calls, {}});
            } else if (auto* failure = std::get_if<RecordOutcome>(&ready)) {
                attempted.push_back(*failure);
            }
            ready = std::monostate{};
            ++next_commit;
        }
    };

    std::atomic<std::size_t> next_index{0};
    auto worker = [&] {
        for (;;) {
            if (stop && stop->load()) return;
            const std::size_t i = next_index.fetch_add(1);
            if (i >= pending.size()) return;
            const auto& record = *pending[i];
            Session session(client, record.record_id, session_options);
            try {
                auto result = attribute(record.trajectory, session, config.method);
                commit(i, std::move(result));
            } catch (const std::exception& e) {
                commit(i, RecordOutcome{record.record_id, "error", session.llm_calls(), e.what()});
            }
        }
    };

    const std::size_t n_threads = std::min<std::size_t>(config.workers, std::max<std::size_t>(1, pending.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    for (const auto& r : previous.results)
        manifest.records.push_back({r.record_id, std::string(to_string(r.status)), r.llm_calls, {}});
    for (auto& r : attempted) manifest.records.push_back(std::move(r));
    std::sort(manifest.records.begin(), manifest.records.end(),
              [](const RecordOutcome& a, const RecordOutcome& b) { return record_id_less(a.record_id, b.record_id); });
    for (const auto& r : manifest.records) manifest.llm_calls_total += r.llm_calls;
    manifest.finished_at = utc_timestamp();
    manifest.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_text(manifest_path, to_json(manifest).dump(2) + "\n");
    return manifest;
}

// ---------------------------------------------------------------------------
// Report

struct ReportOptions {
    std::vector<int> tolerances{0, 1, 2, 3, 4, 5};
    bool require_agent = false;
};

struct ReportSummary {
    std::string method;
    AccuracyReport accuracy;
    std::map<std::string, std::size_t> statuses;
    std::optional<TrivialBaseline> trivial;
    std::optional<ConvergenceReport> convergence;
    std::map<int, double> accuracy_by_iteration;
    std::map<int, AccuracyReport> quartiles;
    std::string text;
};

namespace detail {

inline std::string table_row(const std::string& label, const AccuracyReport& r, const std::vector<int>& tolerances) {
    std::string row = "| " + label + " | " + format_percent(r.strict_step);
    for (int k : tolerances)
        if (k > 0) row += " | " + format_percent(r.tolerant_step.contains(k) ? r.tolerant_step.at(k) : std::nullopt);
    return row + " | " + format_percent(r.agent_level) + " |";
}

inline std::string table_header(const std::string& first, const std::vector<int>& tolerances) {
    std::string head = "| " + first + " | Step-level";
    std::string rule = "|---|---";
    for (int k : tolerances)
        if (k > 0) {
            head += " | ±" + std::to_string(k);
            rule += "|---";
        }
    return head + " | Agent-level |\n" + rule + "|---|\n";
}

} // namespace detail

/// Scores results against the dataset labels and writes report.txt,
/// report.jsonl and tab-separated plot series into out_dir.
inline ReportSummary report(const fs::path& results_path, const fs::path& dataset_dir, const fs::path& out_dir,
                            const ReportOptions& options = {}) {
    const auto records = load_clean_dataset(dataset_dir);
    const auto file = read_results(results_path);
    if (file.results.empty()) throw Error(ErrorCode::empty_outcomes, "no results in " + results_path.string());
    for (int k : options.tolerances)
        if (k < 0) throw Error(ErrorCode::config_invalid, "tolerances must be >= 0");
    const auto outcomes = join_outcomes(file.results, records);

    ScoringOptions scoring;
    scoring.require_agent = options.require_agent;
    scoring.max_tolerance = options.tolerances.empty() ? 0 : *std::max_element(options.tolerances.begin(), options.tolerances.end());

    ReportSummary s;
    s.method = file.results.front().method;
    s.accuracy = accuracy_report(outcomes, scoring);
    s.statuses = status_counts(outcomes);

    std::vector<DatasetRecord> scored_records;
    std::set<std::string> scored_ids;
    for (const auto& o : outcomes) scored_ids.insert(o.record_id);
    for (const auto& r : records)
        if (scored_ids.contains(r.record_id)) scored_records.push_back(r);
    s.trivial = trivial_agent_baseline(scored_records);
    if (scored_records.size() >= 4) s.quartiles = quartile_breakdown(outcomes, assign_length_quartiles(scored_records), scoring);

    std::vector<std::vector<HistoryEntry>> histories;
    int threshold = RafflesConfig{}.confidence_threshold;
    for (const auto& r : file.results) {
        histories.push_back(r.history);
        if (r.trace.contains("confidence_threshold")) threshold = r.trace["confidence_threshold"].get<int>();
    }
    if (std::any_of(histories.begin(), histories.end(), [](const auto& h) { return h.size() >= 2; }))
        s.convergence = changed_pair_rate(histories);
    if (std::any_of(histories.begin(), histories.end(), [](const auto& h) { return !h.empty(); }))
        s.accuracy_by_iteration = accuracy_by_iteration(file.results, outcomes, threshold, scoring);

    std::ostringstream text;
    text << "Method: " << s.method << "\nRecords: " << s.accuracy.n << "\n\n";
    text << detail::table_header("Method", options.tolerances) << detail::table_row(s.method, s.accuracy, options.tolerances) << "\n\n";
    text << "Status counts:";
    for (const auto& [status, count] : s.statuses) text << " " << status << "=" << count;
    text << "\n\nTrivial agent baseline: " << s.trivial->agent_name << " " << format_percent(s.trivial->accuracy) << "\n";
    if (!s.quartiles.empty()) {
        text << "\nBy trajectory-length quartile:\n" << detail::table_header("Quartile", options.tolerances);
        for (const auto& [q, r] : s.quartiles)
            text << detail::table_row("Q" + std::to_string(q) + " (n=" + std::to_string(r.n) + ")", r, options.tolerances) << "\n";
    }
    if (!s.accuracy_by_iteration.empty()) {
        text << "\nStep-level accuracy by iteration budget:\n";
        for (const auto& [k, acc] : s.accuracy_by_iteration) text << "  K=" << k << ": " << format_percent(acc) << "\n";
    }
    if (s.convergence) {
        text << "\nChanged agent-step pairs:\n";
        for (const auto& [k, cell] : s.convergence->changed_pair_rate)
            text << "  " << k << "->" << k + 1 << ": " << format_percent(cell.rate()) << " (" << cell.changed << "/"
                 << cell.total << ")\n";
    }
    s.text = text.str();

    fs::create_directories(out_dir);
    write_text(out_dir / "report.txt", s.text);

    std::string lines;
    auto emit = [&](Json j) { lines += j.dump() + "\n"; };
    emit({{"kind", "accuracy"}, {"method", s.method}, {"report", to_json(s.accuracy)}});
    emit({{"kind", "status_counts"}, {"counts", s.statuses}});
    emit({{"kind", "trivial_agent_baseline"}, {"agent_name", s.trivial->agent_name}, {"accuracy", s.trivial->accuracy}});
    for (const auto& [q, r] : s.quartiles) emit({{"kind", "quartile"}, {"quartile", q}, {"report", to_json(r)}});
    for (const auto& [k, acc] : s.accuracy_by_iteration) emit({{"kind", "accuracy_by_iteration"}, {"iteration", k}, {"strict_step", acc}});
    if (s.convergence)
        for (const auto& [k, cell] : s.convergence->changed_pair_rate)
            emit({{"kind", "changed_pair_rate"}, {"from", k}, {"to", k + 1}, {"changed", cell.changed}, {"total", cell.total}, {"rate", cell.rate()}});
    write_text(out_dir / "report.jsonl", lines);

    std::string tolerance_tsv = "k\taccuracy\n";
    for (const auto& [k, v] : s.accuracy.tolerant_step) tolerance_tsv += std::to_string(k) + "\t" + format_percent(v) + "\n";
    write_text(out_dir / "accuracy_vs_tolerance.tsv", tolerance_tsv);
    if (!s.accuracy_by_iteration.empty()) {
        std::string tsv = "iteration\taccuracy\n";
        for (const auto& [k, acc] : s.accuracy_by_iteration) tsv += std::to_string(k) + "\t" + format_percent(acc) + "\n";
        write_text(out_dir / "accuracy_vs_iteration.tsv", tsv);
    }
    if (s.convergence) {
        std::string tsv = "iteration\tstep\tcount\n";
        for (const auto& [k, table] : s.convergence->per_iteration_histogram)
            for (const auto& [step, count] : table) tsv += std::to_string(k) + "\t" + std::to_string(step) + "\t" + std::to_string(count) + "\n";
        write_text(out_dir / "iteration_histograms.tsv", tsv);
    }
    if (!s.quartiles.empty()) {
        std::string tsv = "quartile\tn\tstrict_step\tagent_level\n";
        for (const auto& [q, r] : s.quartiles)
            tsv += std::to_string(q) + "\t" + std::to_string(r.n) + "\t" + format_percent(r.strict_step) + "\t" + format_percent(r.agent_level) + "\n";
        write_text(out_dir / "quartiles.tsv", tsv);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic dataset

/// Writes n failing synthetic runs labelled by the counterfactual oracle.
/// Record ids are 1..n; the same seed gives byte-identical files.
inline std::vector<DatasetRecord> faultlab_gen(std::uint64_t seed, std::size_t n, const fs::path& out_dir,
                                               const faultlab::GeneratorLimits& limits = {}) {
    if (n < 1) throw Error(ErrorCode::precondition_violation, "n must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<DatasetRecord> out;
    for (std::size_t i = 1; i <= n; ++i) {
        auto scenario = faultlab::random_faulty_scenario(rng, limits);
        scenario.name = std::to_string(i);
        auto record = faultlab::export_as_trajectory(scenario, faultlab::roll_forward(scenario));
        write_record(out_dir, record);
        out.push_back(std::move(record));
    }
    return out;
}

} // namespace faultattr
