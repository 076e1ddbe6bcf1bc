// Acceptance checks, one per criterion. Usage: acceptance <1..9>
// Prints "criterion N: PASS|FAIL|SKIP (detail)". Exit 0 on PASS, 1 on FAIL,
// 77 on SKIP.

#include "faultattr/runner.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/prompt_checks.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace faultattr;

namespace {

constexpr int kSkip = 77;

struct Verdict {
    enum Kind { pass, fail, skip } kind = pass;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            kind = fail;
            notes.push_back(what);
        }
    }
};

// ---------------------------------------------------------------------------
// 1. Fault formalism vs exhaustive search

constexpr int kScenarioCount = 50;
constexpr double kOracleBudgetSeconds = 5.0;

Verdict criterion1() {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1729);
    faultlab::GeneratorLimits limits;
    limits.max_horizon = 12;
    limits.max_actions_per_agent = 8;
    int agreed = 0;
    for (int i = 0; i < kScenarioCount; ++i) {
        const auto s = faultlab::random_faulty_scenario(rng, limits);
        const auto run = faultlab::roll_forward(s);
        const auto mine = faultlab::analyze(s, run, faultlab::declared_fault_judge(s));
        const auto theirs = oracle::exhaustive(s);
        const auto tag = "scenario " + std::to_string(i);
        v.require(s.schedule.size() <= 12, tag + ": horizon over 12");
        for (const auto& subset : s.agent_actions) v.require(subset.size() <= 8, tag + ": more than 8 actions");

        bool same = mine.decisive.has_value() == theirs.decisive.has_value();
        if (same && theirs.decisive)
            same = mine.decisive->agent == theirs.decisive->first && mine.decisive->step == theirs.decisive->second;
        v.require(same, tag + ": decisive fault disagrees with exhaustive search");
        agreed += same;

        std::set<std::size_t> causal_faults, joined;
        for (auto t : mine.step_faults)
            if (mine.causal_steps.contains(t)) causal_faults.insert(t);
        std::set_union(causal_faults.begin(), causal_faults.end(), mine.trivial_steps.begin(), mine.trivial_steps.end(),
                       std::inserter(joined, joined.end()));
        bool disjoint = true;
        for (auto t : causal_faults) disjoint = disjoint && !mine.trivial_steps.contains(t);
        v.require(joined == mine.step_faults && disjoint, tag + ": causal/trivial do not partition the faults");
        v.require(causal_faults == theirs.causal && mine.trivial_steps == theirs.trivial, tag + ": fault classes disagree");
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    v.require(seconds < kOracleBudgetSeconds, "took " + std::to_string(seconds) + " s");
    std::ostringstream note;
    note << agreed << "/" << kScenarioCount << " agree, " << seconds << " s";
    v.notes.insert(v.notes.begin(), note.str());
    return v;
}

// ---------------------------------------------------------------------------
// 2. RAFFLES mechanics

AttributionResult scripted_raffles(ScriptedBackend& backend, const Trajectory& t, int max_iterations) {
    LlmClient client(profile_128k(), backend);
    Session session(client, "r");
    RafflesConfig rc;
    rc.max_iterations = max_iterations;
    return raffles_attribute(t, session, rc);
}

Verdict criterion2() {
    Verdict v;
    const auto t = fixtures::trajectory_of_length(10);
    {
        ScriptedBackend b;
        fixtures::script_iteration(b, "r", 1, "WebSurfer", 1, 95, 95, 95);
        const auto r = scripted_raffles(b, t, 2);
        v.require(r.status == Status::converged && r.llm_calls == 4 && r.history.size() == 1 &&
                      r.history[0].confidences == std::array<int, 4>{95, 95, 95, 100},
                  "(a) no convergence at iteration 1 with 4 calls");
    }
    {
        ScriptedBackend b;
        fixtures::script_iteration(b, "r", 1, "Planner", 0, 70, 65, 65);
        fixtures::script_iteration(b, "r", 2, "Coder", 2, 80, 80, 80);
        const auto r = scripted_raffles(b, t, 2);
        v.require(r.status == Status::max_iterations && r.history.size() == 2 && r.history[0].total == 300 &&
                      r.history[1].total == 340 && r.final == Prediction{"Coder", 2},
                  "(b) totals 300/340 did not give max_iterations with the iteration-2 candidate");
    }
    {
        ScriptedBackend b;
        fixtures::script_iteration(b, "r", 1, "Planner", 1, 100, 100, 100);   // step 1 is WebSurfer's
        fixtures::script_iteration(b, "r", 2, "Coder", 99, 100, 100, 100);    // out of range
        const auto r = scripted_raffles(b, t, 2);
        v.require(r.history.size() == 2 && r.history[0].confidences[3] == 0 && r.history[1].confidences[3] == 0,
                  "(c) inconsistent pairs not scored 0 by evaluator 4");
    }
    {
        ScriptedBackend b;
        fixtures::script_iteration(b, "r", 1, "Planner", 0, 10, 10, 10);
        fixtures::script_iteration(b, "r", 2, "Planner", 0, 10, 10, 10);
        const auto r = scripted_raffles(b, t, 1);
        v.require(r.history.size() == 1 && r.llm_calls == 4, "(d) K=1 ran more than one judge pass");
    }
    for (int k = 1; k <= 4; ++k) {
        ScriptedBackend b;
        for (int i = 1; i <= 5; ++i) fixtures::script_iteration(b, "r", i, "Planner", 0, 20, 20, 20);
        const auto r = scripted_raffles(b, t, k);
        v.require(static_cast<int>(r.history.size()) <= k, "(e) history longer than K=" + std::to_string(k));
    }
    return v;
}

// ---------------------------------------------------------------------------
// 3. Metric oracles

constexpr int kRandomOutcomeSets = 1000;

std::vector<ScoredOutcome> random_outcomes(std::mt19937& rng, std::size_t n) {
    const std::vector<std::string> agents{"WebSurfer", "websurfer", "Orchestrator", "Assistant"};
    std::uniform_int_distribution<int> step(0, 15), agent(0, 3), coin(0, 4);
    std::vector<ScoredOutcome> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::optional<Prediction> p;
        if (coin(rng) != 0) p = Prediction{agents[agent(rng)], step(rng)};
        out.push_back({std::to_string(i), p, {agents[agent(rng)], step(rng)}, Status::converged});
    }
    return out;
}

Verdict criterion3() {
    Verdict v;
    std::mt19937 rng(314159);
    int brute_forced = 0;
    for (int trial = 0; trial < kRandomOutcomeSets; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 40);
        const auto o = random_outcomes(rng, n);
        const auto tag = "set " + std::to_string(trial);
        for (int k = 0; k < 5; ++k)
            v.require(tolerant_step_accuracy(o, k) <= tolerant_step_accuracy(o, k + 1), tag + ": not monotone at k=" + std::to_string(k));
        v.require(tolerant_step_accuracy(o, 0) == strict_step_accuracy(o), tag + ": tolerant(0) != strict");
        if (n > 20) continue;
        ++brute_forced;
        for (bool require_agent : {false, true}) {
            ScoringOptions opts;
            opts.require_agent = require_agent;
            const auto mine = accuracy_report(o, opts);
            const auto theirs = oracle::recount(o, 5, require_agent);
            bool equal = *mine.strict_step == theirs.strict && *mine.agent_level == theirs.agent;
            for (int k = 0; k <= 5; ++k) equal = equal && *mine.tolerant_step.at(k) == theirs.tolerant.at(k);
            v.require(equal, tag + ": differs from brute-force recount");
        }
    }
    v.notes.insert(v.notes.begin(), std::to_string(kRandomOutcomeSets) + " sets, " + std::to_string(brute_forced) + " recounted");
    return v;
}

// ---------------------------------------------------------------------------
// 4. Published Chat-LLM row through the report path

constexpr std::size_t kAlgGenRecords = 126;
// Records within tolerance k, k = 0..5, chosen as the nearest integer counts.
constexpr std::array<std::size_t, 6> kWithin{24, 62, 81, 95, 109, 114};
const std::array<std::string, 6> kPublishedRow{"19.05", "49.21", "64.49", "75.40", "86.51", "90.48"};

Verdict criterion4() {
    Verdict v;
    const auto root = fixtures::scratch("acceptance_c4");
    std::ofstream results(root / "results.jsonl");
    for (std::size_t i = 0; i < kAlgGenRecords; ++i) {
        const auto id = std::to_string(i);
        const auto t = fixtures::trajectory_of_length(20);
        const long long truth = 7;
        long long offset = 9;   // outside every window
        for (long long k = 0; k <= 5; ++k)
            if (i < kWithin[static_cast<std::size_t>(k)]) {
                offset = k;
                break;
            }
        write_record(root / "data", fixtures::record(id, t, t.steps[truth].agent_name, truth));
        AttributionResult r;
        r.method = "chat_llm";
        r.record_id = id;
        r.status = Status::converged;
        r.llm_calls = 1;
        const long long predicted = i % 2 || offset > truth ? truth + offset : truth - offset;
        r.final = Prediction{t.steps[static_cast<std::size_t>(predicted)].agent_name, predicted};
        results << to_json(r).dump() << "\n";
    }
    results.close();

    const auto summary = report(root / "results.jsonl", root / "data", root / "report");
    const auto text = read_text(root / "report" / "report.txt");
    const auto at = text.find("| chat_llm |");
    v.require(at != std::string::npos, "table row not emitted");
    if (at == std::string::npos) return v;
    std::vector<std::string> cells;
    std::istringstream row(text.substr(at, text.find('\n', at) - at));
    for (std::string cell; std::getline(row, cell, '|');) {
        const auto b = cell.find_first_not_of(' ');
        if (b == std::string::npos) continue;
        cells.push_back(cell.substr(b, cell.find_last_not_of(' ') - b + 1));
    }
    v.require(cells.size() >= 7, "table row has too few cells");
    if (cells.size() < 7) return v;
    const std::array<std::string, 6> labels{"strict", "±1", "±2", "±3", "±4", "±5"};
    std::string got;
    for (std::size_t k = 0; k < 6; ++k) {
        got += (k ? " " : "") + cells[k + 1];
        v.require(cells[k + 1] == kPublishedRow[k], labels[k] + " expected " + kPublishedRow[k] + " got " + cells[k + 1]);
    }
    v.require(summary.accuracy.n == kAlgGenRecords, "denominator is not 126");
    v.notes.insert(v.notes.begin(), "row " + got);
    if (v.kind == Verdict::fail)
        v.notes.push_back("64.49 is not k/126 for any integer k (81/126 = 64.29, 82/126 = 65.08)");
    return v;
}

// ---------------------------------------------------------------------------
// 5. Dataset facts (needs the public corpus)

fs::path subset_dir(const fs::path& root, std::initializer_list<const char*> names) {
    for (const auto* n : names)
        if (fs::is_directory(root / n)) return root / n;
    return {};
}

Verdict criterion5() {
    Verdict v;
    const char* env = std::getenv("FAULTATTR_WHOWHEN_DIR");
    if (!env || !fs::is_directory(env)) {
        v.kind = Verdict::skip;
        v.notes.push_back("set FAULTATTR_WHOWHEN_DIR to the Who&When corpus");
        return v;
    }
    const fs::path root(env);
    const auto alg = subset_dir(root, {"Algorithm-Generated", "Algorithmically-Generated", "algorithm_generated"});
    const auto hand = subset_dir(root, {"Hand-Crafted", "Hand-crafted", "hand_crafted"});
    v.require(!alg.empty() && !hand.empty(), "subset directories not found under " + root.string());
    if (alg.empty() || hand.empty()) return v;

    struct Expect {
        fs::path dir;
        std::size_t n;
        double avg_steps;
        std::set<std::string> inconsistent;
    };
    for (const auto& e : {Expect{alg, 126, 8.72, {"14", "15", "59"}}, Expect{hand, 58, 50.60, {"20", "22", "49"}}}) {
        const auto loaded = load_dataset(e.dir);
        const auto name = e.dir.filename().string();
        v.require(loaded.failures.empty(), name + ": " + std::to_string(loaded.failures.size()) + " files failed to load");
        v.require(loaded.records.size() == e.n, name + ": n=" + std::to_string(loaded.records.size()));
        if (loaded.records.empty()) continue;
        const auto stats = compute_stats(loaded.records);
        v.require(std::abs(stats.avg_steps - e.avg_steps) <= 0.01, name + ": avg steps " + std::to_string(stats.avg_steps));
        std::set<std::string> flagged;
        for (const auto& r : loaded.records)
            if (!validate_label(r).is_consistent) flagged.insert(r.record_id);
        std::string ids;
        for (const auto& id : flagged) ids += " " + id;
        v.require(flagged == e.inconsistent, name + ": inconsistent ids" + ids);
    }
    const auto hand_records = load_dataset(hand).records;
    if (!hand_records.empty()) {
        const auto baseline = trivial_agent_baseline(hand_records);
        v.require(same_agent(baseline.agent_name, "WebSurfer") && std::abs(baseline.accuracy - 33.0 / 58.0) < 1e-12,
                  "trivial baseline " + baseline.agent_name + " " + format_percent(baseline.accuracy));
    }
    return v;
}

// ---------------------------------------------------------------------------
// 6. Binary search query bound

/// Answers each half question from a fixed list of bits (1 = upper).
class PathBackend : public ChatBackend {
public:
    explicit PathBackend(std::vector<bool> path) : path_(std::move(path)) {}
    ChatResponse send(const ChatRequest&) override {
        const bool upper = used_ < path_.size() && path_[used_];
        ++used_;
        return {fixtures::half(upper), 0, 0, 0};
    }
    std::string name() const override { return "path"; }
    std::size_t used() const { return used_; }

private:
    std::vector<bool> path_;
    std::size_t used_ = 0;
};

int ceil_log2(std::size_t n) {
    int bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    return bits;
}

Verdict criterion6() {
    Verdict v;
    std::mt19937 rng(2718);
    std::size_t paths = 0;
    for (std::size_t T = 1; T <= 64; ++T) {
        const auto t = fixtures::trajectory_of_length(T);
        const int bound = ceil_log2(T);
        std::vector<std::vector<bool>> choices;
        if (T <= 8) {
            for (unsigned mask = 0; mask < (1u << bound); ++mask) {
                std::vector<bool> p;
                for (int b = 0; b < bound; ++b) p.push_back((mask >> b) & 1u);
                choices.push_back(p);
            }
        } else {
            std::bernoulli_distribution coin(0.5);
            for (int i = 0; i < 64; ++i) {
                std::vector<bool> p;
                for (int b = 0; b < bound + 2; ++b) p.push_back(coin(rng));
                choices.push_back(p);
            }
        }
        for (const auto& p : choices) {
            ++paths;
            PathBackend backend(p);
            LlmClient client(profile_128k(), backend);
            Session session(client, "r");
            const auto r = binary_search_attribute(t, session);
            const auto tag = "T=" + std::to_string(T);
            v.require(r.llm_calls <= bound, tag + ": " + std::to_string(r.llm_calls) + " queries");
            v.require(r.final && r.final->step >= 0 && r.final->step < static_cast<long long>(T), tag + ": step out of range");
        }
    }
    v.notes.insert(v.notes.begin(), std::to_string(paths) + " paths");
    return v;
}

// ---------------------------------------------------------------------------
// 7. Prompt fidelity and output repair

Verdict criterion7() {
    Verdict v;
    for (const auto& f : checks::golden_failures()) v.require(false, f);
    const auto corpus = checks::run_corpus();
    v.require(corpus.cases == 25, "corpus has " + std::to_string(corpus.cases) + " cases");
    v.require(corpus.crashes == 0, std::to_string(corpus.crashes) + " crashes");
    for (const auto& f : corpus.failures) v.require(false, f);
    v.notes.insert(v.notes.begin(), std::to_string(corpus.cases) + " corpus cases");
    return v;
}

// ---------------------------------------------------------------------------
// 8. Determinism and replay

/// Answers every pipeline stage by pointing at a chosen step per record.
class Responder : public ChatBackend {
public:
    explicit Responder(std::map<std::string, std::pair<std::string, long long>> targets) : targets_(std::move(targets)) {}

    ChatResponse send(const ChatRequest& request) override {
        const auto& [agent, step] = targets_.at(request.record_id);
        const auto& tag = request.tag;
        auto number_after = [&](const std::string& key) { return std::stoll(tag.substr(tag.find(key) + key.size())); };
        std::string text;
        if (tag.starts_with("raffles/judge")) {
            const bool first = number_after("iter=") == 1;
            text = fixtures::judge_reply(agent, first ? 0 : step);
        } else if (tag.starts_with("raffles/evaluator")) {
            text = fixtures::eval_reply(number_after("iter=") == 1 ? 60 : 90);
        } else if (tag == "chat_llm") {
            text = fixtures::answer_reply(agent, step);
        } else if (tag.starts_with("step_by_step/")) {
            text = fixtures::yes_no(number_after("t=") == step);
        } else if (tag.starts_with("binary_search/")) {
            const auto lo = number_after("range=");
            const auto hi = std::stoll(tag.substr(tag.rfind('-') + 1));
            text = fixtures::half(step > lo + (hi - lo) / 2);
        } else if (tag == "tool_caller/planner/turn=1") {
            text = "<agent>judge(id=" + std::to_string(step) + ")</agent>";
        } else if (tag.starts_with("tool_caller/judge")) {
            text = fixtures::yes_no(true);
        } else {
            text = fixtures::answer_reply(agent, step);
        }
        return {text, 0, 0, 0};
    }
    std::string name() const override { return "responder"; }

private:
    std::map<std::string, std::pair<std::string, long long>> targets_;
};

Verdict criterion8() {
    Verdict v;
    const auto root = fixtures::scratch("acceptance_c8");
    std::map<std::string, std::pair<std::string, long long>> targets;
    for (std::size_t i = 1; i <= 6; ++i) {
        const auto t = fixtures::trajectory_of_length(2 + 3 * i);
        const std::size_t step = (i * 5) % t.steps.size();
        const auto r = fixtures::record(std::to_string(i), t, t.steps[step].agent_name, step);
        write_record(root / "data", r);
        targets[r.record_id] = {r.label.mistake_agent, static_cast<long long>(step)};
    }
    for (auto m : {Method::raffles, Method::chat_llm, Method::step_by_step, Method::binary_search, Method::tool_caller}) {
        const std::string name(to_string(m));
        const auto dir = root / name;
        RunConfig cfg;
        cfg.dataset_path = root / "data";
        cfg.method.method = m;
        cfg.backend_kind = BackendKind::scripted;

        // Author the script once from the responder, then run from the file.
        Responder responder(targets);
        cfg.script_path = "responder";
        cfg.out_dir = dir / "author";
        run(cfg, &responder);
        {
            std::ofstream script(dir / "script.jsonl");
            for (const auto& e : Transcript::read_jsonl(dir / "author" / "transcript.jsonl"))
                script << Json{{"record_id", e.request.record_id}, {"tag", e.request.tag}, {"text", e.response.text}}.dump() << "\n";
        }
        cfg.script_path = dir / "script.jsonl";
        cfg.out_dir = dir / "a";
        run(cfg);
        cfg.out_dir = dir / "b";
        cfg.workers = 3;
        run(cfg);
        const auto a = read_text(dir / "a" / "results.jsonl");
        v.require(!a.empty() && a == read_text(dir / "b" / "results.jsonl"), name + ": runs differ");

        RunConfig replay = cfg;
        replay.workers = 1;
        replay.backend_kind = BackendKind::replay;
        replay.script_path.clear();
        replay.replay_path = dir / "a" / "transcript.jsonl";
        replay.out_dir = dir / "replay";
        run(replay);
        const auto original = read_results(dir / "a" / "results.jsonl").results;
        const auto replayed = read_results(dir / "replay" / "results.jsonl").results;
        v.require(original.size() == targets.size() && original == replayed, name + ": replay differs");
    }
    return v;
}

// ---------------------------------------------------------------------------
// 9. Live smoke

constexpr std::size_t kLiveRecords = 5;

Verdict criterion9() {
    Verdict v;
    const char* endpoint = std::getenv("FAULTATTR_LIVE_ENDPOINT");
    const char* corpus = std::getenv("FAULTATTR_WHOWHEN_DIR");
    if (!endpoint || !*endpoint || !corpus || !fs::is_directory(corpus)) {
        v.kind = Verdict::skip;
        v.notes.push_back("set FAULTATTR_LIVE_ENDPOINT and FAULTATTR_WHOWHEN_DIR for the live smoke test");
        return v;
    }
    const auto hand = subset_dir(corpus, {"Hand-Crafted", "Hand-crafted", "hand_crafted"});
    const auto source = hand.empty() ? fs::path(corpus) : hand;
    const auto root = fixtures::scratch("acceptance_c9");
    auto records = load_dataset(source).records;
    records.resize(std::min(records.size(), kLiveRecords));
    for (const auto& r : records) write_record(root / "data", r);

    RunConfig cfg;
    cfg.dataset_path = root / "data";
    cfg.backend = profile_128k();
    cfg.backend.endpoint_url = endpoint;
    if (const char* model = std::getenv("FAULTATTR_LIVE_MODEL")) cfg.backend.model_id = model;
    for (auto m : {Method::raffles, Method::chat_llm}) {
        cfg.method.method = m;
        cfg.out_dir = root / std::string(to_string(m));
        try {
            const auto manifest = run(cfg);
            for (const auto& r : manifest.records)
                v.require(r.status != "error", std::string(to_string(m)) + " record " + r.record_id + ": " + r.error);
            for (const auto& r : read_results(cfg.out_dir / "results.jsonl").results)
                if (m == Method::raffles)
                    v.require(r.llm_calls == 4 || r.llm_calls == 8,
                              "raffles record " + r.record_id + ": " + std::to_string(r.llm_calls) + " calls");
        } catch (const std::exception& e) {
            v.require(false, std::string(to_string(m)) + ": " + e.what());
        }
    }
    return v;
}

} // namespace

int main(int argc, char** argv) {
    const std::map<int, std::function<Verdict()>> criteria{{1, criterion1}, {2, criterion2}, {3, criterion3},
                                                           {4, criterion4}, {5, criterion5}, {6, criterion6},
                                                           {7, criterion7}, {8, criterion8}, {9, criterion9}};
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    if (selected.empty())
        for (const auto& [n, _] : criteria) selected.push_back(n);

    int exit_code = 0;
    bool any_pass_or_fail = false;
    for (int n : selected) {
        const auto it = criteria.find(n);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << n << "\n";
            return 2;
        }
        Verdict v;
        try {
            v = it->second();
        } catch (const std::exception& e) {
            v.kind = Verdict::fail;
            v.notes.push_back(std::string("threw: ") + e.what());
        }
        const char* word = v.kind == Verdict::pass ? "PASS" : v.kind == Verdict::fail ? "FAIL" : "SKIP";
        std::cout << "criterion " << n << ": " << word;
        if (!v.notes.empty()) {
            std::cout << " (";
            const std::size_t shown = std::min<std::size_t>(v.notes.size(), 6);
            for (std::size_t i = 0; i < shown; ++i) std::cout << (i ? "; " : "") << v.notes[i];
            if (v.notes.size() > shown) std::cout << "; +" << v.notes.size() - shown << " more";
            std::cout << ")";
        }
        std::cout << std::endl;
        if (v.kind == Verdict::fail) exit_code = 1;
        if (v.kind != Verdict::skip) any_pass_or_fail = true;
    }
    if (exit_code == 0 && !any_pass_or_fail) return kSkip;
    return exit_code;
}
