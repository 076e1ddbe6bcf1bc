#include "faultattr/runner.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

using namespace faultattr;

namespace {

struct Batch {
    fs::path root;
    std::vector<DatasetRecord> records;
    ScriptedBackend backend;

    fs::path dataset() const { return root / "data"; }
    fs::path script() const { return root / "script.jsonl"; }
};

/// n records of varying length; RAFFLES scripted to converge on the label at
/// iteration 1 for even ids and at iteration 2 for odd ids.
Batch raffles_batch(const std::string& name, std::size_t n) {
    Batch b;
    b.root = fixtures::scratch(name);
    std::ofstream script(b.script());
    for (std::size_t i = 1; i <= n; ++i) {
        const auto id = std::to_string(i);
        auto t = fixtures::trajectory_of_length(3 + i % 7);
        const std::size_t step = i % t.steps.size();
        auto r = fixtures::record(id, t, t.steps[step].agent_name, step);
        write_record(b.dataset(), r);
        b.records.push_back(r);
        ScriptedBackend one;
        if (i % 2 == 0) {
            fixtures::script_iteration(one, id, 1, r.label.mistake_agent, static_cast<long long>(step), 95, 95, 95);
        } else {
            fixtures::script_iteration(one, id, 1, t.steps[0].agent_name, 0, 40, 40, 40);
            fixtures::script_iteration(one, id, 2, r.label.mistake_agent, static_cast<long long>(step), 90, 90, 90);
        }
        for (int k = 1; k <= 2; ++k)
            for (const std::string role : {"judge", "evaluator1", "evaluator2", "evaluator3"}) {
                const auto tag = "raffles/" + role + "/iter=" + std::to_string(k);
                ChatRequest probe;
                probe.record_id = id;
                probe.tag = tag;
                try {
                    const auto text = one.send(probe).text;
                    script << Json{{"record_id", id}, {"tag", tag}, {"text", text}}.dump() << "\n";
                    b.backend.add(id, tag, text);
                } catch (const Error&) {
                }
            }
    }
    return b;
}

RunConfig config_for(const Batch& b, const std::string& out) {
    RunConfig c;
    c.dataset_path = b.dataset();
    c.backend_kind = BackendKind::scripted;
    c.script_path = b.script();
    c.out_dir = b.root / out;
    return c;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

} // namespace

TEST(Run, ScriptedBatchWritesArtifacts) {
    auto b = raffles_batch("run_basic", 3);
    const auto m = run(config_for(b, "out"));
    ASSERT_EQ(m.records.size(), 3u);
    EXPECT_EQ(m.llm_calls_total, 8 + 4 + 8);
    const auto results = read_results(b.root / "out/results.jsonl").results;
    ASSERT_EQ(results.size(), 3u);
    EXPECT_EQ(results[0].record_id, "1");
    EXPECT_EQ(results[0].status, Status::converged);
    EXPECT_EQ(results[0].history.size(), 2u);
    EXPECT_EQ(lines_of(b.root / "out/transcript.jsonl").size(), 20u);
    const Json manifest = Json::parse(read_text(b.root / "out/manifest.json"));
    EXPECT_EQ(manifest["status_counts"]["converged"], 3);
    EXPECT_EQ(manifest["config_hash"], config_hash(config_for(b, "out")));
    EXPECT_FALSE(manifest.contains("api_key"));
}

TEST(Run, RefusesExistingOutputWithoutResume) {
    auto b = raffles_batch("run_exists", 2);
    run(config_for(b, "out"));
    EXPECT_THROW(run(config_for(b, "out")), Error);
}

TEST(Run, ResumeAfterTornLine) {
    auto b = raffles_batch("run_resume", 5);
    run(config_for(b, "full"));
    const auto full = read_text(b.root / "full/results.jsonl");

    auto cfg = config_for(b, "torn");
    run(cfg);
    const auto lines = lines_of(b.root / "torn/results.jsonl");
    write_text(b.root / "torn/results.jsonl", lines[0] + "\n" + lines[1] + "\n" + lines[2].substr(0, lines[2].size() / 2));
    cfg.resume = true;
    cfg.workers = 3;
    const auto m = run(cfg);
    EXPECT_EQ(read_text(b.root / "torn/results.jsonl"), full);
    EXPECT_EQ(m.records.size(), 5u);
}

TEST(Run, ResumeRefusedOnConfigChange) {
    auto b = raffles_batch("run_hash", 2);
    auto cfg = config_for(b, "out");
    run(cfg);
    cfg.resume = true;
    cfg.method.raffles.max_iterations = 3;
    EXPECT_THROW(run(cfg), Error);
    cfg.method.raffles.max_iterations = 2;
    cfg.workers = 2;
    EXPECT_NO_THROW(run(cfg));
}

TEST(Run, WorkerCountDoesNotChangeResults) {
    auto b = raffles_batch("run_workers", 20);
    run(config_for(b, "w1"));
    auto cfg = config_for(b, "w4");
    cfg.workers = 4;
    run(cfg);
    EXPECT_EQ(read_text(b.root / "w1/results.jsonl"), read_text(b.root / "w4/results.jsonl"));
}

TEST(Run, ReplayReproducesResults) {
    auto b = raffles_batch("run_replay", 6);
    run(config_for(b, "live"));
    RunConfig cfg = config_for(b, "replayed");
    cfg.backend_kind = BackendKind::replay;
    cfg.script_path.clear();
    cfg.replay_path = b.root / "live/transcript.jsonl";
    run(cfg);
    EXPECT_EQ(read_text(b.root / "live/results.jsonl"), read_text(b.root / "replayed/results.jsonl"));
}

TEST(Run, BackendErrorsLeaveRecordPending) {
    auto gappy = raffles_batch("run_errors_gappy", 3);
    ScriptedBackend only_odd;
    for (const auto& line : lines_of(gappy.script())) {
        const Json d = Json::parse(line);
        if (d["record_id"] != "2") only_odd.add(d["record_id"], d["tag"], d["text"]);
    }
    auto cfg = config_for(gappy, "out");
    const auto m = run(cfg, &only_odd);
    EXPECT_EQ(m.records[1].status, "error");
    EXPECT_NE(m.records[1].error.find("2"), std::string::npos);
    EXPECT_EQ(read_results(gappy.root / "out/results.jsonl").results.size(), 2u);

    cfg.resume = true;
    const auto resumed = run(cfg, &gappy.backend);
    EXPECT_EQ(resumed.records[1].status, "converged");
    const auto ids = read_results(gappy.root / "out/results.jsonl").results;
    ASSERT_EQ(ids.size(), 3u);
    EXPECT_EQ(ids[2].record_id, "2");
}

TEST(Run, PromptDump) {
    auto b = raffles_batch("run_dump", 1);
    auto cfg = config_for(b, "out");
    cfg.dump_prompts = true;
    run(cfg);
    EXPECT_TRUE(fs::exists(b.root / "out/prompts/1/000_raffles_judge_iter_1.txt"));
    EXPECT_TRUE(fs::exists(b.root / "out/prompts/1/007_raffles_evaluator3_iter_2.txt"));
}

TEST(Config, RoundTripAndCredentialRejection) {
    RunConfig c;
    c.dataset_path = "d";
    c.out_dir = "o";
    c.method.method = Method::binary_search;
    c.backend = profile_64k();
    c.backend.endpoint_url = "http://localhost:1/v1";
    const auto back = run_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    c.resume = true;
    EXPECT_EQ(config_hash(back), config_hash(c));

    Json profile = to_json(profile_128k());
    profile["api_key"] = "sk-123";
    EXPECT_THROW(backend_config_from_json(profile), Error);

    for (const auto& name : {"llama-3.3-70b-128k", "mixtral-8x22b-64k", "gpt-oss-120b-128k"}) {
        const auto p = load_backend_profile(fixtures::repo_data() / "profiles" / (std::string(name) + ".json"));
        EXPECT_EQ(p.credential_env, "FAULTATTR_API_KEY");
    }

    RunConfig live;
    live.dataset_path = "d";
    live.out_dir = "o";
    try {
        validate(live);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::backend_unavailable);
    }
}

TEST(Report, PerfectResults) {
    auto b = raffles_batch("report_perfect", 8);
    run(config_for(b, "out"));
    const auto s = report(b.root / "out/results.jsonl", b.dataset(), b.root / "rep");
    EXPECT_DOUBLE_EQ(*s.accuracy.strict_step, 1.0);
    EXPECT_DOUBLE_EQ(*s.accuracy.agent_level, 1.0);
    std::size_t sum = 0;
    for (const auto& [_, c] : s.statuses) sum += c;
    EXPECT_EQ(sum, 8u);
    EXPECT_DOUBLE_EQ(s.accuracy_by_iteration.at(1), 0.5);
    EXPECT_DOUBLE_EQ(s.accuracy_by_iteration.at(2), 1.0);
    EXPECT_DOUBLE_EQ(s.convergence->changed_pair_rate.at(1).rate(), 1.0);
    EXPECT_NE(s.text.find("| raffles | 100.00 |"), std::string::npos);
    for (const auto& f : {"report.txt", "report.jsonl", "accuracy_vs_tolerance.tsv", "accuracy_vs_iteration.tsv",
                          "iteration_histograms.tsv", "quartiles.tsv"})
        EXPECT_TRUE(fs::exists(b.root / "rep" / f)) << f;
}

TEST(Faultlab, GeneratedDatasetIsDeterministicAndScorable) {
    const auto root = fixtures::scratch("gen");
    const auto a = faultlab_gen(42, 25, root / "a");
    faultlab_gen(42, 25, root / "b");
    for (std::size_t i = 1; i <= 25; ++i) {
        const auto name = std::to_string(i) + ".json";
        EXPECT_EQ(read_text(root / "a" / name), read_text(root / "b" / name));
    }
    const auto loaded = load_clean_dataset(root / "a");
    ASSERT_EQ(loaded.size(), 25u);
    ScriptedBackend cheat;
    for (const auto& r : loaded) {
        ASSERT_LT(r.label.mistake_step, r.trajectory.steps.size());
        EXPECT_EQ(r.trajectory.steps[r.label.mistake_step].agent_name, r.label.mistake_agent);
        cheat.add(r.record_id, "chat_llm", fixtures::answer_reply(r.label.mistake_agent, static_cast<long long>(r.label.mistake_step)));
    }
    EXPECT_EQ(loaded, a);

    RunConfig cfg;
    cfg.dataset_path = root / "a";
    cfg.method.method = Method::chat_llm;
    cfg.backend_kind = BackendKind::scripted;
    cfg.script_path = "unused";
    cfg.out_dir = root / "out";
    run(cfg, &cheat);
    const auto s = report(root / "out/results.jsonl", root / "a", root / "rep");
    EXPECT_DOUBLE_EQ(*s.accuracy.strict_step, 1.0);
}
