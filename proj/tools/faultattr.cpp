// faultattr: batch attribution runs, reports and dataset utilities.

#include "faultattr/attrib.hpp"
#include "faultattr/metrics.hpp"
#include "faultattr/runner.hpp"
#include "faultattr/trace.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <csignal>
#include <iostream>

namespace fa = faultattr;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop.store(true); }

struct RunFlags {
    std::string config_file;
    std::string dataset, subset, method, profile, backend_kind, script, replay, out, run_id;
    std::optional<int> max_iterations, threshold, max_tool_calls;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    bool resume = false;
    bool dump_prompts = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config_file, "JSON run config; flags override its fields");
    cmd->add_option("--dataset", f.dataset, "Directory of record files");
    cmd->add_option("--subset", f.subset, "Subdirectory of --dataset (e.g. Hand-Crafted)");
    cmd->add_option("--method", f.method, "raffles | chat_llm | step_by_step | binary_search | tool_caller");
    cmd->add_option("--backend-profile", f.profile, "Backend profile JSON, or 128k / 64k");
    cmd->add_option("--backend", f.backend_kind, "openai | scripted | replay");
    cmd->add_option("--script", f.script, "Scripted responses (JSONL: record_id, tag, text)");
    cmd->add_option("--replay", f.replay, "Replay a recorded transcript instead of calling a model");
    cmd->add_option("--max-iterations", f.max_iterations, "RAFFLES iteration cap K");
    cmd->add_option("--threshold", f.threshold, "RAFFLES confidence threshold");
    cmd->add_option("--max-tool-calls", f.max_tool_calls, "Tool-Caller judge call cap");
    cmd->add_option("--workers", f.workers, "Records processed concurrently");
    cmd->add_option("--out", f.out, "Output directory");
    cmd->add_option("--run-id", f.run_id, "Run identifier");
    cmd->add_option("--seed", f.seed, "Seed recorded in the manifest");
    cmd->add_flag("--resume", f.resume, "Skip records already in results.jsonl");
    cmd->add_flag("--dump-prompts", f.dump_prompts, "Write every rendered prompt under <out>/prompts");
}

fa::RunConfig build_config(const RunFlags& f) {
    fa::RunConfig c;
    if (!f.config_file.empty()) {
        fa::Json doc = fa::Json::parse(fa::read_text(f.config_file), nullptr, false);
        if (doc.is_discarded()) throw fa::Error(fa::ErrorCode::config_invalid, "config is not JSON: " + f.config_file);
        c = fa::run_config_from_json(doc);
    }
    if (!f.dataset.empty()) c.dataset_path = f.dataset;
    if (!f.subset.empty()) c.subset = f.subset;
    if (!f.method.empty()) c.method.method = fa::method_from_string(f.method);
    if (!f.profile.empty()) {
        if (f.profile == "128k") c.backend = fa::profile_128k();
        else if (f.profile == "64k") c.backend = fa::profile_64k();
        else c.backend = fa::load_backend_profile(f.profile);
    }
    if (!f.backend_kind.empty()) c.backend_kind = fa::backend_kind_from_string(f.backend_kind);
    if (!f.script.empty()) {
        c.script_path = f.script;
        if (f.backend_kind.empty()) c.backend_kind = fa::BackendKind::scripted;
    }
    if (!f.replay.empty()) {
        c.replay_path = f.replay;
        c.backend_kind = fa::BackendKind::replay;
    }
    if (f.max_iterations) c.method.raffles.max_iterations = *f.max_iterations;
    if (f.threshold) c.method.raffles.confidence_threshold = *f.threshold;
    if (f.max_tool_calls) c.method.max_tool_calls = *f.max_tool_calls;
    if (f.workers) c.workers = *f.workers;
    if (!f.out.empty()) c.out_dir = f.out;
    if (!f.run_id.empty()) c.run_id = f.run_id;
    if (f.seed) c.seed = *f.seed;
    if (f.resume) c.resume = true;
    if (f.dump_prompts) c.dump_prompts = true;
    return c;
}

int do_run(const RunFlags& flags) {
    const auto config = build_config(flags);
    std::signal(SIGINT, on_interrupt);
    std::signal(SIGTERM, on_interrupt);
    const auto manifest = fa::run(config, nullptr, &g_stop);
    std::map<std::string, std::size_t> counts;
    for (const auto& r : manifest.records) ++counts[r.status];
    std::cout << "run " << manifest.run_id << ": " << manifest.records.size() << " records, " << manifest.llm_calls_total
              << " LLM calls\n";
    for (const auto& [status, n] : counts) std::cout << "  " << status << ": " << n << "\n";
    for (const auto& r : manifest.records)
        if (r.status == "error") std::cerr << "error " << r.record_id << ": " << r.error << "\n";
    if (g_stop.load()) std::cerr << "interrupted; rerun with --resume to finish\n";
    return counts.contains("error") ? 3 : 0;
}

fa::Trajectory find_trajectory(const fs::path& dir, const std::string& record_id) {
    for (auto& r : fa::load_clean_dataset(dir))
        if (r.record_id == record_id) return r.trajectory;
    throw fa::Error(fa::ErrorCode::join_failure, "no record '" + record_id + "' in " + dir.string());
}

void write_prompt(const fs::path& path, const fa::RenderedPrompt& prompt) {
    std::string text;
    for (const auto& m : prompt.messages) text += "=== " + std::string(fa::to_string(m.role)) + " ===\n" + m.content + "\n";
    fa::write_text(path, text);
}

/// Renders every prompt a method can issue for one record, without calling a model.
void dump_prompts(const fa::Trajectory& trajectory, fa::Method method, const fs::path& out) {
    fs::create_directories(out);
    const std::size_t T = trajectory.size();
    switch (method) {
    case fa::Method::raffles: {
        write_prompt(out / "judge.txt", fa::render_judge(trajectory, ""));
        fa::ParsedJudgment sample{trajectory.steps.front().agent_name, 0, "<mistake_reason>", "<first_mistake>",
                                  "<mistake_not_corrected>"};
        for (int p = 1; p <= 3; ++p)
            write_prompt(out / ("evaluator" + std::to_string(p) + ".txt"),
                         fa::render_evaluator(static_cast<fa::Criterion>(p), trajectory, sample));
        break;
    }
    case fa::Method::chat_llm: write_prompt(out / "chat_llm.txt", fa::render_chat_llm(trajectory)); break;
    case fa::Method::step_by_step:
        for (std::size_t t = 0; t < T; ++t)
            write_prompt(out / ("step_by_step_t" + std::to_string(t) + ".txt"), fa::render_step_by_step(trajectory, t));
        break;
    case fa::Method::binary_search:
        write_prompt(out / ("binary_search_0-" + std::to_string(T - 1) + ".txt"), fa::render_binary_search(trajectory, 0, T - 1));
        break;
    case fa::Method::tool_caller:
        write_prompt(out / "tool_caller_planner.txt", fa::render_tool_caller_planner(trajectory));
        for (std::size_t t = 0; t < T; ++t)
            write_prompt(out / ("tool_caller_judge_id" + std::to_string(t) + ".txt"), fa::render_tool_caller_judge(trajectory, t));
        break;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fault attribution for multi-agent trajectories"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "Attribute faults for every record in a dataset");
    add_run_flags(run_cmd, run_flags);

    RunFlags replay_flags;
    std::string replay_transcript;
    auto* replay_cmd = app.add_subcommand("replay", "Re-run from a recorded transcript without network access");
    add_run_flags(replay_cmd, replay_flags);
    replay_cmd->add_option("transcript", replay_transcript, "transcript.jsonl")->required();

    std::string rep_results, rep_dataset, rep_subset, rep_out;
    std::vector<int> rep_tolerances;
    bool rep_require_agent = false;
    auto* report_cmd = app.add_subcommand("report", "Score results against dataset labels");
    report_cmd->add_option("--results", rep_results, "results.jsonl")->required();
    report_cmd->add_option("--dataset", rep_dataset, "Directory of record files")->required();
    report_cmd->add_option("--subset", rep_subset, "Subdirectory of --dataset");
    report_cmd->add_option("--out", rep_out, "Report directory (default: next to results)");
    report_cmd->add_option("--tolerance", rep_tolerances, "Tolerance windows (default 0..5)")->check(CLI::Range(0, 5));
    report_cmd->add_flag("--require-agent", rep_require_agent, "Step metrics also require the right agent");

    std::string stats_dataset, stats_subset;
    auto* stats_cmd = app.add_subcommand("stats", "Dataset size, average steps and tokens");
    stats_cmd->add_option("--dataset", stats_dataset)->required();
    stats_cmd->add_option("--subset", stats_subset);

    std::string val_dataset, val_subset;
    auto* validate_cmd = app.add_subcommand("validate-dataset", "Report unparseable records and inconsistent labels");
    validate_cmd->add_option("--dataset", val_dataset)->required();
    validate_cmd->add_option("--subset", val_subset);

    std::uint64_t gen_seed = 0;
    std::size_t gen_n = 25;
    std::string gen_out;
    auto* gen_cmd = app.add_subcommand("faultlab-gen", "Write synthetic records labelled by the counterfactual oracle");
    gen_cmd->add_option("--seed", gen_seed);
    gen_cmd->add_option("--n", gen_n)->check(CLI::PositiveNumber);
    gen_cmd->add_option("--out", gen_out)->required();

    std::string dump_dataset, dump_subset, dump_record, dump_method = "raffles", dump_out;
    auto* dump_cmd = app.add_subcommand("dump-prompts", "Render the prompts a method would send for one record");
    dump_cmd->add_option("--dataset", dump_dataset)->required();
    dump_cmd->add_option("--subset", dump_subset);
    dump_cmd->add_option("--record", dump_record)->required();
    dump_cmd->add_option("--method", dump_method);
    dump_cmd->add_option("--out", dump_out)->required();

    CLI11_PARSE(app, argc, argv);

    auto with_subset = [](const std::string& d, const std::string& s) { return s.empty() ? fs::path(d) : fs::path(d) / s; };

    try {
        if (*run_cmd) return do_run(run_flags);
        if (*replay_cmd) {
            replay_flags.replay = replay_transcript;
            return do_run(replay_flags);
        }
        if (*report_cmd) {
            fa::ReportOptions options;
            if (!rep_tolerances.empty()) {
                options.tolerances = rep_tolerances;
                if (std::find(options.tolerances.begin(), options.tolerances.end(), 0) == options.tolerances.end())
                    options.tolerances.insert(options.tolerances.begin(), 0);
                std::sort(options.tolerances.begin(), options.tolerances.end());
            }
            options.require_agent = rep_require_agent;
            const fs::path out = rep_out.empty() ? fs::path(rep_results).parent_path() : fs::path(rep_out);
            std::cout << fa::report(rep_results, with_subset(rep_dataset, rep_subset), out, options).text;
            return 0;
        }
        if (*stats_cmd) {
            const auto records = fa::load_clean_dataset(with_subset(stats_dataset, stats_subset));
            fa::Json doc = fa::to_json(fa::compute_stats(records));
            const auto trivial = fa::trivial_agent_baseline(records);
            doc["trivial_agent_baseline"] = {{"agent_name", trivial.agent_name}, {"accuracy", trivial.accuracy}};
            std::cout << doc.dump(2) << "\n";
            return 0;
        }
        if (*validate_cmd) {
            const auto loaded = fa::load_dataset(with_subset(val_dataset, val_subset));
            std::size_t inconsistent = 0;
            for (const auto& f : loaded.failures) std::cout << "unparseable " << f.file << ": " << f.error << "\n";
            for (const auto& r : loaded.records) {
                const auto check = fa::validate_label(r);
                if (check.is_consistent) continue;
                ++inconsistent;
                std::cout << "inconsistent " << check.record_id << ": " << check.reason << "\n";
            }
            std::cout << loaded.records.size() << " records, " << inconsistent << " inconsistent, "
                      << loaded.failures.size() << " unparseable\n";
            return loaded.failures.empty() ? 0 : 1;
        }
        if (*gen_cmd) {
            const auto records = fa::faultlab_gen(gen_seed, gen_n, gen_out);
            std::cout << "wrote " << records.size() << " records to " << gen_out << "\n";
            return 0;
        }
        if (*dump_cmd) {
            dump_prompts(find_trajectory(with_subset(dump_dataset, dump_subset), dump_record),
                         fa::method_from_string(dump_method), dump_out);
            std::cout << "prompts written to " << dump_out << "\n";
            return 0;
        }
    } catch (const fa::Error& e) {
        std::cerr << fa::to_string(e.code()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
