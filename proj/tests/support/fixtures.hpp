#pragma once

#include "faultattr/backend.hpp"
#include "faultattr/trace.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fixtures {

using faultattr::Json;
namespace fs = std::filesystem;

inline fs::path repo_data() { return FAULTATTR_DATA_DIR; }
inline fs::path test_data() { return FAULTATTR_TEST_DATA_DIR; }

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh empty directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("faultattr_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

inline faultattr::Trajectory trajectory(const std::vector<std::string>& agents, std::string problem = "What is 6 times 7?") {
    faultattr::Trajectory t;
    t.problem = std::move(problem);
    for (std::size_t i = 0; i < agents.size(); ++i)
        t.steps.push_back({i, agents[i], agents[i] + " says something at step " + std::to_string(i) + "."});
    return t;
}

inline faultattr::Trajectory trajectory_of_length(std::size_t n) {
    static const std::vector<std::string> names{"Planner", "WebSurfer", "Coder", "Verifier"};
    std::vector<std::string> agents;
    for (std::size_t i = 0; i < n; ++i) agents.push_back(names[i % names.size()]);
    return trajectory(agents);
}

inline faultattr::DatasetRecord record(std::string id, faultattr::Trajectory t, std::string agent, std::size_t step) {
    faultattr::DatasetRecord r;
    r.record_id = std::move(id);
    r.trajectory = std::move(t);
    r.label.mistake_agent = std::move(agent);
    r.label.mistake_step = step;
    return r;
}

inline std::string judge_reply(const std::string& agent, long long step) {
    return Json{{"reason_for_mistake", "The step used the wrong value."},
                {"first_mistake", "No earlier step is wrong."},
                {"mistake_not_corrected", "Later steps keep the value."},
                {"agent_name", agent},
                {"step_number", step}}
        .dump(2);
}

inline std::string eval_reply(int confidence) {
    return "```json\n" + Json{{"reason", "Checked against the log."}, {"confidence", confidence}}.dump() + "\n```";
}

inline std::string answer_reply(const std::string& agent, long long step) {
    return Json{{"agent_name", agent}, {"step_number", step}, {"reason_for_mistake", "Wrong value."}}.dump();
}

inline std::string yes_no(bool yes) { return Json{{"judgement", yes ? "yes" : "no"}, {"reason", "Looked at it."}}.dump(); }

inline std::string half(bool upper) {
    return Json{{"judgement", upper ? "upper half" : "lower half"}, {"reason", "Looked at it."}}.dump();
}

/// Scripts one RAFFLES iteration: judge plus evaluators 1-3.
inline void script_iteration(faultattr::ScriptedBackend& b, const std::string& record_id, int k, const std::string& agent,
                             long long step, int c1, int c2, int c3) {
    const std::string iter = "/iter=" + std::to_string(k);
    b.add(record_id, "raffles/judge" + iter, judge_reply(agent, step));
    b.add(record_id, "raffles/evaluator1" + iter, eval_reply(c1));
    b.add(record_id, "raffles/evaluator2" + iter, eval_reply(c2));
    b.add(record_id, "raffles/evaluator3" + iter, eval_reply(c3));
}

} // namespace fixtures
