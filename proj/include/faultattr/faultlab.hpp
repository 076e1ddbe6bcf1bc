#pragma once

// Finite, deterministic turn-based multi-agent systems with an exhaustive
// counterfactual oracle for step-level, causal, trivial and decisive faults.

#include "error.hpp"
#include "trace.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace faultattr::faultlab {

using AgentId = int;
using StateId = int;
using ActionId = int;

/// Turn-based system: agents, finite states, a global action list with
/// per-agent subsets, a schedule naming the single active agent per step,
/// a total transition table, a success set and a deterministic policy.
struct SyntheticScenario {
    std::string name;
    std::string task;
    std::vector<std::string> agents;
    std::vector<std::string> states;
    std::vector<std::string> actions;
    std::vector<std::vector<ActionId>> agent_actions;   // per agent, subset of actions
    std::vector<AgentId> schedule;                      // one entry per step, size = horizon
    std::vector<std::vector<StateId>> transition;       // [state][action] -> state
    StateId initial_state = 0;
    std::vector<bool> success;                          // per state
    std::vector<bool> flawed;                           // per action
    std::vector<std::vector<ActionId>> policy;          // [agent][state] -> action

    std::size_t horizon() const noexcept { return schedule.size(); }
    AgentId active_agent(std::size_t t) const { return schedule.at(t); }
    bool allowed(AgentId agent, ActionId action) const {
        const auto& subset = agent_actions.at(static_cast<std::size_t>(agent));
        return std::find(subset.begin(), subset.end(), action) != subset.end();
    }
};

/// Agent-and-state to action.
using Policy = std::function<ActionId(AgentId, StateId)>;

inline Policy table_policy(const SyntheticScenario& scenario) {
    return [&scenario](AgentId agent, StateId state) {
        return scenario.policy.at(static_cast<std::size_t>(agent)).at(static_cast<std::size_t>(state));
    };
}

/// s_0, a_0, ..., a_{T-1}, s_T
struct ConcreteTrajectory {
    std::vector<StateId> states;
    std::vector<ActionId> actions;

    friend bool operator==(const ConcreteTrajectory&, const ConcreteTrajectory&) = default;
};

struct LocalJudge {
    std::function<double(StateId, ActionId)> score;
    double epsilon = 0.5;

    bool is_fault(StateId state, ActionId action) const { return score(state, action) > epsilon; }
};

/// Scores 1 for actions in the scenario's flawed set, 0 otherwise; epsilon 0.5.
inline LocalJudge declared_fault_judge(const SyntheticScenario& scenario, double epsilon = 0.5) {
    return LocalJudge{[&scenario](StateId, ActionId action) {
                          return scenario.flawed.at(static_cast<std::size_t>(action)) ? 1.0 : 0.0;
                      },
                      epsilon};
}

struct DecisiveFault {
    AgentId agent = 0;
    std::size_t step = 0;

    friend bool operator==(const DecisiveFault&, const DecisiveFault&) = default;
};

struct FaultVerdict {
    std::set<std::size_t> step_faults;
    std::set<std::size_t> causal_steps;
    std::set<std::size_t> trivial_steps;
    std::map<std::size_t, ActionId> witnesses;   // causal step -> curing replacement
    std::optional<DecisiveFault> decisive;

    friend bool operator==(const FaultVerdict&, const FaultVerdict&) = default;
};

inline void validate(const SyntheticScenario& s) {
    auto fail = [&](const std::string& why) { throw Error(ErrorCode::invalid_scenario, s.name + ": " + why); };
    const auto n_states = s.states.size();
    const auto n_actions = s.actions.size();
    const auto n_agents = s.agents.size();
    if (n_agents == 0 || n_states == 0 || n_actions == 0) fail("empty agent, state or action set");
    if (s.schedule.empty()) fail("horizon must be at least 1");
    if (s.agent_actions.size() != n_agents || s.policy.size() != n_agents) fail("per-agent tables have wrong size");
    if (s.transition.size() != n_states) fail("transition table has wrong row count");
    for (const auto& row : s.transition) {
        if (row.size() != n_actions) fail("transition table row has wrong width");
        for (auto to : row)
            if (to < 0 || static_cast<std::size_t>(to) >= n_states) fail("transition to unknown state");
    }
    if (s.initial_state < 0 || static_cast<std::size_t>(s.initial_state) >= n_states) fail("bad initial state");
    if (s.success.size() != n_states || s.flawed.size() != n_actions) fail("success/flawed masks have wrong size");
    for (auto agent : s.schedule)
        if (agent < 0 || static_cast<std::size_t>(agent) >= n_agents) fail("schedule names unknown agent");
    for (std::size_t i = 0; i < n_agents; ++i) {
        if (s.agent_actions[i].empty()) fail("agent " + s.agents[i] + " has no actions");
        for (auto a : s.agent_actions[i])
            if (a < 0 || static_cast<std::size_t>(a) >= n_actions) fail("agent subset names unknown action");
        if (s.policy[i].size() != n_states) fail("policy row has wrong width");
        for (auto a : s.policy[i])
            if (!s.allowed(static_cast<AgentId>(i), a)) fail("policy picks action outside agent subset");
    }
}

namespace detail {

inline ConcreteTrajectory continue_from(const SyntheticScenario& scenario, const Policy& policy,
                                        ConcreteTrajectory prefix) {
    for (std::size_t t = prefix.actions.size(); t < scenario.horizon(); ++t) {
        const AgentId agent = scenario.active_agent(t);
        const StateId state = prefix.states.back();
        const ActionId action = policy(agent, state);
        if (action < 0 || static_cast<std::size_t>(action) >= scenario.actions.size() || !scenario.allowed(agent, action))
            throw Error(ErrorCode::illegal_action, "agent " + scenario.agents[static_cast<std::size_t>(agent)] +
                                                       " chose an action outside its subset at step " +
                                                       std::to_string(t));
        prefix.actions.push_back(action);
        prefix.states.push_back(scenario.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(action)]);
    }
    return prefix;
}

} // namespace detail

inline ConcreteTrajectory roll_forward(const SyntheticScenario& scenario, const Policy& policy) {
    return detail::continue_from(scenario, policy, ConcreteTrajectory{{scenario.initial_state}, {}});
}

inline ConcreteTrajectory roll_forward(const SyntheticScenario& scenario) {
    return roll_forward(scenario, table_policy(scenario));
}

inline int outcome(const SyntheticScenario& scenario, const ConcreteTrajectory& trajectory) {
    return scenario.success.at(static_cast<std::size_t>(trajectory.states.back())) ? 1 : 0;
}

/// do(a_t := replacement): keep the prefix, swap a_t, regenerate the rest
/// with the scenario policy from the intervened state.
inline ConcreteTrajectory intervene(const SyntheticScenario& scenario, const ConcreteTrajectory& trajectory,
                                    std::size_t t, ActionId replacement) {
    if (t >= scenario.horizon() || t >= trajectory.actions.size())
        throw Error(ErrorCode::precondition_violation, "step " + std::to_string(t) + " beyond horizon");
    if (!scenario.allowed(scenario.active_agent(t), replacement))
        throw Error(ErrorCode::illegal_action, "replacement outside the active agent's subset");
    ConcreteTrajectory prefix;
    prefix.states.assign(trajectory.states.begin(), trajectory.states.begin() + static_cast<std::ptrdiff_t>(t) + 1);
    prefix.actions.assign(trajectory.actions.begin(), trajectory.actions.begin() + static_cast<std::ptrdiff_t>(t));
    const StateId state = prefix.states.back();
    prefix.actions.push_back(replacement);
    prefix.states.push_back(scenario.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(replacement)]);
    return detail::continue_from(scenario, table_policy(scenario), std::move(prefix));
}

/// First replacement for a_t (in the active agent's subset order) whose
/// counterfactual roll-forward succeeds.
inline std::optional<ActionId> find_curing_intervention(const SyntheticScenario& scenario,
                                                        const ConcreteTrajectory& trajectory, std::size_t t) {
    if (t >= scenario.horizon())
        throw Error(ErrorCode::precondition_violation, "step " + std::to_string(t) + " beyond horizon");
    if (outcome(scenario, trajectory) == 1)
        throw Error(ErrorCode::precondition_violation, "trajectory already succeeds");
    for (ActionId candidate : scenario.agent_actions[static_cast<std::size_t>(scenario.active_agent(t))]) {
        if (candidate == trajectory.actions[t]) continue;
        if (outcome(scenario, intervene(scenario, trajectory, t, candidate)) == 1) return candidate;
    }
    return std::nullopt;
}

inline bool is_causal_fault(const SyntheticScenario& scenario, const ConcreteTrajectory& trajectory, std::size_t t) {
    return find_curing_intervention(scenario, trajectory, t).has_value();
}

inline bool is_trivial_fault(const SyntheticScenario& scenario, const ConcreteTrajectory& trajectory, std::size_t t,
                             const LocalJudge& judge) {
    if (t >= scenario.horizon())
        throw Error(ErrorCode::precondition_violation, "step " + std::to_string(t) + " beyond horizon");
    if (!judge.is_fault(trajectory.states[t], trajectory.actions[t]))
        throw Error(ErrorCode::not_a_step_fault, "f <= epsilon at step " + std::to_string(t));
    return !is_causal_fault(scenario, trajectory, t);
}

inline FaultVerdict analyze(const SyntheticScenario& scenario, const ConcreteTrajectory& trajectory,
                            const LocalJudge& judge) {
    FaultVerdict verdict;
    for (std::size_t t = 0; t < scenario.horizon(); ++t)
        if (judge.is_fault(trajectory.states[t], trajectory.actions[t])) verdict.step_faults.insert(t);
    if (outcome(scenario, trajectory) == 1) return verdict;
    for (std::size_t t = 0; t < scenario.horizon(); ++t) {
        if (auto witness = find_curing_intervention(scenario, trajectory, t)) {
            verdict.causal_steps.insert(t);
            verdict.witnesses[t] = *witness;
        } else if (verdict.step_faults.contains(t)) {
            verdict.trivial_steps.insert(t);
        }
    }
    for (auto t : verdict.step_faults) {
        if (verdict.causal_steps.contains(t)) {
            verdict.decisive = DecisiveFault{scenario.active_agent(t), t};
            break;
        }
    }
    return verdict;
}

/// argmin t subject to f(s_t, a_t) > epsilon and some replacement cures the run.
inline std::optional<DecisiveFault> decisive_fault(const SyntheticScenario& scenario,
                                                   const ConcreteTrajectory& trajectory, const LocalJudge& judge) {
    if (outcome(scenario, trajectory) == 1) return std::nullopt;
    for (std::size_t t = 0; t < scenario.horizon(); ++t) {
        if (!judge.is_fault(trajectory.states[t], trajectory.actions[t])) continue;
        if (is_causal_fault(scenario, trajectory, t)) return DecisiveFault{scenario.active_agent(t), t};
    }
    return std::nullopt;
}

/// Renders the run as a Who&When-layout record labelled with the oracle's
/// decisive fault.
inline DatasetRecord export_as_trajectory(const SyntheticScenario& scenario, const ConcreteTrajectory& trajectory,
                                          const LocalJudge& judge) {
    auto decisive = decisive_fault(scenario, trajectory, judge);
    if (!decisive) throw Error(ErrorCode::no_decisive_fault, scenario.name);
    const auto witness = find_curing_intervention(scenario, trajectory, decisive->step);

    DatasetRecord record;
    record.record_id = scenario.name;
    std::string success_list;
    for (std::size_t s = 0; s < scenario.states.size(); ++s) {
        if (!scenario.success[s]) continue;
        if (!success_list.empty()) success_list += ", ";
        success_list += scenario.states[s];
    }
    record.trajectory.problem = (scenario.task.empty() ? std::string("Drive the system") : scenario.task) +
                                " Starting from state '" +
                                scenario.states[static_cast<std::size_t>(scenario.initial_state)] +
                                "', the team succeeds if the final state is one of: " + success_list + ".";
    record.trajectory.final_outcome = false;
    for (std::size_t t = 0; t < trajectory.actions.size(); ++t) {
        const auto& agent = scenario.agents[static_cast<std::size_t>(scenario.active_agent(t))];
        const auto& from = scenario.states[static_cast<std::size_t>(trajectory.states[t])];
        const auto& action = scenario.actions[static_cast<std::size_t>(trajectory.actions[t])];
        const auto& to = scenario.states[static_cast<std::size_t>(trajectory.states[t + 1])];
        record.trajectory.steps.push_back(
            Step{t, agent, "In state '" + from + "' I perform '" + action + "'. The system is now in state '" + to + "'."});
    }
    record.label.mistake_agent = scenario.agents[static_cast<std::size_t>(decisive->agent)];
    record.label.mistake_step = decisive->step;
    record.label.mistake_reason = "Replacing '" + scenario.actions[static_cast<std::size_t>(trajectory.actions[decisive->step])] +
                                  "' with '" + scenario.actions[static_cast<std::size_t>(*witness)] +
                                  "' at step " + std::to_string(decisive->step) + " makes the run succeed.";
    record.ground_truth_answer = success_list;
    return record;
}

inline DatasetRecord export_as_trajectory(const SyntheticScenario& scenario, const ConcreteTrajectory& trajectory) {
    return export_as_trajectory(scenario, trajectory, declared_fault_judge(scenario));
}

// ---------------------------------------------------------------------------
// Fixture files
//
// {
//   "name": "...", "task": "...",
//   "agents": [...], "states": [...], "initial_state": "...",
//   "actions": {"agent": ["action", ...], ...},
//   "schedule": ["agent", ...],
//   "transitions": [{"from": s, "action": a, "to": s'}, ...],   unlisted pairs stay put
//   "success_states": [...], "flawed_actions": [...],
//   "policy": [{"agent": i, "state": s, "action": a}, ...]       unlisted pairs take the agent's first action
// }

inline SyntheticScenario scenario_from_json(const Json& doc) {
    auto bad = [](const std::string& why) { return Error(ErrorCode::invalid_scenario, why); };
    SyntheticScenario s;
    s.name = doc.value("name", std::string("scenario"));
    s.task = doc.value("task", std::string());
    s.agents = doc.at("agents").get<std::vector<std::string>>();
    s.states = doc.at("states").get<std::vector<std::string>>();

    auto index_of = [&](const std::vector<std::string>& names, const std::string& key, const char* what) {
        auto it = std::find(names.begin(), names.end(), key);
        if (it == names.end()) throw bad(std::string("unknown ") + what + " '" + key + "'");
        return static_cast<int>(it - names.begin());
    };

    const Json& subsets = doc.at("actions");
    s.agent_actions.resize(s.agents.size());
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
        if (!subsets.contains(s.agents[i])) throw bad("no action subset for agent '" + s.agents[i] + "'");
        for (const auto& name : subsets.at(s.agents[i]).get<std::vector<std::string>>()) {
            auto it = std::find(s.actions.begin(), s.actions.end(), name);
            ActionId id = static_cast<ActionId>(it - s.actions.begin());
            if (it == s.actions.end()) s.actions.push_back(name);
            s.agent_actions[i].push_back(id);
        }
    }
    for (const auto& agent : doc.at("schedule").get<std::vector<std::string>>())
        s.schedule.push_back(index_of(s.agents, agent, "agent"));
    s.initial_state = index_of(s.states, doc.at("initial_state").get<std::string>(), "state");

    s.transition.assign(s.states.size(), std::vector<StateId>(s.actions.size()));
    for (std::size_t st = 0; st < s.states.size(); ++st)
        for (std::size_t a = 0; a < s.actions.size(); ++a) s.transition[st][a] = static_cast<StateId>(st);
    for (const auto& edge : doc.value("transitions", Json::array())) {
        auto from = index_of(s.states, edge.at("from").get<std::string>(), "state");
        auto action = index_of(s.actions, edge.at("action").get<std::string>(), "action");
        s.transition[static_cast<std::size_t>(from)][static_cast<std::size_t>(action)] =
            index_of(s.states, edge.at("to").get<std::string>(), "state");
    }

    s.success.assign(s.states.size(), false);
    for (const auto& name : doc.value("success_states", std::vector<std::string>{}))
        s.success[static_cast<std::size_t>(index_of(s.states, name, "state"))] = true;
    s.flawed.assign(s.actions.size(), false);
    for (const auto& name : doc.value("flawed_actions", std::vector<std::string>{}))
        s.flawed[static_cast<std::size_t>(index_of(s.actions, name, "action"))] = true;

    s.policy.resize(s.agents.size());
    for (std::size_t i = 0; i < s.agents.size(); ++i) s.policy[i].assign(s.states.size(), s.agent_actions[i].front());
    for (const auto& rule : doc.value("policy", Json::array())) {
        auto agent = index_of(s.agents, rule.at("agent").get<std::string>(), "agent");
        auto state = index_of(s.states, rule.at("state").get<std::string>(), "state");
        s.policy[static_cast<std::size_t>(agent)][static_cast<std::size_t>(state)] =
            index_of(s.actions, rule.at("action").get<std::string>(), "action");
    }
    validate(s);
    return s;
}

/// Full tables (every transition and policy entry listed).
inline Json scenario_to_json(const SyntheticScenario& s) {
    Json doc;
    doc["name"] = s.name;
    doc["task"] = s.task;
    doc["agents"] = s.agents;
    doc["states"] = s.states;
    doc["initial_state"] = s.states[static_cast<std::size_t>(s.initial_state)];
    Json subsets = Json::object();
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
        Json names = Json::array();
        for (auto a : s.agent_actions[i]) names.push_back(s.actions[static_cast<std::size_t>(a)]);
        subsets[s.agents[i]] = std::move(names);
    }
    doc["actions"] = std::move(subsets);
    Json schedule = Json::array();
    for (auto agent : s.schedule) schedule.push_back(s.agents[static_cast<std::size_t>(agent)]);
    doc["schedule"] = std::move(schedule);
    Json transitions = Json::array();
    for (std::size_t st = 0; st < s.states.size(); ++st)
        for (std::size_t a = 0; a < s.actions.size(); ++a)
            transitions.push_back({{"from", s.states[st]},
                                   {"action", s.actions[a]},
                                   {"to", s.states[static_cast<std::size_t>(s.transition[st][a])]}});
    doc["transitions"] = std::move(transitions);
    Json success = Json::array();
    for (std::size_t st = 0; st < s.states.size(); ++st)
        if (s.success[st]) success.push_back(s.states[st]);
    doc["success_states"] = std::move(success);
    Json flawed = Json::array();
    for (std::size_t a = 0; a < s.actions.size(); ++a)
        if (s.flawed[a]) flawed.push_back(s.actions[a]);
    doc["flawed_actions"] = std::move(flawed);
    Json policy = Json::array();
    for (std::size_t i = 0; i < s.agents.size(); ++i)
        for (std::size_t st = 0; st < s.states.size(); ++st)
            policy.push_back({{"agent", s.agents[i]},
                              {"state", s.states[st]},
                              {"action", s.actions[static_cast<std::size_t>(s.policy[i][st])]}});
    doc["policy"] = std::move(policy);
    return doc;
}

// ---------------------------------------------------------------------------
// Random scenarios

struct GeneratorLimits {
    int min_agents = 2, max_agents = 4;
    int min_states = 4, max_states = 16;
    int min_actions_per_agent = 2, max_actions_per_agent = 8;
    int min_horizon = 3, max_horizon = 12;
};

namespace detail {

/// Portable bounded draw; std distributions differ across standard libraries.
inline int draw(std::mt19937_64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline const std::vector<std::string>& agent_names() {
    static const std::vector<std::string> names{"Planner", "WebSurfer", "Coder", "Verifier", "Orchestrator", "FileSurfer"};
    return names;
}

inline const std::vector<std::string>& verbs() {
    static const std::vector<std::string> names{"search", "fetch", "compute", "verify", "summarize", "plan", "reply", "retry"};
    return names;
}

} // namespace detail

inline SyntheticScenario random_scenario(std::mt19937_64& rng, const GeneratorLimits& limits = {}) {
    using detail::draw;
    SyntheticScenario s;
    const int n_agents = draw(rng, limits.min_agents, std::min<int>(limits.max_agents, static_cast<int>(detail::agent_names().size())));
    const int n_states = draw(rng, limits.min_states, limits.max_states);
    const int horizon = draw(rng, limits.min_horizon, limits.max_horizon);
    s.task = "Solve the assigned task.";
    for (int i = 0; i < n_agents; ++i) s.agents.push_back(detail::agent_names()[static_cast<std::size_t>(i)]);
    for (int i = 0; i < n_states; ++i) s.states.push_back("s" + std::to_string(i));
    s.agent_actions.resize(static_cast<std::size_t>(n_agents));
    for (int i = 0; i < n_agents; ++i) {
        const int count = draw(rng, limits.min_actions_per_agent, limits.max_actions_per_agent);
        for (int k = 0; k < count; ++k) {
            const auto& verb = detail::verbs()[static_cast<std::size_t>(k) % detail::verbs().size()];
            s.agent_actions[static_cast<std::size_t>(i)].push_back(static_cast<ActionId>(s.actions.size()));
            s.actions.push_back(s.agents[static_cast<std::size_t>(i)] + "." + verb + "_" + std::to_string(k));
        }
    }
    for (int t = 0; t < horizon; ++t) s.schedule.push_back(draw(rng, 0, n_agents - 1));
    s.transition.assign(static_cast<std::size_t>(n_states), std::vector<StateId>(s.actions.size()));
    for (auto& row : s.transition)
        for (auto& to : row) to = draw(rng, 0, n_states - 1);
    s.initial_state = 0;
    s.success.assign(static_cast<std::size_t>(n_states), false);
    for (int st = 1; st < n_states; ++st) s.success[static_cast<std::size_t>(st)] = draw(rng, 0, 3) == 0;
    s.flawed.assign(s.actions.size(), false);
    for (std::size_t a = 0; a < s.actions.size(); ++a) s.flawed[a] = draw(rng, 0, 2) == 0;
    s.policy.resize(static_cast<std::size_t>(n_agents));
    for (int i = 0; i < n_agents; ++i) {
        const auto& subset = s.agent_actions[static_cast<std::size_t>(i)];
        for (int st = 0; st < n_states; ++st)
            s.policy[static_cast<std::size_t>(i)].push_back(
                subset[static_cast<std::size_t>(draw(rng, 0, static_cast<int>(subset.size()) - 1))]);
    }
    validate(s);
    return s;
}

/// Draws scenarios until one fails and has a decisive fault under the
/// declared-fault judge.
inline SyntheticScenario random_faulty_scenario(std::mt19937_64& rng, const GeneratorLimits& limits = {}) {
    for (;;) {
        auto s = random_scenario(rng, limits);
        const auto run = roll_forward(s);
        if (outcome(s, run) == 0 && decisive_fault(s, run, declared_fault_judge(s))) return s;
    }
}

} // namespace faultattr::faultlab
