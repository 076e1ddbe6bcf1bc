#pragma once

// Prompt templates, kept byte-for-byte as published (line breaks included).
// Placeholders use {name}; "{{" and "}}" render as literal braces.

#include <string_view>

namespace faultattr::prompts {

inline constexpr std::string_view kTemplateVersion = "1";

/// Chat-LLM one-shot prompt. Placeholders: {problem}, {failure_log}.
inline constexpr std::string_view kChatLlm = R"PROMPT(You are an AI assistant tasked with analyzing a multi-agent 
conversation history when solving a real world problem.
The problem is: {problem}.
Identify which agent made an error, at which step, and explain the 
reason for the error.
Here’s the conversation: {failure_log}
Based on this conversation, please predict the following:
1. The name of the agent who made a mistake that should be directly 
responsible for the wrong solution to the real
world problem. If there are no agents that make obvious mistakes, 
decide one single agent in your mind. Directly
output the name of the Expert.
2. In which step the mistake agent first made mistake. For example, 
in a conversation structured as follows:
{{
”agent a”: ”xx”,
”agent b”: ”xxxx”,
”agent c”: ”xxxxx”,
”agent a”: ”xxxxxxx”
}},
each entry represents a ’step’ where an agent provides input. 
The ’x’ symbolizes the speech of each agent. If the
mistake is in agent c’s speech, the step number is 2. If the second 
speech by ’agent a’ contains the mistake, the step
number is 3, and so on. Please determine the step number where the 
first mistake occurred.
3. The reason for your prediction. Please answer in the format. 
Notice that you can *ONLY* output the json. 
```json
{{
    "agent_name": "",
    "step_number": 0,
    "reason_for_mistake": ""
}}
```
)PROMPT";

/// Shared wrapper for Step-by-Step, Binary Search and the RAFFLES judge.
/// Placeholders: {task_description}, {input_metadata}, {task_output}.
inline constexpr std::string_view kGenericTemplate = R"PROMPT(You are an intelligent assistant that takes in a task 
description, and task output and complete based on 
requirements. 

Task Description
{task_description}

Input Metadata
{input_metadata}

Task Output
{task_output}

Remember, that your output should only be a json and nothing else. 
)PROMPT";

inline constexpr std::string_view kStepByStepInstruction = R"PROMPT(You are an AI assistant tasked with evaluating the correctness of 
each step in an ongoing multi-agent conversation aimed at solving 
a real-world problem. Based on the conversation history in 
"history_up_to_step" up to the current step. 
Your task is to **determine whether the most recent agent’s action 
contains an error that could hinder the problemsolving process**. 
Please respond with ’Yes’ or ’No’ and provide a clear explanation for 
your judgment.
Note: Please avoid being overly critical in your evaluation.
Attention: Respond in the format:
1. Yes/No. Yes being that the pipeline failure is because of this 
latest step and No being that the  pipeline failure is not because of 
this step.
2. Reason for the judgment.
Remember that you are not trying to answer the question  based on the 
question given. Your job is to **determine  whether the most recent 
agent’s action contains an error  that could hinder the problemsolving 
process**. 
)PROMPT";

/// Yes/no answer block for Step-by-Step (same block the tool-caller judge uses).
inline constexpr std::string_view kStepByStepTaskOutput = R"PROMPT(Please answer in the format:
```json
{
    "judgement": "yes" or "no",
    "reason": ""
}
```
)PROMPT";

/// The two range names are bound as {lower_half_range} / {upper_half_range};
/// the published box prints them as bare words.
inline constexpr std::string_view kBinarySearchInstruction = R"PROMPT(You are an AI assistant tasked with analyzing a segment of a multi-agent 
conversation. Multiple agents are collaborating to address a user query, 
with the goal of resolving the query through their collective dialogue.
Your primary task is to identify location of the most critical mistake, 
and determine the single step in the conversation
where this error occurs, ultimately leading to the failure in resolving 
the user’s query.
Based on your analysis, predict whether the error is more likely to be 
located in the upper or lower half of the segment.
lower half is defined as the range {lower_half_range} and upper half is 
defined as the range {upper_half_range}.
Please simply output either ’upper half’ or ’lower half’.
You should not output anything else.
)PROMPT";

inline constexpr std::string_view kBinarySearchTaskOutput = R"PROMPT(Please answer in the format:
```json
{
    "judgement": "upper half" or "lower half",
    "reason": ""
}
```
)PROMPT";

/// Planner prompt. The chat-template marker splits it into a system and a
/// user message. Placeholder: {input_data['metadata']}.
inline constexpr std::string_view kToolCallerPlanner = R"PROMPT(You are an expert in planning 
and calling agents to evaluate the input. 
You are given a system log and a set of possible agents.
Based on the log, you will need to make one or more agent calls to 
achieve the purpose.
If none of the agents can be used, point it out. If the given question 
lacks the parameters required by the function, also point it out. 
If you decide to invoke any of the function(s), you MUST put it in the 
format of <agent>agent_name(args, kwargs)</agent>
You SHOULD NOT include any other text in the response. You should only 
call each agent ONCE. 
Here is a list of agents in JSON format that you can invoke.
1. You don't have to look over the entire conversation history one 
after another, it is okay to choose the most important one first. 
2. There is only one mistake in each conversation history, so you only 
need to find one agent and one step.
3. Your goal is to find the agent at fault with the least number of agent 
calls. So choose the agent to inspect wisely based on which agent looks 
like that it has fault. 
4. User cannot make a mistake, so there's no need to consider user input. 
5. If you cannot find any mistake, you can output "no mistake" as the 
agent name and -1 as the step number.
6. You should limit your tool calling to less than 3 times. 
<|eot_id|><|start_header_id|>user<|end_header_id|>

Your job is to use agents to give a assessment score on each of the 
following components of the complex system,
```
Evaluate based on the following log of the pipeline:
{input_data['metadata']}
Now, start your evaluation. Your generation can only be of 2 of these 
options. 
Option A, if you want to call an agent,
1. **ONLY** output the tool calling and nothing else, such as 
<agent>agent_name(args, kwargs)</agent>. 
2. You can only call one agent at a time. 
Option B, if you feel confident about the tools already used and is 
ready to 
give the overall score, provide the following information in json 
Please answer in the format:
```json
{{
    "agent_name": "",
    "step_number": 0,
    "reason_for_mistake": ""
}}
```
)PROMPT";

/// Placeholder: {prompt_history}.
inline constexpr std::string_view kToolCallerJudge = R"PROMPT(You are an AI assistant tasked with evaluating the correctness of each 
step in an ongoing multi-agent conversation aimed at solving a 
real-world problem. 
Based on the conversation history in "history_up_to_step" up to the 
current step. 
Your task is to **determine whether the most recent agent’s action 
contains an error that could hinder the problemsolving process**. 
Please respond with ’Yes’ or ’No’ and provide a clear explanation 
for your judgment.
Note: Please avoid being overly critical in your evaluation.
Attention: Respond in the format:
1. Yes/No. Yes being that the pipeline failure is because of this 
latest step and No being that the pipeline failure is not because of 
this step.
2. Reason for the judgment.
Remember that you are not trying to answer the question based on the 
question given. Your job is to **determine whether the most recent 
agent’s action contains an error that could hinder the problemsolving 
process**. 
Please answer in the format:
```json
{{
    "judgement": "yes" or "no",
    "reason": ""
}}
```
conversation history: 
{prompt_history}
)PROMPT";

inline constexpr std::string_view kJudgeInstruction = R"PROMPT(You are an AI assistant tasked with analyzing a multi-agent conversation
history when solving a real world problem. Identify which agent made an 
error, at which step, and explain the reason for the error.
Based on this conversation, please predict the following:
1. The name of the agent who made a mistake that should be directly 
responsible for the wrong solution to the real world problem. If there 
are no agents that make obvious mistakes, decide one single agent in 
your mind. Directly output the name of the Expert.
2. In which step the mistake agent first made mistake.
**You must always output an agent name and a step number.** Null, None,
or empty values are strictly forbidden for the "agent_name" and 
"step_number" fields.
Notice that you should point out the agent and the step such that 
all three of the following criteria are satisfied:
1. The agent made a mistake at that step.
2. It is the first mistake step that relates to the final wrong outcome.
3. The mistake was not corrected by or correctable by later agents.
## Handling Ambiguity (Fallback Procedure)
In cases where no single agent or step perfectly meets all three 
criteria (for example, if the error was collaborative or no obvious 
mistake exists), **you must apply the following logic to make a 
determination:**
Identify the agent whose contribution was the **most pivotal in setting
the final, incorrect direction.** This could be the agent who introduced
the flawed method, provided the key piece of wrong information, or 
signed off on the solution without a final critical review. Select the
corresponding step. This ensures you always provide a "best guess" even
in unclear situations.

)PROMPT";

inline constexpr std::string_view kJudgeOutputFormat = R"PROMPT(Please answer in the format:
```json
{{
    "agent_name": "The name of the faulty agent you identified, 
    satisfying all the three criteria.",
    "step_number": "The step number where the chosen agent made 
    the mistake, satisfying all the three criteria.",
    "mistake_reason": "Briefly explain **why the agent made a 
    mistake at that step.**. Reference the log as needed for clarity.",
    "first_mistake": "Briefly explain **why it is the first mistake 
    step that relates to the final wrong outcome.** Reference the 
    log as needed for clarity.",
    "mistake_not_corrected": "Briefly explain **how the mistake was 
    not corrected by or correctable by later agents.** Reference the
    log as needed for clarity."
}}
```
)PROMPT";

/// Placeholders for all three evaluators: {task_log}, {error_step}.
inline constexpr std::string_view kEvaluatorMistake = R"PROMPT(You are a rigorous and meticulous logic verifier, serving as a critical 
component within a reasoning system dedicated to fault attribution in 
complex system logs. Your specific assigned task is to verify the 
reasoning logic provided by your partner. Your sole purpose is to 
identify flaws, inconsistencies, and leaps in logic, and you must not be 
swayed by your partner's conclusion, but only by the soundness of their 
argument. Your partner will identify the agent and the step such that all 
three of the following criteria are satisfied:
1. The agent made a mistake at that step.
2. It is the first mistake step that relates to the final wrong outcome.
3. The mistake was not corrected by or correctable by later agents.
Hence, you are provided with the following inputs:
- Task Log: A multi-agent conversation log
- Error Step: Output from your partner with candidate point of fault and 
their associated reasoning.
Your task is **ONLY** to think whether the argument provided by your 
partner for 'correctly pointing out a faulty agent and step number' is 
logical. You  will try to verify the argument from the task log and 
give your reasons about whether this argument is logical or not. Then, 
you will give a confidence score between 0 to 100 indicating your 
confidence in the soundness of your partner's argument.
For example, general or non-specific reasoning that cannot be verified by 
a non-expert is less logical than specific reasoning that can be easily 
verified. Further, if you are unable to verify the correctness of the 
argument from the task log, you should give a low confidence score.
## Task Log ##
{task_log}
## Error Step ##
{error_step}
## Your output format ##
You should directly output a json in the following format:
```json
{{
    "reason": "Briefly explain why the given argument for 'correctly 
    pointing out a faulty agent and step number' is sound or unsound. 
    If unsound, identify the specific flaw.",
    "confidence": "Assign an integer score between 0 to 100 indicating 
    your confidence in the **soundness and logical consistency of the 
    partner's argument**. 100 means the argument is logical, specific, 
    and fully supported by the log. 0 means the argument is illogical, 
    non-specific, or contradicts the log."
}}
```
)PROMPT";

inline constexpr std::string_view kEvaluatorFirstMistake = R"PROMPT(You are a rigorous and meticulous logic verifier, serving as a critical 
component within a reasoning system dedicated to fault attribution in 
complex system logs. Your specific assigned task is to verify the 
reasoning logic provided by your partner. Your sole purpose is to 
identify flaws, inconsistencies, and leaps in logic, and you must not 
be swayed by your partner's conclusion, but only by the soundness of 
their argument.
Your partner will identify the agent and the step such that all three 
of the following criteria are satisfied:
1. The agent made a mistake at that step.
2. It is the first mistake step that relates to the final wrong outcome.
3. The mistake was not corrected by or correctable by later agents.
Hence, you are provided with the following inputs:
- Task Log: A multi-agent conversation log
- Error Step: Output from your partner with candidate point of fault 
and their associated reasoning.
Your task is **ONLY** to think whether the argument provided by your 
partner for 'finding the first mistake in the pipeline' is logical. 
You will try to verify the argument from the task log and give your 
reasons about whether this argument is logical or not. Then, you will
give a confidence score between 0 to 100 indicating your confidence 
in the soundness of your partner's argument.
For example, general or non-specific reasoning that cannot be verified 
by a non-expert is less logical than specific reasoning that can be 
easily verified. Further, if you are unable to verify the correctness
of the argument from the task log, you should give a low confidence 
score.
## Task Log ##
{task_log}
## Error Step ##
{error_step}
## Your output format ##
You should directly output a json in the following format:
```json
{{
    "reason": "Briefly explain why the given argument for 'finding the 
    first mistake in the pipeline' is sound or unsound. If unsound, 
    identify the specific flaw.",
    "confidence": "Assign an integer score between 0 to 100 indicating
    your confidence in the **soundness and logical consistency of the 
    partner's argument**. 100 means the argument is logical, specific,
    and fully supported by the log. 0 means the argument is illogical,
    non-specific, or contradicts the log."
}}
```
)PROMPT";

inline constexpr std::string_view kEvaluatorNotCorrected = R"PROMPT(You are a rigorous and meticulous logic verifier, serving as a critical
component within a reasoning system dedicated to fault attribution in 
complex system logs. Your specific assigned task is to verify the 
reasoning logic provided by your partner. Your sole purpose is to 
identify flaws, inconsistencies, and leaps in logic, and you must not 
be swayed by your partner's conclusion, but only by the soundness of 
their argument.
Your partner will identify the agent and the step such that all three 
of the following criteria are satisfied:
1. The agent made a mistake at that step.
2. It is the first mistake step that relates to the final wrong outcome.
3. The mistake was not corrected by or correctable by later agents.
Hence, you are provided with the following inputs:
- Task Log: A multi-agent conversation log
- Error Step: Output from your partner with candidate point of fault and
their associated reasoning.
Your task is **ONLY** to think whether the argument provided by your 
partner for 'how this mistake was never corrected afterwards' is logical.
You will try to verify the argument from the task log and give your 
reasons about whether this argument is logical or not. Then, you will 
give a confidence score between 0 to 100 indicating your confidence 
in the soundness of your partner's argument.
For example, general or non-specific reasoning that cannot be verified
by a non-expert is less logical than specific reasoning that can be 
easily verified. Further, if you are unable to verify the correctness
of the argument from the task log, you should give a low confidence 
score.
## Task Log ##
{task_log}
## Error Step ##
{error_step}
## Your output format ##
You should directly output a json in the following format:
```json
{{
    "reason": "Briefly explain why the given argument for 'how this 
    mistake was never corrected afterwards' is sound or unsound. If 
    unsound, identify the specific flaw.",
    "confidence": "Assign an integer score between 0 to 100 indicating
    your confidence in the **soundness and logical consistency of the 
    partner's argument**. 100 means the argument is logical, specific,
    and fully supported by the log. 0 means the argument is illogical,
    non-specific, or contradicts the log."
}}
```
)PROMPT";

} // namespace faultattr::prompts
