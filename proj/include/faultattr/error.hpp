#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace faultattr {

enum class ErrorCode {
    // trace
    malformed_record,
    non_integer_step,
    empty_dataset,
    too_few_records,
    // faultlab
    illegal_action,
    precondition_violation,
    not_a_step_fault,
    no_decisive_fault,
    invalid_scenario,
    // backend
    context_overflow,
    transport_error,
    malformed_response,
    missing_script_entry,
    // prompting
    unbound_placeholder,
    unparseable_output,
    schema_mismatch,
    malformed_tool_call,
    // metrics
    empty_outcomes,
    no_multi_iteration_runs,
    missing_quartile,
    join_failure,
    // cli
    config_invalid,
    backend_unavailable,
    io_error,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::malformed_record: return "MalformedRecord";
    case ErrorCode::non_integer_step: return "NonIntegerStep";
    case ErrorCode::empty_dataset: return "EmptyDataset";
    case ErrorCode::too_few_records: return "TooFewRecords";
    case ErrorCode::illegal_action: return "IllegalAction";
    case ErrorCode::precondition_violation: return "PreconditionViolation";
    case ErrorCode::not_a_step_fault: return "NotAStepFault";
    case ErrorCode::no_decisive_fault: return "NoDecisiveFault";
    case ErrorCode::invalid_scenario: return "InvalidScenario";
    case ErrorCode::context_overflow: return "ContextOverflow";
    case ErrorCode::transport_error: return "TransportError";
    case ErrorCode::malformed_response: return "MalformedResponse";
    case ErrorCode::missing_script_entry: return "MissingScriptEntry";
    case ErrorCode::unbound_placeholder: return "UnboundPlaceholder";
    case ErrorCode::unparseable_output: return "UnparseableOutput";
    case ErrorCode::schema_mismatch: return "SchemaMismatch";
    case ErrorCode::malformed_tool_call: return "MalformedToolCall";
    case ErrorCode::empty_outcomes: return "EmptyOutcomes";
    case ErrorCode::no_multi_iteration_runs: return "NoMultiIterationRuns";
    case ErrorCode::missing_quartile: return "MissingQuartile";
    case ErrorCode::join_failure: return "JoinFailure";
    case ErrorCode::config_invalid: return "ConfigInvalid";
    case ErrorCode::backend_unavailable: return "BackendUnavailable";
    case ErrorCode::io_error: return "IOError";
    }
    return "Unknown";
}

/// Every failure the library raises carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace faultattr
