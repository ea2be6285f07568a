#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ptsel {

enum class ErrorCode {
    invalid_argument,
    denominator_underflow,
    degenerate_sample,
    optim_failed,
    degenerate_design,
    too_few_events,
    length_mismatch,
    too_large,
    empty_stratum,
    fit_failed,
    schema_mismatch,
    bad_value,
    usage,
    not_found,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "InvalidArgument";
        case ErrorCode::denominator_underflow: return "DenominatorUnderflow";
        case ErrorCode::degenerate_sample: return "DegenerateSample";
        case ErrorCode::optim_failed: return "OptimFailed";
        case ErrorCode::degenerate_design: return "DegenerateDesign";
        case ErrorCode::too_few_events: return "TooFewEvents";
        case ErrorCode::length_mismatch: return "LengthMismatch";
        case ErrorCode::too_large: return "TooLarge";
        case ErrorCode::empty_stratum: return "EmptyStratum";
        case ErrorCode::fit_failed: return "FitFailed";
        case ErrorCode::schema_mismatch: return "SchemaMismatch";
        case ErrorCode::bad_value: return "BadValue";
        case ErrorCode::usage: return "Usage";
        case ErrorCode::not_found: return "NotFound";
    }
    return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class so callers
/// (CLI, service, retry loops) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace ptsel
