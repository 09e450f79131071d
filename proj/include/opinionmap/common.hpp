#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace opinionmap {

// Machine-readable error codes shared by the library, the CLI and the
// annotation service wire protocol.
enum class ErrorCode {
    invalid_argument,
    unknown_entity,
    duplicate_entity,
    malformed_record,
    single_class,
    vocabulary_mismatch,
    empty_input,
    invariant_violation,
    already_published,
    not_found,
    stale_lease,
    not_claimed,
    unknown_annotator,
    annotation_incomplete,
    unavailable,
    io_error,
    config_error,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    virtual bool retryable() const noexcept { return false; }

private:
    ErrorCode code_;
};

// Raised when an external dependency (adapter endpoint, service) fails in a
// way that leaves no partial state behind; the caller may retry.
class RetryableError : public Error {
public:
    using Error::Error;
    bool retryable() const noexcept override { return true; }
};

using TimePoint = std::chrono::sys_seconds;
using Day = std::chrono::sys_days;

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS", optional fractional seconds,
// and a trailing "Z" or "+HH:MM"/"-HH:MM" offset. Result is UTC.
TimePoint parse_timestamp(std::string_view text);
Day parse_day(std::string_view text);

std::string format_timestamp(TimePoint t);  // YYYY-MM-DDTHH:MM:SSZ
std::string format_day(Day d);              // YYYY-MM-DD

inline Day day_of(TimePoint t) { return std::chrono::floor<std::chrono::days>(t); }

// Round-trip exact decimal rendering of a double ("%.17g").
std::string format_double(double v);

}  // namespace opinionmap
