#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fusion_bounds {

/// Stable, machine-readable error categories. The CLI maps each to an exit
/// code and prints the code name in its stderr JSON.
enum class ErrorCode {
    Precondition,
    NonPositiveOutcome,
    EmptyCell,
    DimensionMismatch,
    InvalidCsv,
    FileNotFound,
    SingularSystem,
    EmptyTrainingCell,
    EmptySubgroup,
    DegenerateDraw,
    InternalsUnavailable,
    UnknownScenario,
    RTooSmall,
    InvalidConfig,
    BootstrapExhausted,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw Error(ErrorCode::Precondition, message);
}

}  // namespace fusion_bounds
