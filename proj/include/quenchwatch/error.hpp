#ifndef QUENCHWATCH_ERROR_HPP
#define QUENCHWATCH_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace quenchwatch {

enum class ErrorCode {
    EmptySeries,
    EmptyFile,
    ParseError,
    NonUniformSampling,
    SpecInfeasible,
    ShapeMismatch,
    LengthMismatch,
    DivergenceDetected,
    KTooLarge,
    IncompatibleModel,
    InvalidArgument,
    NotFound,
    Conflict,
    EmptyRange,
    IoError,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonUniformSampling: return "NonUniformSampling";
    case ErrorCode::SpecInfeasible: return "SpecInfeasible";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::IncompatibleModel: return "IncompatibleModel";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::EmptyRange: return "EmptyRange";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace quenchwatch

#endif // QUENCHWATCH_ERROR_HPP
