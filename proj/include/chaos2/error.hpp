#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chaos2 {

enum class ErrorKind {
    NotSymmetric,
    DimensionMismatch,
    ConvergenceFailure,
    AmbiguousNumerics,
    RankCertificateFailed,
    PreconditionViolated,
    NotDependent,
    NoWitnessFound,
    BasisTooLarge,
    InsufficientSamples,
    InvalidK,
    ZeroCoefficients,
    ZeroVariance,
    HorizonTooShort,
    EmptyBatch,
    ConfigParse,
    InputParse,
    Internal,
};

[[nodiscard]] constexpr std::string_view kind_name(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::NotSymmetric: return "NotSymmetric";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
        case ErrorKind::AmbiguousNumerics: return "AmbiguousNumerics";
        case ErrorKind::RankCertificateFailed: return "RankCertificateFailed";
        case ErrorKind::PreconditionViolated: return "PreconditionViolated";
        case ErrorKind::NotDependent: return "NotDependent";
        case ErrorKind::NoWitnessFound: return "NoWitnessFound";
        case ErrorKind::BasisTooLarge: return "BasisTooLarge";
        case ErrorKind::InsufficientSamples: return "InsufficientSamples";
        case ErrorKind::InvalidK: return "InvalidK";
        case ErrorKind::ZeroCoefficients: return "ZeroCoefficients";
        case ErrorKind::ZeroVariance: return "ZeroVariance";
        case ErrorKind::HorizonTooShort: return "HorizonTooShort";
        case ErrorKind::EmptyBatch: return "EmptyBatch";
        case ErrorKind::ConfigParse: return "ConfigParse";
        case ErrorKind::InputParse: return "InputParse";
        case ErrorKind::Internal: return "Internal";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI) can dispatch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(kind_name(kind)) + ": " + message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace chaos2
