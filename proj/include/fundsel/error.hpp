#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fundsel {

/// Every failure the engine reports by name. The CLI prints the name on
/// stderr and maps the category to an exit code.
enum class ErrorKind {
    // data / ingestion
    MissingFile,
    SchemaError,
    DuplicateQuarter,
    NonPositiveLevel,
    GapInSeries,
    EmptyUniverse,
    // preprocessing
    AllFeaturesDropped,
    SeriesTooShort,
    AllMissing,
    UnimputedMissing,
    TooFewRows,
    NoOverlap,
    WindowTooShort,
    // models
    DimensionMismatch,
    DegenerateTargets,
    NonFiniteLoss,
    ScalerUnset,
    EmptyInput,
    DegenerateRange,
    SingularSystem,
    // backtest
    UniverseTooSmall,
    MissingSample,
    MissingRealized,
    // configuration
    InvalidArgument,
};

enum class ErrorCategory { Usage, Data, Numerical };

constexpr std::string_view error_name(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::DuplicateQuarter: return "DuplicateQuarter";
    case ErrorKind::NonPositiveLevel: return "NonPositiveLevel";
    case ErrorKind::GapInSeries: return "GapInSeries";
    case ErrorKind::EmptyUniverse: return "EmptyUniverse";
    case ErrorKind::AllFeaturesDropped: return "AllFeaturesDropped";
    case ErrorKind::SeriesTooShort: return "SeriesTooShort";
    case ErrorKind::AllMissing: return "AllMissing";
    case ErrorKind::UnimputedMissing: return "UnimputedMissing";
    case ErrorKind::TooFewRows: return "TooFewRows";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DegenerateTargets: return "DegenerateTargets";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ScalerUnset: return "ScalerUnset";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::UniverseTooSmall: return "UniverseTooSmall";
    case ErrorKind::MissingSample: return "MissingSample";
    case ErrorKind::MissingRealized: return "MissingRealized";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

constexpr ErrorCategory error_category(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::SingularSystem:
        return ErrorCategory::Numerical;
    case ErrorKind::InvalidArgument:
        return ErrorCategory::Usage;
    default:
        return ErrorCategory::Data;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(error_name(kind)) + ": " + detail), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    std::string_view name() const noexcept { return error_name(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) {
    throw Error(kind, detail);
}

} // namespace fundsel
