#pragma once

#include <stdexcept>
#include <string>

namespace sgcp {

enum class Errc {
    // graph construction
    SelfLoop,
    NegativeWeight,
    IndexOutOfRange,
    DuplicateEdge,
    // numerics
    ConvergenceFailure,
    DegenerateSpectrum,
    NonFiniteLoss,
    // shapes and ranges
    DimensionMismatch,
    ShapeMismatch,
    CutoffOutOfRange,
    SlotOutOfRange,
    // sample availability
    EmptySample,
    TooFewSamples,
    TooFewNodes,
    EmptyScores,
    AllZeroWeights,
    EmptyCalibration,
    EmptyWindow,
    EmptyData,
    InsufficientHistory,
    // data ingestion
    TrendRankTooLarge,
    ParseError,
    NonMonotoneTimestamps,
    MissingValue,
    IoError,
    // configuration
    InvalidConfig,
};

/// Coarse grouping used for CLI exit codes.
enum class ErrorCategory { Config, Data, Numeric };

ErrorCategory category_of(Errc code) noexcept;
const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

private:
    Errc code_;
};

}  // namespace sgcp
