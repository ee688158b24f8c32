#include "sgcp/error.hpp"

namespace sgcp {

ErrorCategory category_of(Errc code) noexcept {
    switch (code) {
        case Errc::ConvergenceFailure:
        case Errc::DegenerateSpectrum:
        case Errc::NonFiniteLoss:
            return ErrorCategory::Numeric;
        case Errc::InvalidConfig:
        case Errc::TrendRankTooLarge:
        case Errc::CutoffOutOfRange:
        case Errc::SlotOutOfRange:
            return ErrorCategory::Config;
        default:
            return ErrorCategory::Data;
    }
}

const char* to_string(Errc code) noexcept {
    switch (code) {
        case Errc::SelfLoop: return "SelfLoop";
        case Errc::NegativeWeight: return "NegativeWeight";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::DuplicateEdge: return "DuplicateEdge";
        case Errc::ConvergenceFailure: return "ConvergenceFailure";
        case Errc::DegenerateSpectrum: return "DegenerateSpectrum";
        case Errc::NonFiniteLoss: return "NonFiniteLoss";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::CutoffOutOfRange: return "CutoffOutOfRange";
        case Errc::SlotOutOfRange: return "SlotOutOfRange";
        case Errc::EmptySample: return "EmptySample";
        case Errc::TooFewSamples: return "TooFewSamples";
        case Errc::TooFewNodes: return "TooFewNodes";
        case Errc::EmptyScores: return "EmptyScores";
        case Errc::AllZeroWeights: return "AllZeroWeights";
        case Errc::EmptyCalibration: return "EmptyCalibration";
        case Errc::EmptyWindow: return "EmptyWindow";
        case Errc::EmptyData: return "EmptyData";
        case Errc::InsufficientHistory: return "InsufficientHistory";
        case Errc::TrendRankTooLarge: return "TrendRankTooLarge";
        case Errc::ParseError: return "ParseError";
        case Errc::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
        case Errc::MissingValue: return "MissingValue";
        case Errc::IoError: return "IoError";
        case Errc::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

}  // namespace sgcp
