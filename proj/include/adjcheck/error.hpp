#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adjcheck {

enum class ErrorCode {
    CycleDetected,
    DuplicateEdge,
    DuplicateNode,
    UnknownNode,
    OverlappingSets,
    XYInZ,
    CapExceeded,
    NotDescendant,
    EmptyInput,
    SingularSystem,
    UnsupportedFamily,
    NoEligiblePair,
    InvalidArgument,
    RankDeficientDesign,
    InsufficientSamples,
    DegenerateResiduals,
    KTooSmall,
    RankExceedsDim,
    NearZeroLeadingEigenvalue,
    OutOfRange,
    ParseError,
    ColumnMismatch,
    ConfigError,
    FileNotFound,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::DuplicateEdge: return "DuplicateEdge";
        case ErrorCode::DuplicateNode: return "DuplicateNode";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::OverlappingSets: return "OverlappingSets";
        case ErrorCode::XYInZ: return "XYInZ";
        case ErrorCode::CapExceeded: return "CapExceeded";
        case ErrorCode::NotDescendant: return "NotDescendant";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::UnsupportedFamily: return "UnsupportedFamily";
        case ErrorCode::NoEligiblePair: return "NoEligiblePair";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::DegenerateResiduals: return "DegenerateResiduals";
        case ErrorCode::KTooSmall: return "KTooSmall";
        case ErrorCode::RankExceedsDim: return "RankExceedsDim";
        case ErrorCode::NearZeroLeadingEigenvalue: return "NearZeroLeadingEigenvalue";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::ColumnMismatch: return "ColumnMismatch";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::FileNotFound: return "FileNotFound";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status or an
/// untestable reason without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace adjcheck
