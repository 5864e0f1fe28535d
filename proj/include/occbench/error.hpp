#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace occbench {

enum class ErrorCode {
    // data
    WrongMagic,
    TruncatedFile,
    LabelOutOfRange,
    EmptyResult,
    IoError,
    // tensors / autograd
    ShapeMismatch,
    NonScalarLoss,
    NonFinite,
    // models
    UnknownArchitecture,
    InvalidLabel,
    DivergedLoss,
    VersionMismatch,
    CorruptPayload,
    // occlusion / metrics
    CountTooLarge,
    EmptyInput,
    SingleClass,
    // harness
    MissingCheckpoint,
    InvalidConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::WrongMagic: return "WrongMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::UnknownArchitecture: return "UnknownArchitecture";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptPayload: return "CorruptPayload";
    case ErrorCode::CountTooLarge: return "CountTooLarge";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

} // namespace occbench
