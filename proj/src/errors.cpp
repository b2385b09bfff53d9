#include "sentinel/errors.hpp"

namespace sentinel {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SourceUnavailable: return "SourceUnavailable";
    case ErrorCode::DecodeFailure: return "DecodeFailure";
    case ErrorCode::StreamEnded: return "StreamEnded";
    case ErrorCode::RoiOutOfBounds: return "RoiOutOfBounds";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ModelLoadFailure: return "ModelLoadFailure";
    case ErrorCode::ModelRuntimeFailure: return "ModelRuntimeFailure";
    case ErrorCode::SignatureMismatch: return "SignatureMismatch";
    case ErrorCode::GridLargerThanImage: return "GridLargerThanImage";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyPatch: return "EmptyPatch";
    case ErrorCode::MissingVerdict: return "MissingVerdict";
    case ErrorCode::RectOutOfBounds: return "RectOutOfBounds";
    case ErrorCode::StoreUnavailable: return "StoreUnavailable";
    case ErrorCode::WriteFailure: return "WriteFailure";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyCounts: return "EmptyCounts";
    case ErrorCode::SingleClassInput: return "SingleClassInput";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

namespace {
std::string describe(const std::vector<FieldError>& fields) {
  std::string out;
  for (const auto& f : fields) {
    if (!out.empty()) out += "; ";
    out += f.field + ": " + f.reason;
  }
  return out;
}
}  // namespace

ConfigError::ConfigError(std::vector<FieldError> fields)
    : Error(ErrorCode::InvalidConfig, describe(fields)), fields_(std::move(fields)) {}

}  // namespace sentinel
