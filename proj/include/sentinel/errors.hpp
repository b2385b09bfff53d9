#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sentinel {

enum class ErrorCode {
  InvalidArgument,
  SourceUnavailable,
  DecodeFailure,
  StreamEnded,
  RoiOutOfBounds,
  DimensionMismatch,
  ModelLoadFailure,
  ModelRuntimeFailure,
  SignatureMismatch,
  GridLargerThanImage,
  IndexOutOfRange,
  EmptyPatch,
  MissingVerdict,
  RectOutOfBounds,
  StoreUnavailable,
  WriteFailure,
  MissingGroundTruth,
  EmptyClass,
  IoFailure,
  EmptyCounts,
  SingleClassInput,
  InvalidConfig,
  ParseError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct FieldError {
  std::string field;
  std::string reason;
};

// InvalidConfig with one entry per offending field.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<FieldError> fields);

  const std::vector<FieldError>& fields() const noexcept { return fields_; }

 private:
  std::vector<FieldError> fields_;
};

}  // namespace sentinel
