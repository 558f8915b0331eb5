#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lastmile {

enum class ErrorCode {
  kMalformedFile,
  kEmptyExtent,
  kNoRoads,
  kTooFewPoints,
  kInfeasible,
  kDuplicateNodes,
  kBadIndex,
  kTooLarge,
  kUnreachable,
  kResolutionOutOfRange,
  kDegenerateGeometry,
  kMalformedAnnotation,
  kEndpointUnreachable,
  kHttpError,
  kTimeout,
  kExtractionFailed,
  kMissingLabel,
  kIoError,
  kConfigError,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure the library raises carries one of the codes above so callers
// (the CLI in particular) can map them to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix, for rewrapping with more context.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace lastmile
