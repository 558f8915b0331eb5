#include "lastmile/error.hpp"

namespace lastmile {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedFile: return "MalformedFile";
    case ErrorCode::kEmptyExtent: return "EmptyExtent";
    case ErrorCode::kNoRoads: return "NoRoads";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kDuplicateNodes: return "DuplicateNodes";
    case ErrorCode::kBadIndex: return "BadIndex";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kUnreachable: return "Unreachable";
    case ErrorCode::kResolutionOutOfRange: return "ResolutionOutOfRange";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kMalformedAnnotation: return "MalformedAnnotation";
    case ErrorCode::kEndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::kHttpError: return "HttpError";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kExtractionFailed: return "ExtractionFailed";
    case ErrorCode::kMissingLabel: return "MissingLabel";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace lastmile
