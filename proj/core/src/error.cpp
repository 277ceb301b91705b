#include "hykey/error.hpp"

namespace hykey {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kUnsupportedInput: return "unsupported-input";
    case ErrorCode::kFormatBadMagic: return "format/bad-magic";
    case ErrorCode::kFormatBadVersion: return "format/bad-version";
    case ErrorCode::kFormatHeader: return "format/header";
    case ErrorCode::kFormatPayloadLength: return "format/payload-length";
    case ErrorCode::kFormatWavelengths: return "format/wavelengths";
    case ErrorCode::kFormatValueRange: return "format/value-range";
    case ErrorCode::kFormatMosaicDims: return "format/mosaic-dims";
    case ErrorCode::kPointAtInfinity: return "point-at-infinity";
    case ErrorCode::kDegenerateMotion: return "degenerate-motion";
    case ErrorCode::kEpipoleDegenerate: return "epipole-degenerate";
    case ErrorCode::kCheiralityAmbiguity: return "cheirality-ambiguity";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kCheckpointMismatch: return "checkpoint-mismatch";
    case ErrorCode::kEmptyDataset: return "empty-dataset";
    case ErrorCode::kRefused: return "refused";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace hykey
