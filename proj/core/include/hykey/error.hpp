#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hykey {

enum class ErrorCode {
  kDimension = 1,
  kUsage,
  kNonFinite,
  kUnsupportedInput,
  kFormatBadMagic,
  kFormatBadVersion,
  kFormatHeader,
  kFormatPayloadLength,
  kFormatWavelengths,
  kFormatValueRange,
  kFormatMosaicDims,
  kPointAtInfinity,
  kDegenerateMotion,
  kEpipoleDegenerate,
  kCheiralityAmbiguity,
  kConfig,
  kIo,
  kCheckpointMismatch,
  kEmptyDataset,
  kRefused,
};

std::string_view error_code_name(ErrorCode code);

// Every library failure surfaces as an Error carrying a stable code; the CLI
// maps codes to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace hykey
