#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fre {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kIo,
  kMalformedHeader,
  kDtypeMismatch,
  kTruncated,
  kDegenerateData,
  kNumerical,
  kVersionMismatch,
  kCorrupt,
  kChecksum,
  kMissingLayer,
  kMissingMask,
  kEmptySplit,
  kUnsupportedFile,
  kDecode,
  kSingleClass,
  kBackbone,
  kConfig,
};

std::string_view error_code_name(ErrorCode code);

// Every failure in the library surfaces as this exception; the code lets
// callers (and the CLI) tell failure classes apart without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fre
