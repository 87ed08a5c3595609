#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fusemb {

enum class ErrorCode {
  MissingModality,
  DimensionMismatch,
  DegenerateVector,
  DuplicateId,
  ParseError,
  EmptyStore,
  UnknownId,
  RankError,
  DegenerateData,
  CardinalityError,
  UndefinedMetric,
  InvalidInput,
  StateError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// All domain failures raised by the library. Anything else escaping the core
// (bad_alloc, logic bugs) is treated as an internal error by the C layer.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace fusemb
