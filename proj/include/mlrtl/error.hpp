#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mlrtl {

// Machine-readable failure classes. The CLI prints these as `ERROR <code>:`.
enum class ErrorCode {
  InvalidFormat,
  MalformedJson,
  UnknownSchemaVersion,
  StructuralViolation,
  DepthCapExceeded,
  EmptyModel,
  EmptyEnsemble,
  WidthTooSmall,
  InvalidConfig,
  InvalidArgument,
  UnverifiedNetlist,
  UncoveredCellKind,
  FileNotFound,
  ParseError,
  Io,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mlrtl
