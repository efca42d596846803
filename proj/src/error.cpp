#include "mlrtl/error.hpp"

namespace mlrtl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidFormat: return "InvalidFormat";
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::UnknownSchemaVersion: return "UnknownSchemaVersion";
    case ErrorCode::StructuralViolation: return "StructuralViolation";
    case ErrorCode::DepthCapExceeded: return "DepthCapExceeded";
    case ErrorCode::EmptyModel: return "EmptyModel";
    case ErrorCode::EmptyEnsemble: return "EmptyEnsemble";
    case ErrorCode::WidthTooSmall: return "WidthTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnverifiedNetlist: return "UnverifiedNetlist";
    case ErrorCode::UncoveredCellKind: return "UncoveredCellKind";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace mlrtl
