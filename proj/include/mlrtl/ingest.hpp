#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mlrtl/error.hpp"
#include "mlrtl/model.hpp"
#include "mlrtl/quantize.hpp"

namespace mlrtl {

inline constexpr std::string_view kSchemaVersion = "1.0";

struct Metadata {
  std::string source_framework = "mlrtl";
  std::string created;
  bool operator==(const Metadata&) const = default;
};

// Carries the validator output for documents that decode but violate a
// model invariant.
class StructuralError : public Error {
 public:
  StructuralError(ErrorCode code, std::vector<Violation> violations)
      : Error(code, describe(violations)), violations_(std::move(violations)) {}
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

// Interchange document kind: "bdt", "fcnn", "qbdt" or "qfcnn".
std::string document_kind(std::string_view bytes);

// Errors: MalformedJson, UnknownSchemaVersion, StructuralViolation,
// DepthCapExceeded. Every returned model passes validate().
Model parse_model(std::string_view bytes, Metadata* metadata = nullptr);

// Sorted keys, shortest round-trip floats, two-space indent.
// Throws Error(EmptyModel) for a model with no trees or layers.
std::string write_model(const Model& m, const Metadata& metadata = {});

QuantizedModel parse_quantized_model(std::string_view bytes);
std::string write_quantized_model(const QuantizedModel& qm, const Metadata& metadata = {});

// Quantization/pruning config file: format strings in the notation of
// parse_format(). Every key is optional except input_fmt.
struct ConfigFile {
  QuantizationConfig quantization;
  std::optional<PruningConfig> pruning;
};
ConfigFile parse_config(std::string_view bytes);
std::string write_config(const ConfigFile& cfg);

}  // namespace mlrtl
