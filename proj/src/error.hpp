#pragma once

#include <stdexcept>
#include <string>

namespace hyperrna {

enum class ErrorCode {
  kMalformedCoordinate,
  kEmptyStructure,
  kEmptyBackbone,
  kUnknownResidue,
  kInvalidAlphabet,
  kDegenerateGraph,
  kDegenerateTorsion,
  kShapeMismatch,
  kNotScalar,
  kSingularDegree,
  kStepOutOfRange,
  kNonPositiveTemperature,
  kLengthMismatch,
  kEmptyInput,
  kNonFiniteLoss,
  kTooFewPoints,
  kDegenerateConfiguration,
  kTooFewSamples,
  kDimensionMismatch,
  kIdMismatch,
  kParseError,
  kIoError,
  kInvalidArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hyperrna
