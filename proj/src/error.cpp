#include "error.hpp"

namespace hyperrna {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedCoordinate: return "MalformedCoordinate";
    case ErrorCode::kEmptyStructure: return "EmptyStructure";
    case ErrorCode::kEmptyBackbone: return "EmptyBackbone";
    case ErrorCode::kUnknownResidue: return "UnknownResidue";
    case ErrorCode::kInvalidAlphabet: return "InvalidAlphabet";
    case ErrorCode::kDegenerateGraph: return "DegenerateGraph";
    case ErrorCode::kDegenerateTorsion: return "DegenerateTorsion";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNotScalar: return "NotScalar";
    case ErrorCode::kSingularDegree: return "SingularDegree";
    case ErrorCode::kStepOutOfRange: return "StepOutOfRange";
    case ErrorCode::kNonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kIdMismatch: return "IdMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace hyperrna
