#include "fehforge/error.hpp"

namespace fehforge {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyCatalog: return "EmptyCatalog";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::OrphanStar: return "OrphanStar";
    case ErrorCode::DuplicateEpoch: return "DuplicateEpoch";
    case ErrorCode::NonFinitePhase: return "NonFinitePhase";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::SingularFit: return "SingularFit";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::ZeroDensity: return "ZeroDensity";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::NonPositiveWeightSum: return "NonPositiveWeightSum";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IntegrityError: return "IntegrityError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingInput: return 3;
    case ErrorCode::MissingColumn:
    case ErrorCode::ParseError:
    case ErrorCode::EmptyCatalog:
    case ErrorCode::DegenerateSplit:
    case ErrorCode::OrphanStar:
    case ErrorCode::DuplicateEpoch: return 4;
    case ErrorCode::NonFinitePhase:
    case ErrorCode::InsufficientPoints:
    case ErrorCode::SingularFit:
    case ErrorCode::DegenerateDistribution:
    case ErrorCode::ZeroDensity: return 5;
    case ErrorCode::ShapeMismatch:
    case ErrorCode::DegenerateBatch:
    case ErrorCode::InvalidRate:
    case ErrorCode::NonPositiveWeightSum:
    case ErrorCode::ZeroVariance:
    case ErrorCode::TooFewSamples:
    case ErrorCode::DivergedLoss: return 6;
    case ErrorCode::FormatError:
    case ErrorCode::IntegrityError: return 7;
    case ErrorCode::InvalidConfig: return 8;
  }
  return 1;
}

}  // namespace fehforge
