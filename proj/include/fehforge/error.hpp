#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fehforge {

enum class ErrorCode {
  // catalog
  MissingColumn,
  ParseError,
  EmptyCatalog,
  DegenerateSplit,
  OrphanStar,
  DuplicateEpoch,
  // preprocess
  NonFinitePhase,
  InsufficientPoints,
  SingularFit,
  // weighting
  DegenerateDistribution,
  ZeroDensity,
  // neuralnet
  ShapeMismatch,
  DegenerateBatch,
  InvalidRate,
  NonPositiveWeightSum,
  // evaluate
  ZeroVariance,
  TooFewSamples,
  DivergedLoss,
  // io / cli
  MissingInput,
  FormatError,
  IntegrityError,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Process exit code for a failure of the given family. 0 is reserved for success,
/// 2 for command-line usage errors.
int exit_code(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace fehforge
