#pragma once

#include <stdexcept>
#include <string>

namespace rework {

// Validation errors are caller mistakes (bad input, bad parameters, missing
// upstream artifacts). Estimation errors come from the data not supporting
// the requested estimator.
enum class ErrorCode {
  schema,
  parse,
  validation,
  parameter,
  config,
  dependency,
  shape,
  feature,
  io,
  degenerate,
  singular,
  overlap,
  fold_degeneracy,
  estimand_undefined,
  extrapolation,
  unsupported,
  tuning,
  oracle_unavailable,
};

enum class ErrorCategory { validation, estimation };

constexpr ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema:
    case ErrorCode::parse:
    case ErrorCode::validation:
    case ErrorCode::parameter:
    case ErrorCode::config:
    case ErrorCode::dependency:
    case ErrorCode::shape:
    case ErrorCode::feature:
    case ErrorCode::io:
    case ErrorCode::unsupported:
    case ErrorCode::oracle_unavailable:
      return ErrorCategory::validation;
    default:
      return ErrorCategory::estimation;
  }
}

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace rework
