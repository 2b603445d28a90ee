#pragma once

#include <stdexcept>
#include <string>

namespace fwspde {

/// Failure categories; each maps onto one CLI exit code.
enum class ErrorKind { Validation, Io, Numerical, Budget };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string code, const std::string& what)
      : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable tag, e.g. "RangeError" or "PicardDiverged".
  const std::string& code() const noexcept { return code_; }

  int exit_code() const noexcept {
    switch (kind_) {
    case ErrorKind::Validation: return 2;
    case ErrorKind::Io: return 3;
    case ErrorKind::Numerical: return 4;
    case ErrorKind::Budget: return 5;
    }
    return 1;
  }

private:
  ErrorKind kind_;
  std::string code_;
};

/// Bad input. `field` is a dotted path into the config (may be empty for API misuse).
class ValidationError : public Error {
public:
  ValidationError(std::string code, std::string field, const std::string& msg)
      : Error(ErrorKind::Validation, std::move(code),
              field.empty() ? msg : field + ": " + msg),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

inline ValidationError range_error(std::string field, const std::string& msg) {
  return ValidationError("RangeError", std::move(field), msg);
}
inline ValidationError schema_error(std::string field, const std::string& msg) {
  return ValidationError("SchemaError", std::move(field), msg);
}

class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error(ErrorKind::Io, "IoError", msg) {}
};

/// PicardDiverged, BlowUp, NotConverged, InsufficientSamples.
class NumericalError : public Error {
public:
  NumericalError(std::string code, const std::string& msg)
      : Error(ErrorKind::Numerical, std::move(code), msg) {}
};

class BudgetError : public Error {
public:
  explicit BudgetError(const std::string& msg) : Error(ErrorKind::Budget, "BudgetError", msg) {}
};

}  // namespace fwspde
