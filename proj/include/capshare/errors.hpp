#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace capshare {

enum class ErrorKind {
  DimensionError,
  SingularDesign,
  SingularSystem,
  EmptyWindow,
  NoOverlap,
  FrequencyError,
  NonStationary,
  SearchFailed,
  DegenerateFit,
  InvalidInput,
  InvalidBlock,
  InsufficientData,
  NumericalError,
  ParameterError,
  ParseError,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Library-wide exception. `kind` is stable and machine readable; `line` is set
/// for parse errors so callers can point at the offending input row.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::optional<long> line = std::nullopt)
      : std::runtime_error(message), kind_(kind), line_(line) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<long> line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::optional<long> line_;
};

}  // namespace capshare
