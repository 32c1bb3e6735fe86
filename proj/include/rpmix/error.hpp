#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rpmix {

enum class ErrorKind {
  DimensionMismatch,
  IllConditioned,
  NotPositiveDefinite,
  NotSymmetric,
  TooFewComponents,
  BadDims,
  DegenerateDraw,
  NotEnoughData,
  TooManyComponents,
  BadSeparation,
  BadSpec,
  DuplicatePoints,
  EmptyComponent,
  ShapeMismatch,
  ParseError,
  InconsistentWidth,
  ClassTooSmall,
  ConfigError,
  MissingData,
  IoError,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (tests, the
// experiment harness) can branch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace rpmix
