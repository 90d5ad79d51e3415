#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskident {

enum class ErrorKind {
  Shape,
  InvalidParams,
  DegenerateChain,
  GenerationFailure,
  UnknownFixture,
  Degeneracy,
  UnsupportedTask,
  InvalidTask,
  SizeLimit,
  NonAdjacent,
  Inconsistent,
  Precondition,
  DistinctnessFailure,
  SignResolution,
  ConcentrationFailure,
  Ambiguity,
  Conditioning,
  AngleTooLarge,
  InfeasiblePower,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. `kind()` distinguishes structural
/// problems (bad shapes, bad tasks) from numerical ones (degeneracy,
/// conditioning) so callers can react without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the simplex-rotation generator when the requested angle pushes
/// an entry outside [0,1]; carries the largest feasible angle found.
class AngleTooLargeError : public Error {
 public:
  AngleTooLargeError(const std::string& message, double max_feasible)
      : Error(ErrorKind::AngleTooLarge, message), max_feasible_(max_feasible) {}

  double max_feasible() const noexcept { return max_feasible_; }

 private:
  double max_feasible_;
};

}  // namespace maskident
