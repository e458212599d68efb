#pragma once

#include <stdexcept>
#include <string>

namespace lcph {

/// Invalid data, configuration or arguments supplied by the caller.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A solver could not produce a valid answer (singular system, separation,
/// underflow). Carries the iteration at which it happened, -1 if unknown.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, int iteration = -1)
      : std::runtime_error(what), iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

/// Complete or quasi-complete separation in the membership regression.
class SeparationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace lcph
