#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Observation has probability zero under the current dynamics. `step` is the
// index of the transition inside the history or window being filtered.
class ZeroObservationProbability : public Error {
 public:
  explicit ZeroObservationProbability(std::size_t step)
      : Error("observation has zero probability at step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class MaxIterExceeded : public Error {
 public:
  MaxIterExceeded(const std::string& what, int iterations, double residual)
      : Error(what + ": no convergence after " + std::to_string(iterations) +
              " iterations (residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class NonFiniteObjective : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Thrown by components that cannot produce a value at all, e.g. a
// contraction coefficient with no admissible vertex pair.
class Undefined : public Error {
 public:
  using Error::Error;
};

}  // namespace spe
