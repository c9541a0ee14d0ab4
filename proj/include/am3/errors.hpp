#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace am3 {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or lengths that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid settings: out-of-range probabilities, too few categories, etc.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse such as calling backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed input text. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input whose content is inconsistent (missing files, bad rows).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when the training loss stops being finite.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t iteration, double learning_rate)
      : Error("non-finite loss at iteration " + std::to_string(iteration) +
              " (learning rate " + std::to_string(learning_rate) + ")"),
        iteration_(iteration),
        learning_rate_(learning_rate) {}
  std::size_t iteration() const noexcept { return iteration_; }
  double learning_rate() const noexcept { return learning_rate_; }

 private:
  std::size_t iteration_;
  double learning_rate_;
};

}  // namespace am3
