#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsvit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration: unknown mode, malformed config file, missing weight.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or file-format failure. The message names the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An evaluation had nothing to measure, e.g. no class with a positive label.
class EmptyEvaluationError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : Error("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// A finite-difference probe hit a non-finite value.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::size_t coordinate, const std::string& what)
      : Error("non-finite value at coordinate " + std::to_string(coordinate) + ": " + what),
        coordinate_(coordinate) {}
  std::size_t coordinate() const { return coordinate_; }

 private:
  std::size_t coordinate_;
};

}  // namespace dsvit
