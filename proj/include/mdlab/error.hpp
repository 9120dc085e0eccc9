#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mdlab {

// Base for every error raised by the library. Checkers never throw on a
// violated inequality; they return a report instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument: dimension mismatch, out-of-range parameter, non-finite input.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Valid request that this implementation deliberately does not support
// (e.g. ball constraints under a non-Euclidean mirror map).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Iterative routine hit its cap before reaching tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

// Two independent evaluation routes disagreed beyond tolerance.
class CrossCheckError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration. `where` names the offending field or line.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::string where)
      : Error(what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace mdlab
