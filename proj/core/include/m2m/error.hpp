#pragma once

#include <stdexcept>
#include <string>

namespace m2m {

/// Categories used by the command-line tool to pick an exit status.
enum class ErrorKind {
  kInput,      // malformed or inconsistent input data
  kNumerical,  // an iterative solver failed to converge
  kLimit,      // an enumeration budget was exceeded
  kEmpty,      // an operation needs at least one association
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::kInput, what) {}
};

class EmptyGraphError : public Error {
 public:
  explicit EmptyGraphError(const std::string& what) : Error(ErrorKind::kEmpty, what) {}
};

class LimitError : public Error {
 public:
  explicit LimitError(const std::string& what) : Error(ErrorKind::kLimit, what) {}
};

/// Raised when the marginal assignment does not converge; carries the final
/// constraint violation so callers can decide whether to accept it anyway.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double violation)
      : Error(ErrorKind::kNumerical, what), violation_(violation) {}

  double violation() const noexcept { return violation_; }

 private:
  double violation_;
};

}  // namespace m2m
