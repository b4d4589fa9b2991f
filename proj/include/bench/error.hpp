#pragma once

#include <stdexcept>
#include <string>

namespace bench {

/// Failure classes. Each maps onto one CLI exit code.
enum class ErrorKind {
  generic = 1,
  usage = 2,
  validation = 3,
  transport = 4,
  policy = 5,
  over_budget = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

/// YAML or grammar failure with a source position (1-based).
struct ParseError : ValidationError {
  ParseError(const std::string& what, int line, int column)
      : ValidationError(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
        line(line),
        column(column) {}
  int line;
  int column;
};

struct UndefinedVariable : ValidationError {
  explicit UndefinedVariable(std::string p) : ValidationError("undefined variable '" + p + "'"), path(std::move(p)) {}
  std::string path;
};

struct NotAScalar : ValidationError {
  explicit NotAScalar(std::string p) : ValidationError("variable '" + p + "' is not a scalar"), path(std::move(p)) {}
  std::string path;
};

struct CycleError : ValidationError {
  using ValidationError::ValidationError;
};

struct TransportError : Error {
  explicit TransportError(const std::string& what) : Error(ErrorKind::transport, what) {}
};

/// Submission command ran but reported failure.
struct SubmitError : Error {
  SubmitError(const std::string& what, std::string err) : Error(ErrorKind::transport, what), stderr_text(std::move(err)) {}
  std::string stderr_text;
};

struct PolicyError : Error {
  explicit PolicyError(const std::string& what) : Error(ErrorKind::policy, what) {}
};

struct OverBudget : Error {
  explicit OverBudget(const std::string& what) : Error(ErrorKind::over_budget, what) {}
};

}  // namespace bench
