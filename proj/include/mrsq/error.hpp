#pragma once

#include <stdexcept>
#include <string>

namespace mrsq {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SerializationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SelectionError : public Error {
 public:
  using Error::Error;
};

/// Raised when a numerical routine hits a degenerate input (zero variance,
/// all-zero signal, singular system).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

/// An error raised inside one stage of a pipeline, tagged with the stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// Platform errors. Each maps to one HTTP status.

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Missing, malformed or expired credentials.
class AuthError : public Error {
 public:
  using Error::Error;
};

/// Authenticated, but the resource belongs to someone else.
class ForbiddenError : public Error {
 public:
  using Error::Error;
};

class QuotaError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrsq
