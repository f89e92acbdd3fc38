#pragma once

#include <stdexcept>
#include <string>

namespace batchlab {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, shape mismatch, or precondition violation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A path pattern resolved to no entities.
class EmptyViewError : public Error {
 public:
  explicit EmptyViewError(const std::string& pattern)
      : Error("no entities match pattern '" + pattern + "'"), pattern_(pattern) {}
  const std::string& pattern() const { return pattern_; }

 private:
  std::string pattern_;
};

/// Non-finite simulation state after an integration step.
class DivergenceError : public Error {
 public:
  DivergenceError(int env, const std::string& what)
      : Error("simulation diverged in env " + std::to_string(env) + ": " + what), env_(env) {}
  int env() const { return env_; }

 private:
  int env_;
};

/// Malformed configuration file or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Parse failure with a 1-based line number.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace batchlab
