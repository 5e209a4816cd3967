#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nhk {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifierError : public Error {
 public:
  explicit UnknownIdentifierError(std::string name)
      : Error("unknown identifier '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class UnboundVariableError : public Error {
 public:
  explicit UnboundVariableError(std::string name)
      : Error("unbound variable '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// Division by zero, log of a nonpositive number, a pole, or any non-finite
/// intermediate value.
class SingularityError : public Error {
 public:
  using Error::Error;
};

class DegenerateMetricError : public Error {
 public:
  using Error::Error;
};

class MultiplierVanishesError : public Error {
 public:
  using Error::Error;
};

/// Malformed system definition, wrong kind for an operation, bad arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IncompatibleError : public Error {
 public:
  using Error::Error;
};

class AmbiguousAnsatzError : public Error {
 public:
  using Error::Error;
};

class ReductionError : public Error {
 public:
  using Error::Error;
};

class NotConditionallyVariationalError : public Error {
 public:
  using Error::Error;
};

}  // namespace nhk
