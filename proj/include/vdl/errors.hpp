#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vdl {

/// Malformed input file. `line()` is 1-based and counts the header row.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Data is well formed but inconsistent (duplicate ids, unknown ids, ...).
class IntegrityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A matrix handed to an operation breaks its documented contract.
class ContractViolation : public std::logic_error {
  using std::logic_error::logic_error;
};

/// Non-finite values appeared inside an iterative solver.
class NumericalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The label source answered with the wrong arity or a value outside {-1,+1}.
class ProtocolError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An operation was requested in a state that cannot serve it.
class InvalidState : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vdl
