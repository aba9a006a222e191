#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mudich {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset(offset) {}
  std::size_t offset;
};

// evaluation left the real domain (log of non-positive, division by zero, ...)
struct DomainError : Error {
  using Error::Error;
};

// violated precondition on user-supplied constants
struct PreconditionError : Error {
  using Error::Error;
};

struct GateError : Error {
  GateError(const std::string& gate, const std::string& detail)
      : Error("gate '" + gate + "' failed: " + detail), gate(gate) {}
  std::string gate;
};

struct IntegrationError : Error {
  IntegrationError(const std::string& what, double from, double to, double at)
      : Error(what + " while integrating [" + std::to_string(from) + ", " + std::to_string(to) +
              "] near t=" + std::to_string(at)),
        from(from), to(to), at(at) {}
  double from, to, at;
};

struct ConvergenceError : Error {
  using Error::Error;
};

struct NotApplicable : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace mudich
