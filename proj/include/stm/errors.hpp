#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stm {

// Out-of-range pixel index, level or array position.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Argument outside the mathematical domain of an operation (zero vector,
// pooling below level 0, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Caller broke a shape/level/channel contract.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Geometry that cannot be processed (coincident vertices, coplanar hull input).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values in weights, gradients or losses.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset, std::size_t line = 0)
      : std::runtime_error(format(what, offset, line)), offset_(offset), line_(line) {}

  std::size_t offset() const { return offset_; }
  std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& what, std::size_t offset, std::size_t line) {
    std::string s = what + " (byte " + std::to_string(offset);
    if (line > 0) s += ", line " + std::to_string(line);
    return s + ")";
  }
  std::size_t offset_;
  std::size_t line_;
};

}  // namespace stm
