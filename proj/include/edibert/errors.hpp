#pragma once

#include <stdexcept>
#include <string>

namespace edibert {

// File/data format problems (bad magic, wrong size, unparsable). CLI exit 2.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite results where finiteness is part of the contract. CLI exit 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace edibert
