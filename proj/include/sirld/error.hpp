#pragma once

#include <stdexcept>
#include <string>

namespace sirld {

/// Malformed input: bad parameters, inconsistent sizes, unparsable files.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine declined to produce a value (non-admissible path, singular matrix, ...).
class NumericRefusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    throw InvalidInput(message);
  }
}

}  // namespace sirld
