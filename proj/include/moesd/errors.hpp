#pragma once

#include <stdexcept>
#include <string>

namespace moesd {

// Malformed input: config fields, CSV rows, command-line values.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Well-formed input that falls outside the domain of a model formula.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw DomainError(message);
}

}  // namespace detail
}  // namespace moesd
