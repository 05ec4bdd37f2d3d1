#pragma once

#include <limits>
#include <stdexcept>

namespace cbi {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Invalid parameters or arguments outside an operation's domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A numerical procedure failed to reach its target (step collapse, no bracket, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cbi
