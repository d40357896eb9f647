#pragma once

#include <stdexcept>
#include <string>

namespace jsae {

// Invalid configuration: dimension mismatches, bad config values, empty inputs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller passed an argument outside the documented domain (e.g. action id).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf in a loss, gradient or density. Training aborts on this.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Learned embeddings map two distinct actions or states to the same point.
class AssumptionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jsae
