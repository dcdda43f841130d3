#pragma once

#include <stdexcept>
#include <string>

namespace vqc {

/// Invalid configuration or shapes that cannot be reconciled.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse: calls in the wrong order or with mismatched operands.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A training loss became NaN or infinite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vqc
