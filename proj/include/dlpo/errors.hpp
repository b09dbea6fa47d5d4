#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dlpo {

// Invalid configuration value or unknown key. Carries the 1-based line when
// the value came from a config file (0 otherwise).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Bad argument to an operation (shape mismatch, step or class out of range).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tape built with an operand that does not fit (index range, shape).
class ConstructionError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Operation called in the wrong state (backward before forward, unscored
// trajectory handed to an estimator).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite value produced during evaluation. `node` is the tape node index
// when the failure happened inside the autograd engine.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, std::size_t node = kNoNode)
      : std::runtime_error(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

  static constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

 private:
  std::size_t node_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint file with bad magic, version or parameter count.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dlpo
