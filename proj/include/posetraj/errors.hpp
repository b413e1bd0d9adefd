#ifndef POSETRAJ_ERRORS_HPP
#define POSETRAJ_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace posetraj {

/// Invalid configuration or argument. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent data (files, scenes, dims). Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training or inference. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace posetraj

#endif  // POSETRAJ_ERRORS_HPP
