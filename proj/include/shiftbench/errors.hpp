#pragma once

#include <stdexcept>
#include <string>

namespace shiftbench {

// Each family maps onto one CLI exit code (see tools/shiftbench.cpp).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shiftbench
