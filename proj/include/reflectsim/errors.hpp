#pragma once

#include <stdexcept>
#include <string>

namespace reflectsim {

// Bad configuration or arguments. CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing/unreadable/malformed files. CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Singular kernels, zero calibration, non-finite results. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace reflectsim
