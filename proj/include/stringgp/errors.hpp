#pragma once

#include <stdexcept>
#include <string>

namespace stringgp {

// Bad user input: malformed config, schema mismatch, out of domain queries.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Singular boundary covariance that cannot be inverted.
class DegeneracyError : public std::runtime_error {
 public:
  DegeneracyError(const std::string& what, double time)
      : std::runtime_error(what + " (t = " + std::to_string(time) + ")"), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

// Conditioning failure or non-finite values during inference.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stringgp
