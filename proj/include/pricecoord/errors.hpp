#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pricecoord {

/// Raised when a constraint set is provably empty. Carries the label of the
/// row that the diagnostic blames.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(std::string row_label, const std::string& message)
      : std::runtime_error(message), row_label_(std::move(row_label)) {}

  const std::string& row_label() const noexcept { return row_label_; }

 private:
  std::string row_label_;
};

/// The reduced KKT saddle matrix could not be factorized reliably.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver gave up (iteration cap, stale certificate, non-finite values).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, unknown keys, out-of-range values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pricecoord
