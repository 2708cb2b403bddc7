#pragma once

#include <stdexcept>
#include <string>

namespace gmf {

/// Thrown when an operation would materialize a table (or enumerate a state
/// space) larger than the caller-supplied cap.
class capacity_error : public std::runtime_error {
 public:
  explicit capacity_error(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a NaN shows up in a probability computation.  NaN is never a
/// legal table value; -inf (zero probability) is.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gmf
