#pragma once

#include <stdexcept>
#include <string>

namespace stitchlab {

// Loss or gradient left the finite range, or an estimator degenerated.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration or arguments (unknown keys, out-of-range values).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Missing or malformed input/output files.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stitchlab
