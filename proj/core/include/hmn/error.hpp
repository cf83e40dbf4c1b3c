#pragma once

#include <stdexcept>
#include <string>

namespace hmn {

// Base class for all failures raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor extents do not line up (matmul inner dims, concat widths, ...).
struct ShapeError : Error {
  using Error::Error;
};

// Domain violation on values: zero-norm vectors, empty inputs, NaN/Inf,
// non-finite costs, out-of-vocabulary ids.
struct ValueError : Error {
  using Error::Error;
};

// Bad configuration file or field.
struct ConfigError : Error {
  using Error::Error;
};

// On-disk format violation: wrong magic, unknown version, truncated file,
// unresolved tensor key.
struct FormatError : Error {
  using Error::Error;
};

// Filesystem failure: unreadable or unwritable path.
struct IoError : Error {
  using Error::Error;
};

}  // namespace hmn
