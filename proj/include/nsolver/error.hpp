#pragma once

#include <stdexcept>

namespace nsolver {

/// Operand shapes are inconsistent with an operation's contract.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An operation produced a NaN or infinity.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A file on disk does not match its declared layout or checksum.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nsolver
