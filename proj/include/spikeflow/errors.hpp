#pragma once

#include <stdexcept>
#include <string>

namespace spikeflow {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mismatched tensor shapes / axes.
struct DimensionError : Error {
  using Error::Error;
};

// A documented precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Non-finite value produced while strict numerics are enabled.
struct NumericError : Error {
  using Error::Error;
};

// A file did not match its expected binary layout (bad magic, truncation).
struct FormatError : Error {
  using Error::Error;
};

// A file parsed but its contents are invalid (e.g. unsorted timestamps).
struct DataError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing file, unwritable directory).
struct IoError : Error {
  using Error::Error;
};

// Checkpoint cannot be used (digest mismatch, unknown version).
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace spikeflow
