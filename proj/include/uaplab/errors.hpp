#pragma once

#include <stdexcept>
#include <string>

namespace uaplab {

// Error taxonomy used across the library. Every failure mode maps onto one
// of these so callers (and tests) can tell a bad config from a bad file.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration (zero images, empty vocabulary, bad batch size...).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed payload data (out-of-vocabulary word, missing ground truth...).
struct DataError : Error {
  using Error::Error;
};

// Corrupt or incompatible file on disk (bad magic, truncation, version mismatch).
struct FormatError : Error {
  using Error::Error;
};

// A call that violates an API precondition (shape mismatch and friends).
struct ContractError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Pretraining failed to reach its configured quality floor.
struct TrainingDivergenceError : Error {
  using Error::Error;
};

// Filesystem-level failure (unwritable path, short write).
struct IoError : Error {
  using Error::Error;
};

} // namespace uaplab
