#pragma once

#include <stdexcept>
#include <string>

namespace tgfc {

// Shape/size disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration value or unknown identifier.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite or otherwise unusable numeric input.
struct DataError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Side information (mask, quant params, layout) disagrees with itself.
struct ConsistencyError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct CapacityError : std::length_error {
  using std::length_error::length_error;
};

struct MetricError : std::domain_error {
  using std::domain_error::domain_error;
};

// Sweep definition cannot produce a curve (too few points).
struct SweepError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

// Bitstream parsing failures. Subclasses are distinct so callers can tell
// a damaged stream from an unsupported one.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BadMagicError : FormatError {
  using FormatError::FormatError;
};

struct TruncatedStreamError : FormatError {
  using FormatError::FormatError;
};

struct UnknownCodecError : FormatError {
  UnknownCodecError(int id)
      : FormatError("unknown codec id " + std::to_string(id)), codec_id(id) {}
  int codec_id;
};

}  // namespace tgfc
