#pragma once

#include <stdexcept>
#include <string>

namespace decreg {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad shapes, unknown names, out-of-range settings.
struct ConfigError : Error {
    using Error::Error;
};

// API misuse: wrong argument to an otherwise valid object.
struct UsageError : Error {
    using Error::Error;
};

// Value outside the encodable / representable domain.
struct RangeError : Error {
    using Error::Error;
};

// Malformed token sequence.
struct CodecError : Error {
    using Error::Error;
};

// Bad or degenerate data (constant targets, unparseable files, NaN loss).
struct DataError : Error {
    using Error::Error;
};

}  // namespace decreg
