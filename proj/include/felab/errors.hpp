#pragma once

#include <stdexcept>
#include <string>

namespace felab {

// Error taxonomy maps onto the CLI exit-code contract:
//   ConfigError -> 2 (bad flags, shape/domain/format mismatches)
//   IoError     -> 3 (unreadable/unwritable/truncated files)
//   NumericError-> 4 (non-finite losses and friends)
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ShapeError : ConfigError {
    using ConfigError::ConfigError;
};

struct FormatError : ConfigError {
    using ConfigError::ConfigError;
};

struct IoError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

}  // namespace felab
