#pragma once

#include <stdexcept>
#include <string>

namespace cycle {

/// Invalid argument passed to a numeric or model operation.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inconsistent experiment or protocol configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input data (CSV, JSON reports).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure reading or writing a file; the message names the path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cycle
