#pragma once

#include <stdexcept>
#include <string>

namespace deepcast {

// Base class for everything thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension violations.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Input files, CSV rows, malformed or insufficient data.
class DataError : public Error {
public:
    using Error::Error;
};

// Run-configuration parse or validation problems (messages carry line numbers).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Checkpoint format violations: bad magic, version, truncation, shape table.
class CheckpointError : public Error {
public:
    using Error::Error;
};

// Training failures (non-finite losses or gradients).
class TrainError : public Error {
public:
    using Error::Error;
};

// Gradient-oracle failures (non-finite probe evaluations, bad step).
class OracleError : public Error {
public:
    using Error::Error;
};

// Evaluation requests incompatible with a checkpoint's window/horizon.
class EvalError : public Error {
public:
    using Error::Error;
};

}  // namespace deepcast
