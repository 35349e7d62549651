#pragma once

#include <stdexcept>
#include <string>

namespace aligntf {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape/dimension disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Operation invoked in the wrong lifecycle state (e.g. double backward).
class StateError : public Error {
public:
    using Error::Error;
};

// Invalid configuration or hyperparameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or missing input data (files, ids, samples).
class DataError : public Error {
public:
    using Error::Error;
};

// Attention mask leaves a query row with no admissible key.
class MaskError : public Error {
public:
    using Error::Error;
};

// Token sequence exceeds a configured length.
class SequenceError : public Error {
public:
    using Error::Error;
};

}  // namespace aligntf
