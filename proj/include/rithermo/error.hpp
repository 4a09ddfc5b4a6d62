#pragma once

#include <stdexcept>
#include <string>

namespace rithermo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed composite layout, unknown factor id, or dimension mismatch.
class LayoutError : public Error {
public:
    using Error::Error;
};

/// Genuine numerical failure: positivity violated beyond the floor, overflow,
/// rank deficiency where a logarithm is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Scenario or schedule violating a structural rule.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation called outside its domain (e.g. a boundary-only quantity at an
/// interior time, or a measurement that is not normalized).
class PreconditionError : public Error {
public:
    using Error::Error;
};

class BranchCapExceeded : public Error {
public:
    using Error::Error;
};

} // namespace rithermo
