#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace condiff {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A function returned NaN/Inf where a finite value was required.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

// An iterative scheme exhausted its budget before meeting its tolerance.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& msg, double value, double error_estimate)
        : Error(msg), value(value), error_estimate(error_estimate) {}
    double value;
    double error_estimate;
};

// An improper integral was classified as divergent by the doubling heuristic.
class DivergentError : public Error {
public:
    using Error::Error;
};

class DivisionByZeroError : public Error {
public:
    using Error::Error;
};

// Malformed expression source. `offset` is the 1-based byte offset of the
// first offending character (one past the end for truncated input).
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& msg, std::size_t offset)
        : Error(msg + " at offset " + std::to_string(offset)), offset(offset) {}
    std::size_t offset;
};

class UnknownIdentifierError : public SyntaxError {
public:
    UnknownIdentifierError(const std::string& name, std::size_t offset)
        : SyntaxError("unknown identifier '" + name + "'", offset), name(name) {}
    std::string name;
};

// The diffusion violates the standing assumptions (transience to the left
// boundary); the scale normalization s(l+) = 0 does not exist.
class AssumptionViolatedError : public Error {
public:
    using Error::Error;
};

class OutOfDomainError : public Error {
public:
    using Error::Error;
};

class ConfigInvalidError : public Error {
public:
    using Error::Error;
};

class NoAcceptedPathsError : public Error {
public:
    using Error::Error;
};

class UnsupportedPresetError : public Error {
public:
    using Error::Error;
};

class EmptySampleError : public Error {
public:
    using Error::Error;
};

} // namespace condiff
