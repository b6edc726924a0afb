#pragma once

#include <stdexcept>
#include <string>

namespace kano {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shape mismatch, wrong grid, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Invalid configuration detected at construction or load time.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Argument outside the region where an operation is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Query or stencil point outside the interpolation hull of a grid.
class ExtrapolationError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Linear solve failure.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Fixed-point iteration left its contraction regime.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

}  // namespace detail

}  // namespace kano
