#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stsync {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes of the operands do not fit together.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A precondition on the values (not the shapes) of an input was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Input is too close to a singular configuration to be processed.
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// A parameter lies outside the admissible range of an operation.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A scenario configuration is malformed or violates a scenario premise.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf appeared while time stepping.
class NumericalBlowupError : public Error {
public:
    NumericalBlowupError(const std::string& what, double time)
        : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Orthonormality drift exceeded the abort threshold during integration.
class DriftAbortError : public Error {
public:
    DriftAbortError(const std::string& what, double time, std::size_t agent, double drift)
        : Error(what), time_(time), agent_(agent), drift_(drift) {}
    double time() const noexcept { return time_; }
    std::size_t agent() const noexcept { return agent_; }
    double drift() const noexcept { return drift_; }

private:
    double time_;
    std::size_t agent_;
    double drift_;
};

}  // namespace stsync
