#pragma once

// =============================================================================
// kpbc - common scalar/vector aliases and error taxonomy
// =============================================================================

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace kpbc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (dimension mismatch, non-finite input, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// A vector field or gradient was requested at a point where it is undefined
/// (fractional-power models on a coordinate axis, for example).
class SingularPointError : public Error {
public:
    SingularPointError(const std::string& what, int coordinate)
        : Error(what), coordinate(coordinate) {}

    int coordinate;  ///< index of the offending coordinate
};

/// Iterative solver failed; carries the last iterate for diagnosis.
class SolverError : public Error {
public:
    SolverError(const std::string& what, Vector last_x, Vector last_u, double residual)
        : Error(what), last_x(std::move(last_x)), last_u(std::move(last_u)), residual(residual) {}

    Vector last_x;
    Vector last_u;
    double residual;
};

/// Invalid controller or integrator configuration, detected at construction.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Scenario file or request failed validation.
class ValidationError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw ContractViolation(message);
    }
}

}  // namespace kpbc
