#pragma once

#include <stdexcept>
#include <string>

namespace rspde {

/// Invalid grid, operator, or run configuration.
class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Coefficients violate the Lipschitz/contraction structure; nothing is solved.
class AssumptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A linear solve, penalty iteration, or PSOR sweep failed.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, long step = -1)
        : std::runtime_error(what), step_(step) {}

    /// Time step at which the failure happened, or -1.
    long step() const noexcept { return step_; }

private:
    long step_;
};

/// Two objects that must share a discretization do not.
class DiscretizationMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace rspde
