#pragma once

#include <stdexcept>
#include <string>

namespace khess {

/// Invalid input to an operation (range, finiteness, shape).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A matrix left the admissible cone, or sigma_k fell below the floor.
class ConeViolation : public std::runtime_error {
public:
    ConeViolation(const std::string& what, double sigma)
        : std::runtime_error(what), sigma_(sigma) {}
    double sigma() const noexcept { return sigma_; }

private:
    double sigma_;
};

/// Quadrature or other numerical routine failed to meet its tolerance.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Barrier or envelope constants do not satisfy the required inequalities.
class ConstantsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on problem geometry or data does not hold.
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operation called on an object in the wrong state.
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace khess
