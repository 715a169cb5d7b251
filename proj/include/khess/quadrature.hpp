#pragma once

// Adaptive quadrature on finite and half-infinite intervals.

#include <functional>

namespace khess {

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
};

/// Integral of f over [a, b]; throws NumericError when the error estimate
/// exceeds rel_tol * |value| (plus a tiny absolute floor).
QuadResult integrate(const std::function<double(double)>& f, double a, double b, double rel_tol = 1e-9);

/// Integral over [a, inf) for a > 0 by exp-sinh quadrature.
QuadResult integrate_to_infinity(const std::function<double(double)>& f, double a, double rel_tol = 1e-9);

}  // namespace khess
