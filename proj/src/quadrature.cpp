#include "khess/quadrature.hpp"

#include "khess/errors.hpp"

#include <cmath>
#include <limits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <fmt/format.h>

namespace khess {

namespace {

constexpr unsigned kMaxDepth = 20;
constexpr double kAbsFloor = 1e-300;

QuadResult checked(double value, double error, double rel_tol, double a, double b)
{
    if (!std::isfinite(value))
        throw NumericError(fmt::format("quadrature on [{}, {}] produced a non-finite value", a, b));
    if (error > rel_tol * std::abs(value) + kAbsFloor && error > 1e-15)
        throw NumericError(fmt::format("quadrature on [{}, {}] missed tolerance: value {:.17g}, error {:.3g}",
                                       a, b, value, error));
    return {value, error};
}

}  // namespace

QuadResult integrate(const std::function<double(double)>& f, double a, double b, double rel_tol)
{
    if (a == b) return {};
    // Work on [-1, 1]: the error estimate is not scale invariant on short intervals.
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    auto g = [&](double y) { return f(mid + half * y) * half; };
    double error = 0.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        g, -1.0, 1.0, kMaxDepth, rel_tol * 0.1, &error);
    if (std::isfinite(value) && error <= rel_tol * std::abs(value) + kAbsFloor) return {value, error};
    // Endpoint singularities in a derivative defeat Gauss-Kronrod; tanh-sinh copes.
    boost::math::quadrature::tanh_sinh<double> ts;
    double ts_error = 0.0;
    const double ts_value = ts.integrate(g, -1.0, 1.0, rel_tol * 0.1, &ts_error);
    return checked(ts_value, ts_error, rel_tol, a, b);
}

QuadResult integrate_to_infinity(const std::function<double(double)>& f, double a, double rel_tol)
{
    if (!(a > 0.0)) throw ArgumentError("integrate_to_infinity: lower limit must be positive");
    boost::math::quadrature::exp_sinh<double> es;
    double error = 0.0;
    const double value = es.integrate(f, a, std::numeric_limits<double>::infinity(), rel_tol * 0.1, &error);
    return checked(value, error, rel_tol, a, INFINITY);
}

}  // namespace khess
