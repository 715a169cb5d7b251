#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "khess/asymptotics.hpp"
#include "khess/errors.hpp"
#include "khess/grid.hpp"
#include "khess/symfunc.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include <json.hpp>

using namespace khess;

namespace {

struct Samples {
    std::vector<double> points, values;
};

// Uniform directions, log-uniform radii in [r_lo, r_hi).
Samples exterior_samples(const AkMatrix& A, double r_lo, double r_hi, int count,
                         const std::function<double(std::span<const double>, double)>& extra, unsigned seed = 61)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    Samples s;
    std::vector<double> x(3);
    for (int i = 0; i < count; ++i) {
        double q = 0.0;
        for (double& v : x) {
            v = nd(rng);
            q += v * v;
        }
        const double r = r_lo * std::pow(r_hi / r_lo, ud(rng));
        for (double& v : x) v *= r / std::sqrt(q);
        s.points.insert(s.points.end(), x.begin(), x.end());
        s.values.push_back(A.tau(x) + extra(x, r));
    }
    return s;
}

ShellOptions annulus(double lo, double hi)
{
    ShellOptions o;
    o.r_inner = lo;
    o.r_outer = hi;
    o.shells = 6;
    return o;
}

AkMatrix aniso()
{
    return normalize_to_Ak(std::vector<double>{0.8, 1.0, 1.4}, 2);
}

}  // namespace

TEST_CASE("quadratic plus constant: affine part exact, exponent sentinel")
{
    const auto A = aniso();
    const auto s = exterior_samples(A, 10, 80, 2400, [](auto, double) { return 3.0; });
    const auto fit = fit_quadratic_remainder(s.points, s.values, A, annulus(10, 80));
    for (double b : fit.b) CHECK(std::abs(b) <= 1e-9);
    CHECK(fit.c == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(std::isinf(fit.exponent));
    CHECK(fit.exponent > 0.0);
    for (const auto& sh : fit.shells) CHECK(sh.sup_remainder <= 1e-9);

    std::ostringstream os;
    fit.write_json(os);
    const auto j = nlohmann::json::parse(os.str());
    CHECK(j["exponent_sentinel"].get<bool>());
}

TEST_CASE("planted 1/r tail with a linear term")
{
    const auto A = aniso();
    const auto s = exterior_samples(A, 10, 80, 2400, [](auto x, double r) { return x[1] + 1.0 / r; });
    const auto fit = fit_quadratic_remainder(s.points, s.values, A, annulus(10, 80));
    CHECK(std::abs(fit.b[0]) <= 1e-6);
    CHECK(std::abs(fit.b[1] - 1.0) <= 1e-6);
    CHECK(std::abs(fit.b[2]) <= 1e-6);
    CHECK(std::abs(fit.c) <= 1e-4);
    CHECK(fit.exponent == doctest::Approx(1.0).epsilon(0.05));
    CHECK_FALSE(fit.log_flag);
    REQUIRE(fit.shells.size() == 6);
    for (const auto& sh : fit.shells) CHECK(sh.count >= 200);
}

TEST_CASE("planted ln r / r tail sets the log flag")
{
    const auto A = aniso();
    const auto s = exterior_samples(A, 10, 80, 2400, [](auto, double r) { return std::log(r) / r; });
    const auto fit = fit_quadratic_remainder(s.points, s.values, A, annulus(10, 80));
    CHECK(fit.log_flag);
    CHECK(fit.exponent == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::abs(fit.c) <= 1e-4);
}

TEST_CASE("affine equivariance")
{
    const auto A = aniso();
    auto base = [](std::span<const double>, double r) { return 2.0 / r; };
    const auto s0 = exterior_samples(A, 10, 80, 2400, base);
    const double beta[3] = {0.3, -1.2, 0.7}, gamma = -4.5;
    const auto s1 = exterior_samples(A, 10, 80, 2400, [&](std::span<const double> x, double r) {
        return base(x, r) + beta[0] * x[0] + beta[1] * x[1] + beta[2] * x[2] + gamma;
    });
    const auto f0 = fit_quadratic_remainder(s0.points, s0.values, A, annulus(10, 80));
    const auto f1 = fit_quadratic_remainder(s1.points, s1.values, A, annulus(10, 80));
    for (int d = 0; d < 3; ++d) CHECK(f1.b[static_cast<std::size_t>(d)] - f0.b[static_cast<std::size_t>(d)] == doctest::Approx(beta[d]).epsilon(1e-9));
    CHECK(f1.c - f0.c == doctest::Approx(gamma).epsilon(1e-9));
    CHECK(f1.exponent == doctest::Approx(f0.exponent).epsilon(1e-6));
    CHECK(f1.log_flag == f0.log_flag);
}

TEST_CASE("degenerate sampling is rejected")
{
    const auto A = aniso();
    const auto s = exterior_samples(A, 10, 80, 200, [](auto, double r) { return 1.0 / r; });
    CHECK_THROWS_AS(fit_quadratic_remainder(s.points, s.values, A, annulus(10, 80)), ArgumentError);
    const auto ok = exterior_samples(A, 10, 80, 2400, [](auto, double r) { return 1.0 / r; });
    CHECK_THROWS_AS(fit_quadratic_remainder(ok.points, ok.values, A, annulus(10, 15)), ArgumentError);
}

TEST_CASE("grid overload uses interior nodes in the annulus")
{
    const auto A = aniso();
    const auto spec = GridSpec::box({-40, -40, -40}, {40, 40, 40}, 49);
    const GridField u(spec, [&](std::span<const double> x) { return A.tau(x) + x[0] - 2.0 + 1.0 / std::hypot(x[0], x[1], x[2]); });
    const auto fit = fit_quadratic_remainder(u, A, annulus(8, 38));
    CHECK(fit.b[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fit.c == doctest::Approx(-2.0).epsilon(1e-4));
    CHECK(fit.exponent == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("radial potential closed forms")
{
    const RadialSource s4{4.0, 3, 1.5};
    const RadialSource s3{3.0, 3, 1.5};
    for (double r : {2.0, 10.0, 1e3, 1e5}) {
        CHECK(radial_potential_derivative(s4, r) == doctest::Approx((1.0 / 1.5 - 1.0 / r) / (r * r)).epsilon(1e-12));
        CHECK(radial_potential(s4, r) == doctest::Approx(-(1.0 / (1.5 * r) - 0.5 / (r * r))).epsilon(1e-12));
        CHECK(radial_potential_derivative(s3, r) == doctest::Approx(std::log(r / 1.5) / (r * r)).epsilon(1e-12));
        CHECK(radial_potential(s3, r) == doctest::Approx(-(std::log(r / 1.5) + 1.0) / r).epsilon(1e-12));
    }
    CHECK_THROWS_AS(radial_potential(s4, 1.5), ArgumentError);
    CHECK_THROWS_AS(radial_potential(RadialSource{2.0, 3, 1.0}, 3.0), ArgumentError);
    CHECK_THROWS_AS(radial_potential(RadialSource{3.0, 2, 1.0}, 3.0), ArgumentError);
}

TEST_CASE("radial potential solves its ODE")
{
    for (int n : {3, 5})
        for (double delta : {2.5, 3.0, 4.0, 5.0, 6.0}) {
            const RadialSource src{delta, n, 1.0};
            for (double r : {1.5, 3.0, 20.0, 400.0}) {
                // Five-point derivative of r^{n-1} h'.
                auto flux = [&](double t) { return std::pow(t, n - 1) * radial_potential_derivative(src, t); };
                const double e = 1e-3 * r;
                const double d = (-flux(r + 2 * e) + 8 * flux(r + e) - 8 * flux(r - e) + flux(r - 2 * e)) / (12 * e);
                const double rhs = std::pow(r, n - 1 - delta);
                const double roundoff = 64 * std::numeric_limits<double>::epsilon() * std::abs(flux(r)) / e;
                CHECK(std::abs(d - rhs) <= 1e-9 * std::abs(rhs) + roundoff);
                const double hp = (radial_potential(src, r + e) - radial_potential(src, r - e)) / (2 * e);
                CHECK(hp == doctest::Approx(radial_potential_derivative(src, r)).epsilon(1e-5));
                // h' against the defining integral.
                const double I = oracle::simpson([&](double v) { return std::exp((n - delta) * v); }, 0.0, std::log(r), 4000);
                CHECK(radial_potential_derivative(src, r) == doctest::Approx(std::pow(r, 1 - n) * I).epsilon(1e-9));
            }
        }
}

TEST_CASE("decay rate oracle")
{
    CHECK(decay_rate_oracle({4.0, 3, 1.0}) == std::pair{1.0, false});
    CHECK(decay_rate_oracle({3.0, 3, 1.0}) == std::pair{1.0, true});
    CHECK(decay_rate_oracle({2.5, 5, 1.0}) == std::pair{0.5, false});
}

TEST_CASE("log-log fits of the potential match the oracle")
{
    std::vector<double> r;
    for (int i = 0; i <= 40; ++i) r.push_back(1e2 * std::pow(1e4, i / 40.0));
    for (int n : {3, 5})
        for (double delta : {2.5, 3.0, 4.0, 6.0}) {
            const RadialSource src{delta, n, 1.0};
            std::vector<double> y;
            for (double t : r) y.push_back(std::abs(radial_potential(src, t)));
            const auto fit = fit_power_law(r, y);
            const auto [rate, log] = decay_rate_oracle(src);
            CAPTURE(n);
            CAPTURE(delta);
            CHECK(fit.exponent == doctest::Approx(rate).epsilon(0.02 / rate));
            CHECK(fit.log_flag == log);
        }
}

TEST_CASE("derivative decay of a 1/r tail")
{
    const auto A = aniso();
    const auto spec = GridSpec::box({-24, -24, -24}, {24, 24, 24}, 65);
    const GridField u(spec, [&](std::span<const double> x) { return A.tau(x) + 1.0 / std::hypot(x[0], x[1], x[2]); });
    const std::vector<double> radii{4, 6, 9, 13.5, 20.25};
    const auto rep = derivative_decay_report(u, A, radii);
    REQUIRE(rep.rows.size() == 4);
    CHECK(rep.slopes[0] == doctest::Approx(-1.0).epsilon(0.05));
    CHECK(rep.slopes[1] == doctest::Approx(-2.0).epsilon(0.05));
    CHECK(rep.slopes[2] == doctest::Approx(-3.0).epsilon(0.05));
    CHECK(rep.slopes[1] - rep.slopes[0] == doctest::Approx(-1.0).epsilon(0.1));

    const GridField q(spec, [&](std::span<const double> x) { return A.tau(x); });
    const auto zero = derivative_decay_report(q, A, radii);
    for (const auto& row : zero.rows) {
        CHECK(row.sup_w <= 1e-13);
        CHECK(row.sup_grad <= 1e-13);
        CHECK(row.sup_hess <= 1e-13);
    }
    for (double s : zero.slopes) CHECK((std::isinf(s) && s < 0));
    CHECK_THROWS_AS(derivative_decay_report(q, A, std::vector<double>{4.0}), ArgumentError);
}
