#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "khess/errors.hpp"
#include "khess/fmodel.hpp"
#include "khess/symfunc.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace khess;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Largest relative mismatch of grad, Hessian and third tensor against central differences.
double fd_mismatch(const FModel& f, std::vector<double> x)
{
    const int n = f.dim();
    const double e = 1e-5;
    const auto d = f.eval(x, 3);
    double err = 0.0;
    for (int i = 0; i < n; ++i) {
        auto p = x, q = x;
        p[static_cast<std::size_t>(i)] += e;
        q[static_cast<std::size_t>(i)] -= e;
        const auto dp = f.eval(p, 2), dq = f.eval(q, 2);
        err = std::max(err, rel((dp.value - dq.value) / (2 * e), d.grad[static_cast<std::size_t>(i)]));
        for (int j = 0; j < n; ++j) {
            const auto ij = static_cast<std::size_t>(n * i + j);
            const auto j1 = static_cast<std::size_t>(j);
            err = std::max(err, rel((dp.grad[j1] - dq.grad[j1]) / (2 * e), d.hess[ij]));
            for (int l = 0; l < n; ++l) {
                const auto jl = static_cast<std::size_t>(n * j + l);
                err = std::max(err, rel((dp.hess[jl] - dq.hess[jl]) / (2 * e), d.third[static_cast<std::size_t>(n * n * i) + jl]));
            }
        }
    }
    return err;
}

}  // namespace

TEST_CASE("constant source")
{
    const auto f = FModel::constant(3);
    const double x[3] = {0.3, -2, 5};
    const auto d = f.eval(x, 3);
    CHECK(d.value == 1.0);
    for (double g : d.grad) CHECK(g == 0.0);
    for (double h : d.hess) CHECK(h == 0.0);
    for (double t : d.third) CHECK(t == 0.0);
    CHECK(f.is_unit());
    CHECK_FALSE(FModel::constant(3, 2.0).is_unit());
}

TEST_CASE("power tail closed form at |x| = 10")
{
    const auto f = FModel::power_tail(3, 0.5, 4.0);
    const double x[3] = {6, 8, 0};
    const auto d = f.eval(x, 1);
    CHECK(d.value - 1.0 == doctest::Approx(0.5 * std::pow(101.0, -2.0)).epsilon(1e-13));
    const double g = std::hypot(d.grad[0], d.grad[1], d.grad[2]);
    CHECK(g == doctest::Approx(0.5 * 4.0 * 10.0 * std::pow(101.0, -3.0)).epsilon(1e-13));
    CHECK(g <= 0.5 * 4.0 * 1e-5);
    CHECK(FModel::power_tail(3, 0.5, 4.0, -1.0).inf_bound() == doctest::Approx(0.5));
}

TEST_CASE("bump at its center")
{
    const auto f = FModel::bump({1, 2, 3}, 0.5, 0.7);
    const double c[3] = {1, 2, 3};
    CHECK(f.value(c) == doctest::Approx(1.7));
    const double far[3] = {1, 2, 3.6};
    CHECK(f.value(far) == 1.0);
    CHECK(bump_profile(0.0) == doctest::Approx(1.0));
    CHECK(bump_profile(1.0) == 0.0);
    CHECK_THROWS_AS(FModel::bump({0, 0, 0}, 0.0, 1.0), ArgumentError);
}

TEST_CASE("sums add perturbations")
{
    const auto a = FModel::power_tail(3, 0.3, 4.0);
    const auto b = FModel::bump({0, 0, 0}, 2.0, -0.4);
    const auto s = FModel::sum({a, b});
    const double x[3] = {0.5, -0.2, 0.1};
    CHECK(s.value(x) == doctest::Approx(a.value(x) + b.value(x) - 1.0));
    CHECK(s.inf_bound() == doctest::Approx(0.6));
    CHECK_THROWS_AS(FModel::sum({s}), ArgumentError);
}

TEST_CASE("derivatives match central differences at random points")
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> ud(-3.0, 3.0);
    const std::vector<FModel> models{FModel::power_tail(3, 0.5, 4.0), FModel::power_tail(3, 0.2, 3.0, -1.0),
                                     FModel::bump({0.2, -0.1, 0.0}, 2.0, 0.5),
                                     FModel::sum({FModel::power_tail(3, 0.1, 5.0), FModel::bump({1, 0, 0}, 1.5, 0.3)})};
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const auto& f = models[static_cast<std::size_t>(t) % models.size()];
        worst = std::max(worst, fd_mismatch(f, {ud(rng), ud(rng), ud(rng)}));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("tail envelopes")
{
    const auto A = normalize_to_Ak(std::vector<double>{1.0, 2.0, 3.0}, 2);
    const auto ec = tail_envelope(FModel::constant(3), A);
    CHECK(ec.C0 == 0.0);
    CHECK(ec.s0 == 2.0);

    const auto eb = tail_envelope(FModel::bump({0, 0, 0}, 3.0, 0.5), A);
    CHECK(eb.C0 == 0.0);
    CHECK(eb.s0 == doctest::Approx(std::max(2.0, 0.5 * A.a_max() * 9.0)));

    CHECK_THROWS_AS(tail_envelope(FModel::constant(3, 2.0), A), ConstantsError);
    CHECK_THROWS_AS(tail_envelope(FModel::power_tail(3, 1.0, 4.0, -1.0), A), ConstantsError);
    CHECK_THROWS_AS((TailEnvelope{0.0, 1.0, 4.0}.validate()), ArgumentError);
    CHECK_THROWS_AS((TailEnvelope{0.0, 2.0, 2.0}.validate()), ArgumentError);
}

TEST_CASE("tail envelopes bracket f on exterior samples")
{
    const auto A = normalize_to_Ak(std::vector<double>{1.0, 2.0, 3.0}, 2);
    const std::vector<FModel> models{FModel::power_tail(3, 0.5, 4.0), FModel::power_tail(3, 0.8, 3.0, -1.0),
                                     FModel::sum({FModel::power_tail(3, 0.3, 5.0), FModel::bump({1, 0, 0}, 1.0, 0.5),
                                                  FModel::power_tail(3, 0.2, 3.5, -1.0)})};
    std::mt19937_64 rng(32);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    int violations = 0;
    for (const auto& f : models) {
        const auto env = tail_envelope(f, A);
        for (int t = 0; t < 10000; ++t) {
            double x[3] = {nd(rng), nd(rng), nd(rng)};
            const double s = env.s0 * std::pow(1e3, ud(rng));
            const double scale = std::sqrt(s / A.tau(x));
            for (double& v : x) v *= scale;
            const double tau = A.tau(x), fv = f.value(x);
            if (!(env.lower(tau) <= fv && fv <= env.upper(tau))) ++violations;
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("C2 decay verification")
{
    const std::vector<double> radii{10, 20, 40, 80, 160};
    CHECK(verify_C2(FModel::bump({0, 0, 0}, 1.0, 0.5), 4.0, radii));
    CHECK(verify_C2(FModel::bump({0, 0, 0}, 1.0, 0.5), 100.0, radii));
    CHECK(verify_C2(FModel::constant(3), 7.0, radii));
    CHECK(verify_C2(FModel::power_tail(3, 0.5, 4.0), 4.0, radii));
    CHECK_FALSE(verify_C2(FModel::power_tail(3, 0.5, 4.0), 5.0, radii));
    const auto prof = c2_profile(FModel::power_tail(3, 0.5, 4.0), 4.0, radii);
    REQUIRE(prof.size() == 4);
    for (const auto& row : prof) CHECK(row.back() <= 2.0 * row.front());
}
