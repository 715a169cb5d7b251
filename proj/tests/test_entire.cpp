#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "khess/entire.hpp"
#include "khess/errors.hpp"
#include "khess/parallel.hpp"

#include <cmath>
#include <vector>

using namespace khess;

namespace {

AkMatrix iso3()
{
    return normalize_to_Ak(std::vector<double>{1.0, 1.0, 1.0}, 2);
}

const Box kUnitBox{{-2, -2, -2}, {2, 2, 2}};

double sup_diff(const GridField& a, const GridField& b)
{
    double g = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) g = std::max(g, std::abs(a[i] - b[i]));
    return g;
}

double sup_minus_tau(const GridField& u, const AkMatrix& A)
{
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) d = std::max(d, std::abs(u[i] - A.tau(u.spec().coords(i))));
    return d;
}

const EntireRun& bump_run()
{
    static const EntireRun run = run_nested(HessianProblem::make(iso3(), FModel::bump({0, 0, 0}, 1.0, 0.5)),
                                            {8, 16, 32}, kUnitBox);
    return run;
}

}  // namespace

TEST_CASE("problem validation")
{
    const auto A = iso3();
    CHECK_THROWS_AS(HessianProblem::make(normalize_to_Ak(std::vector<double>{1.0, 1.0}, 2), FModel::constant(2)),
                    ArgumentError);
    CHECK_THROWS_AS(HessianProblem::make(A, FModel::power_tail(3, 1.0, 4.0, -1.0)), ArgumentError);
    const auto p = HessianProblem::make(A, FModel::constant(3));
    CHECK(p.env.s0 == 2.0);
    CHECK_THROWS_AS(run_nested(p, {8, 16}, kUnitBox), ArgumentError);
    CHECK_THROWS_AS(run_nested(p, {8, 8, 16}, kUnitBox), ArgumentError);
    CHECK_THROWS_AS(run_nested(p, {1, 8, 16}, kUnitBox), ArgumentError);
}

TEST_CASE("default s list")
{
    const auto p = HessianProblem::make(iso3(), FModel::constant(3));
    const auto s = default_s_list(p, kUnitBox);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == doctest::Approx(4.0 * 12.0 * p.A.a_max()));
    CHECK(s[1] == doctest::Approx(2 * s[0]));
    CHECK(s[2] == doctest::Approx(4 * s[0]));
}

TEST_CASE("compact too large for the first sublevel set")
{
    const auto p = HessianProblem::make(iso3(), FModel::constant(3));
    CHECK(expanded_box_tau(p.A, kUnitBox) == doctest::Approx(0.5 * p.A.a_max() * std::pow(std::sqrt(12.0) + 1.0, 2)));
    const Box big{{-4, -4, -4}, {4, 4, 4}};
    CHECK_THROWS_AS(run_nested(p, {8, 16, 32}, big), PreconditionError);
}

TEST_CASE("unit source reproduces the quadratic at every stage")
{
    const auto p = HessianProblem::make(iso3(), FModel::constant(3));
    const auto run = run_nested(p, {8, 16, 32}, kUnitBox);
    REQUIRE_FALSE(run.failed);
    for (const auto& st : run.stages) {
        REQUIRE(st.converged);
        CHECK(sup_minus_tau(*st.on_compact, p.A) <= 5 * st.h * st.h);
        CHECK(st.sup_deviation <= 1e-8);
        CHECK(st.margin > 0.0);
        CHECK(st.sandwich_ok);
        CHECK(st.bound_ok);
    }
    const auto lim = extract_limit(run);
    CHECK(lim.cauchy_gap <= 1e-8);
    CHECK(lim.sup_deviation <= 1e-8);
    CHECK(lim.bound_ok);
}

TEST_CASE("bump source: sandwich, global bound and decreasing gaps")
{
    const auto& run = bump_run();
    REQUIRE_FALSE(run.failed);
    for (const auto& st : run.stages) {
        REQUIRE(st.converged);
        CHECK(st.margin >= -st.slack);
        CHECK(st.bound_ok);
    }
    const auto gaps = run.cauchy_gaps();
    REQUIRE(gaps.size() == 2);
    CHECK(gaps[1] < gaps[0]);

    const auto lim = extract_limit(run);
    CHECK(lim.cauchy_gap == gaps.back());
    CHECK(lim.bound_ok);
    for (std::size_t i = 1; i < run.stages.size(); ++i) {
        const auto& st = run.stages[i];
        CHECK(sup_diff(*st.on_compact, lim.u) <= sup_diff(*run.stages[i - 1].on_compact, lim.u) + st.slack);
    }

    // f >= 1 pushes u below the quadratic.
    const double h = run.stages.back().h;
    for (std::size_t i = 0; i < lim.u.size(); ++i) CHECK(lim.u[i] <= run.problem.A.tau(lim.u.spec().coords(i)) + 5 * h * h);
}

TEST_CASE("fault injection breaks the sandwich")
{
    const auto& run = bump_run();
    GridField u = *run.stages[0].u;
    const double h = run.stages[0].h;
    CHECK(sandwich_check(u, *run.barriers, run.problem.A) >= -5 * h * h);
    const std::size_t node = u.interior()[u.interior().size() / 2];
    GridField up = u;
    up[node] += 10.0;
    CHECK(sandwich_check(up, *run.barriers, run.problem.A) < -5 * h * h);
    u[node] -= 10.0;
    CHECK(sandwich_check(u, *run.barriers, run.problem.A) < -5 * h * h);
}

TEST_CASE("extract_limit needs two converged stages")
{
    EntireRun run = bump_run();
    run.stages.resize(1);
    CHECK_THROWS_AS(extract_limit(run), StateError);
}

TEST_CASE("nonconvergent stage marks the run failed")
{
    const auto p = HessianProblem::make(iso3(), FModel::bump({0, 0, 0}, 1.0, 0.5));
    NestedOptions opts;
    opts.nodes = 17;
    opts.solver.sigma_min = 2.0;
    const auto run = run_nested(p, {8, 16, 32}, kUnitBox, opts, &*bump_run().barriers);
    CHECK(run.failed);
    CHECK_FALSE(run.failure.empty());
    CHECK_FALSE(run.stages[0].converged);
}

TEST_CASE("parallel cold starts agree with the sequential run")
{
    const auto p = HessianProblem::make(iso3(), FModel::bump({0, 0, 0}, 1.0, 0.5));
    NestedOptions opts;
    opts.parallel_stages = true;
    set_threads(3);
    const auto par = run_nested(p, {8, 16, 32}, kUnitBox, opts, &*bump_run().barriers);
    set_threads(1);
    REQUIRE_FALSE(par.failed);
    for (std::size_t i = 0; i < par.stages.size(); ++i) {
        CHECK(sup_diff(*par.stages[i].on_compact, *bump_run().stages[i].on_compact) <= 1e-8);
        CHECK(par.stages[i].margin == doctest::Approx(bump_run().stages[i].margin).epsilon(1e-8));
    }
}

TEST_CASE("uniqueness probe with a second s list")
{
    const auto p = HessianProblem::make(iso3(), FModel::bump({0, 0, 0}, 1.0, 0.5));
    const auto other = run_nested(p, {12, 24, 48}, kUnitBox, {}, &*bump_run().barriers);
    REQUIRE_FALSE(other.failed);
    const auto a = extract_limit(bump_run()), b = extract_limit(other);
    double worst = 0.0;
    for (double g : bump_run().cauchy_gaps()) worst = std::max(worst, g);
    for (double g : other.cauchy_gaps()) worst = std::max(worst, g);
    CHECK(sup_diff(a.u, b.u) <= 2.0 * worst);
}

TEST_CASE("sandwich margin under refinement 33 to 49")
{
    const auto p = HessianProblem::make(iso3(), FModel::bump({0, 0, 0}, 1.0, 0.5));
    NestedOptions fine;
    fine.nodes = 49;
    const auto run = run_nested(p, {8, 16, 32}, kUnitBox, fine, &*bump_run().barriers);
    REQUIRE_FALSE(run.failed);
    for (std::size_t i = 0; i < run.stages.size(); ++i)
        CHECK(std::abs(run.stages[i].margin - bump_run().stages[i].margin) <= 1e-3);
}
