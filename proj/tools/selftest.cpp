#include "selftest.hpp"

#include "khess/asymptotics.hpp"
#include "khess/dirichlet.hpp"
#include "khess/fmodel.hpp"
#include "khess/grid.hpp"
#include "khess/liouville.hpp"
#include "khess/radial_barriers.hpp"
#include "khess/symfunc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

namespace khess::cli {

namespace {

using nlohmann::json;

SymMatrix random_symmetric(std::mt19937_64& rng, int n)
{
    std::normal_distribution<double> nd;
    SymMatrix m(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) m(i, j) = nd(rng);
    return m;
}

// Random member of Gamma_k: a shifted symmetric matrix, accepted when admissible.
SymMatrix random_admissible(std::mt19937_64& rng, int n, int k)
{
    for (;;) {
        SymMatrix m = random_symmetric(rng, n);
        for (int i = 0; i < n; ++i) m(i, i) += 1.5;
        if (cone_membership(m, k).strict && sigma_k_matrix(m, k) > 1e-3) return m;
    }
}

double abs_sigma(const EigenVector& lam, int k)
{
    std::vector<double> a(lam.values().begin(), lam.values().end());
    for (auto& v : a) v = std::abs(v);
    return sigma_k(a, k);
}

SuiteResult symfunc_oracles(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    double minor_err = 0.0, euler_err = 0.0;
    for (int t = 0; t < 2000; ++t) {
        const int n = 2 + t % 3;
        const SymMatrix m = random_symmetric(rng, n);
        const auto lam = eigenvalues(m);
        for (int k = 1; k <= n; ++k) {
            const double scale = std::max(1e-300, abs_sigma(lam, k));
            const double s = sigma_k(lam, k);
            minor_err = std::max(minor_err, std::abs(sigma_k_minor_sum(m, k) - s) / scale);
            const SymMatrix T = newton_tensor(m, k);
            double tr = 0.0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) tr += T(i, j) * m(j, i);
            euler_err = std::max(euler_err, std::abs(tr - k * s) / (k * scale));
        }
    }
    return {"symfunc_oracles", minor_err <= 1e-10 && euler_err <= 1e-10,
            {{"minor_vs_eigen", minor_err}, {"euler_identity", euler_err}}, 0.0};
}

SuiteResult operator_gradient(std::uint64_t seed)
{
    std::mt19937_64 rng(seed + 1);
    double err = 0.0;
    const double e = 1e-6;
    for (int t = 0; t < 300; ++t) {
        const int n = 2 + t % 3;
        const int k = 1 + t % n;
        const SymMatrix m = random_admissible(rng, n, k);
        const auto g = F_and_grad(m, k);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                SymMatrix p = m, q = m;
                p(i, j) += e;
                q(i, j) -= e;
                double fd = (F_and_grad(p, k).value - F_and_grad(q, k).value) / (2.0 * e);
                if (i != j) fd *= 0.5;
                err = std::max(err, std::abs(fd - g.gradient(i, j)));
            }
    }
    return {"operator_gradient", err <= 1e-5, {{"max_abs_error", err}}, 0.0};
}

SuiteResult source_derivatives(std::uint64_t seed)
{
    std::mt19937_64 rng(seed + 2);
    std::uniform_real_distribution<double> ud(-3.0, 3.0);
    const std::vector<FModel> models{FModel::power_tail(3, 0.5, 4.0), FModel::bump({0.2, -0.1, 0.0}, 2.0, 0.5)};
    double err = 0.0;
    const double e = 1e-5;
    for (const auto& f : models)
        for (int t = 0; t < 200; ++t) {
            std::vector<double> x{ud(rng), ud(rng), ud(rng)};
            const auto d = f.eval(x, 3);
            for (int i = 0; i < 3; ++i) {
                auto p = x, q = x;
                p[static_cast<std::size_t>(i)] += e;
                q[static_cast<std::size_t>(i)] -= e;
                const auto dp = f.eval(p, 2), dq = f.eval(q, 2);
                auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
                err = std::max(err, rel((dp.value - dq.value) / (2 * e), d.grad[static_cast<std::size_t>(i)]));
                for (int j = 0; j < 3; ++j) {
                    err = std::max(err, rel((dp.grad[static_cast<std::size_t>(j)] - dq.grad[static_cast<std::size_t>(j)]) / (2 * e),
                                            d.hess[static_cast<std::size_t>(3 * i + j)]));
                    for (int l = 0; l < 3; ++l) {
                        const std::size_t jl = static_cast<std::size_t>(3 * j + l);
                        err = std::max(err, rel((dp.hess[jl] - dq.hess[jl]) / (2 * e),
                                                d.third[static_cast<std::size_t>(9 * i + 3 * j + l)]));
                    }
                }
            }
        }
    return {"source_derivatives", err <= 1e-6, {{"max_rel_error", err}}, 0.0};
}

SuiteResult barrier_ode()
{
    const AkMatrix A = normalize_to_Ak(std::vector<double>{1.0, 1.0, 1.0}, 2);
    const double hk = A.hk();
    double err = 0.0;
    for (double beta : {3.0, 4.0})
        for (double C0 : {0.0, 0.5}) {
            TailEnvelope env{C0, 2.0, beta};
            BarrierOptions o;
            o.tau_max = 200.0 * env.s0;
            const auto up = build_upper_barrier(A, env, o);
            const auto lo = build_lower_profile(A, env, 10.0, o);
            auto check = [&](const RadialProfile& p, bool upper) {
                for (std::size_t j = 0; j < p.knots().size(); ++j) {
                    const double t = p.knots()[j], d = p.first()[j], dd = p.second()[j];
                    if (!(t > env.s0) || !std::isfinite(dd)) continue;
                    const double lhs = std::pow(d, 2) + 2.0 * hk * dd * d * t;
                    const double rhs = upper ? env.lower(t) : env.upper(t);
                    err = std::max(err, std::abs(lhs - rhs) / std::abs(rhs));
                }
            };
            check(up, true);
            check(lo, false);
        }
    return {"barrier_ode", err <= 1e-8, {{"max_rel_error", err}}, 0.0};
}

SuiteResult quadratic_exactness(std::uint64_t seed)
{
    std::mt19937_64 rng(seed + 3);
    std::uniform_real_distribution<double> ud(0.5, 2.0);
    double err = 0.0;
    int iterations = 0;
    for (int k = 1; k <= 3; ++k) {
        const AkMatrix A = normalize_to_Ak(std::vector<double>{ud(rng), ud(rng), ud(rng)}, k);
        const auto spec = GridSpec::box({-1, -1, -1}, {1, 1, 1}, 17);
        GridField u0(spec, [&](std::span<const double> x) {
            return A.tau(x) + 0.05 * (1 - x[0] * x[0]) * (1 - x[1] * x[1]) * (1 - x[2] * x[2]);
        });
        const auto res = newton_solve(u0, [](std::span<const double>) { return 1.0; }, k);
        iterations = std::max(iterations, res.report.iterations);
        std::vector<double> x(3);
        for (std::size_t i = 0; i < res.u.size(); ++i) {
            spec.coords(i, x);
            err = std::max(err, std::abs(res.u[i] - A.tau(x)));
        }
    }
    return {"quadratic_exactness", err <= 1e-10, {{"sup_error", err}, {"max_iterations", iterations}}, 0.0};
}

SuiteResult poisson_order()
{
    auto exact = [](std::span<const double> x) {
        return 0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) + 0.1 * std::sin(x[0]) * std::sin(x[1]) * std::sin(x[2]);
    };
    auto lap = [](std::span<const double> x) { return 3.0 - 0.3 * std::sin(x[0]) * std::sin(x[1]) * std::sin(x[2]); };
    std::vector<double> errs, hs;
    for (int nodes : {17, 25}) {
        const auto spec = GridSpec::box({-1, -1, -1}, {1, 1, 1}, nodes);
        GridField u0(spec, [&](std::span<const double> x) {
            return exact(x) + 0.05 * (1 - x[0] * x[0]) * (1 - x[1] * x[1]) * (1 - x[2] * x[2]);
        });
        const auto res = newton_solve(u0, lap, 1);
        std::vector<double> x(3);
        double e = 0.0;
        for (std::size_t i = 0; i < res.u.size(); ++i) {
            spec.coords(i, x);
            e = std::max(e, std::abs(res.u[i] - exact(x)));
        }
        errs.push_back(e);
        hs.push_back(spec.max_spacing());
    }
    const double order = std::log(errs[0] / errs[1]) / std::log(hs[0] / hs[1]);
    return {"poisson_order", std::abs(order - 2.0) <= 0.3, {{"errors", errs}, {"order", order}}, 0.0};
}

SuiteResult asymptotic_fit(std::uint64_t seed)
{
    const AkMatrix A = normalize_to_Ak(std::vector<double>{1.0, 1.0, 1.0}, 2);
    std::mt19937_64 rng(seed + 4);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    json metrics;
    bool ok = true;
    for (int mode = 0; mode < 2; ++mode) {
        std::vector<double> pts, vals;
        for (int s = 0; s < 6; ++s)
            for (int q = 0; q < 200; ++q) {
                double d[3] = {nd(rng), nd(rng), nd(rng)};
                const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                const double r = 4.0 * std::pow(16.0, (s + ud(rng)) / 6.0);
                for (double sgn : {1.0, -1.0}) {
                    double x[3];
                    for (int i = 0; i < 3; ++i) x[i] = sgn * r * d[i] / len;
                    const double tail = mode == 0 ? 1.0 / r : std::log(r) / r;
                    pts.insert(pts.end(), x, x + 3);
                    vals.push_back(A.tau(std::span<const double>(x, 3)) + x[1] + tail);
                }
            }
        const auto fit = fit_quadratic_remainder(pts, vals, A, ShellOptions{4.0, 64.0, 6, 50});
        const double berr = std::max({std::abs(fit.b[0]), std::abs(fit.b[1] - 1.0), std::abs(fit.b[2])});
        const bool pass = berr <= 1e-6 && std::abs(fit.c) <= 1e-4 && std::abs(fit.exponent - 1.0) <= 0.05 &&
                          fit.log_flag == (mode == 1);
        ok = ok && pass;
        metrics[mode == 0 ? "inverse_r" : "log_r_over_r"] = {
            {"b_error", berr}, {"c", fit.c}, {"exponent", fit.exponent}, {"log_flag", fit.log_flag}};
    }
    double slope_err = 0.0;
    for (auto [n, delta] : {std::pair{3, 2.5}, std::pair{3, 4.0}, std::pair{5, 4.0}}) {
        const RadialSource src{delta, n, 1.0};
        const double r1 = 1e4, r2 = 1e6;
        const double slope =
            -std::log(std::abs(radial_potential(src, r2) / radial_potential(src, r1))) / std::log(r2 / r1);
        slope_err = std::max(slope_err, std::abs(slope - decay_rate_oracle(src).first));
    }
    ok = ok && slope_err <= 0.02 && decay_rate_oracle(RadialSource{3.0, 3, 1.0}).second;
    metrics["potential_slope_error"] = slope_err;
    return {"asymptotic_fit", ok, metrics, 0.0};
}

SuiteResult liouville_quadratic()
{
    const AkMatrix A = normalize_to_Ak(std::vector<double>{1.0, 2.0, 3.0}, 2);
    const auto spec = GridSpec::ellipsoid(std::vector<double>(A.a().begin(), A.a().end()), 32.0, 33);
    const GridField u(spec, [&](std::span<const double> x) { return A.tau(x) + 3.0; });
    const auto rep = hessian_decay(u, {1.5, 3.0, 6.0}, A);
    double worst = 0.0;
    for (const auto& r : rep.rows) worst = std::max({worst, r.sup_deviation, r.holder_proxy});
    return {"liouville_quadratic", worst <= 1e-10, {{"max_metric", worst}}, 0.0};
}

SuiteResult field_io()
{
    const AkMatrix A = normalize_to_Ak(std::vector<double>{1.0, 2.0, 3.0}, 3);
    const auto spec = GridSpec::ellipsoid(std::vector<double>(A.a().begin(), A.a().end()), 8.0, 17);
    const GridField u(spec, [&](std::span<const double> x) { return std::exp(A.tau(x) / 8.0); });
    std::stringstream ss;
    u.write_binary(ss);
    const auto v = GridField::read_binary(ss);
    bool same = v.spec() == u.spec() && v.mask() == u.mask();
    for (std::size_t i = 0; same && i < u.size(); ++i) same = u[i] == v[i];
    return {"field_io", same, {{"nodes", u.size()}}, 0.0};
}

}  // namespace

std::vector<SuiteResult> run_selftest(std::uint64_t seed)
{
    const std::vector<std::pair<std::string, std::function<SuiteResult()>>> suites{
        {"symfunc_oracles", [&] { return symfunc_oracles(seed); }},
        {"operator_gradient", [&] { return operator_gradient(seed); }},
        {"source_derivatives", [&] { return source_derivatives(seed); }},
        {"barrier_ode", [] { return barrier_ode(); }},
        {"quadratic_exactness", [&] { return quadratic_exactness(seed); }},
        {"poisson_order", [] { return poisson_order(); }},
        {"asymptotic_fit", [&] { return asymptotic_fit(seed); }},
        {"liouville_quadratic", [] { return liouville_quadratic(); }},
        {"field_io", [] { return field_io(); }}};
    std::vector<SuiteResult> out;
    for (const auto& [name, fn] : suites) {
        const auto t0 = std::chrono::steady_clock::now();
        SuiteResult r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r.passed = false;
            r.metrics = {{"exception", e.what()}};
        }
        r.name = name;
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace khess::cli
