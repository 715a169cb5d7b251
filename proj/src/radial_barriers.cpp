#include "khess/radial_barriers.hpp"

#include "khess/errors.hpp"
#include "khess/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

namespace khess {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool kappa_is_half_beta(double kappa, double beta)
{
    return std::abs(kappa - 0.5 * beta) < 1e-12;
}

// int_{s0}^t kappa r^{kappa-1-beta/2} dr
double tail_moment(double t, double kappa, double s0, double beta)
{
    if (kappa_is_half_beta(kappa, beta)) return kappa * std::log(t / s0);
    const double e = kappa - 0.5 * beta;
    return kappa / e * (std::pow(t, e) - std::pow(s0, e));
}

// u'^k - 1 in closed form for f_env = 1 + eps C0 r^{-beta/2} and additive constant H.
double slope_excess(double t, double kappa, const TailEnvelope& env, double eps, double H)
{
    const double m = env.C0 > 0.0 ? eps * env.C0 * tail_moment(t, kappa, env.s0, env.beta) : 0.0;
    return std::pow(t, -kappa) * (H - std::pow(env.s0, kappa) + m);
}

// (1 + d)^{1/k} - 1 without cancellation.
double root_minus_one(double d, int k)
{
    return std::expm1(std::log1p(d) / k);
}

std::vector<double> geometric_knots(double a, double b, double ratio)
{
    std::vector<double> t{a};
    while (t.back() * ratio < b * (1.0 - 1e-12)) t.push_back(t.back() * ratio);
    t.push_back(b);
    return t;
}

// Profile for the double integral int_{s0}^tau (t^{-kappa}(int_{s0}^t kappa r^{kappa-1} fenv dr + H))^{1/k} dt.
RadialProfile envelope_profile(const AkMatrix& A, const TailEnvelope& env, double eps, double H,
                               const BarrierOptions& opts)
{
    env.validate();
    const int k = A.k();
    const double kappa = A.kappa(), hk = A.hk();
    const double s0 = env.s0;
    const double tau_max = opts.tau_max > 0.0 ? opts.tau_max : 1e4 * s0;
    if (!(tau_max > s0)) throw ArgumentError("barrier: tau_max must exceed s0");
    auto fenv = [&](double r) { return 1.0 + eps * env.C0 * std::pow(r, -0.5 * env.beta); };
    auto inner_rate = [&](double r) { return kappa * std::pow(r, kappa - 1.0) * fenv(r); };

    const auto knots = geometric_knots(s0, tau_max, opts.knot_ratio);
    const std::size_t m = knots.size();
    std::vector<double> inner(m, 0.0), u(m, 0.0), du(m), d2u(m);
    for (std::size_t j = 1; j < m; ++j)
        inner[j] = inner[j - 1] + integrate(inner_rate, knots[j - 1], knots[j], opts.rel_tol).value;

    auto slope_from = [&](double t, double I) {
        const double v = std::pow(t, -kappa) * (I + H);
        return v > 0.0 ? std::pow(v, 1.0 / k) : 0.0;
    };
    for (std::size_t j = 0; j < m; ++j) {
        const double t = knots[j];
        du[j] = slope_from(t, inner[j]);
        const double num = fenv(t) - std::pow(du[j], k);
        if (du[j] > 0.0)
            d2u[j] = num / (2.0 * hk * t * std::pow(du[j], k - 1));
        else
            d2u[j] = k == 1 ? num / (2.0 * hk * t) : kInf;
    }
    for (std::size_t j = 1; j < m; ++j) {
        const double a = knots[j - 1], I0 = inner[j - 1];
        auto integrand = [&](double t) {
            const double I = I0 + (t > a ? integrate(inner_rate, a, t, opts.rel_tol * 0.1).value : 0.0);
            return slope_from(t, I);
        };
        u[j] = u[j - 1] + integrate(integrand, a, knots[j], opts.rel_tol).value;
    }
    RadialProfile prof(knots, std::move(u), std::move(du), std::move(d2u));
    prof.set_slope([env, kappa, hk, eps, H, k](double t) -> RadialProfile::Slope {
        const double d = slope_excess(t, kappa, env, eps, H);
        const double p = d > -1.0 ? std::exp(std::log1p(d) / k) : 0.0;
        const double f = 1.0 + eps * env.C0 * std::pow(t, -0.5 * env.beta);
        if (p > 0.0) return {p, (f - std::pow(p, k)) / (2.0 * hk * t * std::pow(p, k - 1))};
        return {0.0, k == 1 ? f / (2.0 * hk * t) : kInf};
    });
    return prof;
}

double sphere_area(int n)
{
    return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

double ball_volume(int n)
{
    return std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

}  // namespace

// ------------------------------------------------------------- RadialProfile

RadialProfile::RadialProfile(std::vector<double> knots, std::vector<double> u, std::vector<double> du,
                             std::vector<double> d2u)
    : knots_(std::move(knots)), u_(std::move(u)), du_(std::move(du)), d2u_(std::move(d2u))
{
    const std::size_t m = knots_.size();
    if (m < 2 || u_.size() != m || du_.size() != m || d2u_.size() != m)
        throw ArgumentError("RadialProfile: need at least two knots and matching columns");
    for (std::size_t j = 1; j < m; ++j)
        if (!(knots_[j] > knots_[j - 1])) throw ArgumentError("RadialProfile: knots must increase strictly");
}

RadialProfile::Sample RadialProfile::sample(double tau) const
{
    if (tau < knots_.front()) return {u_.front(), 0.0, 0.0};
    if (tau == knots_.front()) return {u_.front(), du_.front(), d2u_.front()};
    if (tau > knots_.back() * (1.0 + 1e-14))
        throw ArgumentError(fmt::format("RadialProfile: tau = {} beyond the last knot {}", tau, knots_.back()));
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), tau);
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(it - knots_.begin()), knots_.size() - 1);
    const std::size_t i = j - 1;
    const double h = knots_[j] - knots_[i];
    const double t = std::clamp((tau - knots_[i]) / h, 0.0, 1.0);
    const double y0 = u_[i], y1 = u_[j], p0 = h * du_[i], p1 = h * du_[j];
    double c[6] = {y0, p0, 0.0, 0.0, 0.0, 0.0};
    if (std::isfinite(d2u_[i]) && std::isfinite(d2u_[j])) {
        const double q0 = h * h * d2u_[i], q1 = h * h * d2u_[j];
        c[2] = 0.5 * q0;
        c[3] = -10.0 * y0 - 6.0 * p0 - 1.5 * q0 + 10.0 * y1 - 4.0 * p1 + 0.5 * q1;
        c[4] = 15.0 * y0 + 8.0 * p0 + 1.5 * q0 - 15.0 * y1 + 7.0 * p1 - q1;
        c[5] = -6.0 * y0 - 3.0 * p0 - 0.5 * q0 + 6.0 * y1 - 3.0 * p1 + 0.5 * q1;
    } else {
        c[2] = -3.0 * y0 - 2.0 * p0 + 3.0 * y1 - p1;
        c[3] = 2.0 * y0 + p0 - 2.0 * y1 + p1;
    }
    double v = c[5], d = 5.0 * c[5], dd = 20.0 * c[5];
    for (int p = 4; p >= 0; --p) v = v * t + c[p];
    for (int p = 4; p >= 1; --p) d = d * t + p * c[p];
    for (int p = 4; p >= 2; --p) dd = dd * t + p * (p - 1) * c[p];
    if (slope_) {
        const auto s = slope_(tau);
        return {v, s.du, s.d2u};
    }
    return {v, d / h, dd / (h * h)};
}

void RadialProfile::write_csv(std::ostream& os) const
{
    os << "tau,u,du,d2u\n";
    for (std::size_t j = 0; j < knots_.size(); ++j)
        os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", knots_[j], u_[j], du_[j], d2u_[j]);
}

void RadialProfile::write_csv_file(const std::string& path) const
{
    std::ofstream os(path);
    if (!os) throw ArgumentError("cannot open for writing: " + path);
    write_csv(os);
}

// ------------------------------------------------------------ radial algebra

SymMatrix radial_hessian(const AkMatrix& A, std::span<const double> x, double uprime, double usecond)
{
    const int n = A.dim();
    SymMatrix H(n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double axi = A[i] * x[static_cast<std::size_t>(i)];
            const double axj = A[j] * x[static_cast<std::size_t>(j)];
            H(i, j) = (i == j ? uprime * A[i] : 0.0) + usecond * axi * axj;
        }
    return H;
}

double sigma_k_radial(const AkMatrix& A, std::span<const double> x, double uprime, double usecond)
{
    const int k = A.k();
    double sum = 0.0;
    for (int i = 0; i < A.dim(); ++i) {
        const double ax = A[i] * x[static_cast<std::size_t>(i)];
        sum += A.sigma_excluding(k - 1, i) * ax * ax;
    }
    return sigma_k(A.a(), k) * std::pow(uprime, k) + usecond * std::pow(uprime, k - 1) * sum;
}

// ------------------------------------------------------------------ profiles

RadialProfile build_upper_barrier(const AkMatrix& A, const TailEnvelope& env, const BarrierOptions& opts)
{
    return envelope_profile(A, env, -1.0, 0.0, opts);
}

RadialProfile build_lower_profile(const AkMatrix& A, const TailEnvelope& env, double H2, const BarrierOptions& opts)
{
    if (!(H2 >= 0.0)) throw ArgumentError("lower barrier: H2 must be nonnegative");
    return envelope_profile(A, env, 1.0, H2, opts);
}

double H_function(const TailEnvelope& env, double kappa, double H2, double tau)
{
    const double C0 = env.C0, s0 = env.s0, beta = env.beta;
    if (kappa_is_half_beta(kappa, beta))
        return H2 + C0 * kappa * std::log(tau) - C0 * kappa * std::log(s0) - std::pow(s0, kappa) - C0;
    const double d = 2.0 * kappa - beta;
    return H2 + C0 * beta / d * std::pow(tau, kappa - 0.5 * beta) - 2.0 * C0 * kappa / d * std::pow(s0, kappa - 0.5 * beta) -
           std::pow(s0, kappa);
}

double select_H2(const TailEnvelope& env, double kappa, int k, double slope_bound, double margin)
{
    if (!(kappa > 0.0)) throw ArgumentError("select_H2: kappa must be positive");
    if (!(margin > 1.0)) throw ArgumentError("select_H2: margin must exceed 1");
    const double sk = std::pow(env.s0, kappa);
    const double H2 = margin * std::max(sk * env.upper(env.s0), sk * std::pow(slope_bound, k));
    for (double tau = env.s0; tau <= 1e6; tau *= 1.01)
        if (!(H_function(env, kappa, H2, tau) > 0.0))
            throw ConstantsError(fmt::format("select_H2: H({}) <= 0 for H2 = {}", tau, H2));
    if (!(std::pow(H2 / sk, 1.0 / k) > slope_bound))
        throw ConstantsError("select_H2: exterior slope does not exceed the interior bound");
    return H2;
}

double v3_c2(int n, int k, const TailEnvelope& env, double rel_tol)
{
    const double a = 0.5 * env.s0;
    auto rate = [&](double r) { return n * std::pow(r, n - 1) * std::pow(env.upper(r), double(n) / k); };
    auto outer = [&](double t) { return t > a ? std::pow(integrate(rate, a, t, rel_tol * 0.1).value, 1.0 / n) : 0.0; };
    return integrate(outer, a, env.s0, rel_tol).value;
}

V3Profile build_v3(const AkMatrix& A, int n, int k, const TailEnvelope& env, double c1, int knots)
{
    if (!(c1 > 0.0)) throw ArgumentError("build_v3: c1 must be positive");
    if (knots < 3) throw ArgumentError("build_v3: need at least 3 knots");
    if (A.dim() != n) throw ArgumentError("build_v3: dimension mismatch");
    const double a = 0.5 * env.s0, s0 = env.s0;
    auto rate = [&](double r) { return n * std::pow(r, n - 1) * std::pow(env.upper(r), double(n) / k); };

    V3Profile out;
    out.c1 = c1;
    out.c2 = v3_c2(n, k, env);
    out.H1 = c1 / out.c2;
    std::vector<double> t(static_cast<std::size_t>(knots)), inner(t.size(), 0.0), u(t.size()), du(t.size()),
        d2u(t.size());
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = a + (s0 - a) * double(j) / double(knots - 1);
    for (std::size_t j = 1; j < t.size(); ++j) inner[j] = inner[j - 1] + integrate(rate, t[j - 1], t[j]).value;
    u[0] = -c1;
    for (std::size_t j = 1; j < t.size(); ++j) {
        const double lo = t[j - 1], I0 = inner[j - 1];
        auto g = [&](double x) {
            return std::pow(I0 + (x > lo ? integrate(rate, lo, x, 1e-10).value : 0.0), 1.0 / n);
        };
        u[j] = u[j - 1] + out.H1 * integrate(g, lo, t[j]).value;
    }
    for (std::size_t j = 0; j < t.size(); ++j) {
        du[j] = out.H1 * std::pow(inner[j], 1.0 / n);
        d2u[j] = inner[j] > 0.0 ? out.H1 * std::pow(inner[j], 1.0 / n - 1.0) * rate(t[j]) / n : kInf;
    }
    out.slope_at_s0 = du.back();
    const auto knots_t = t;
    out.profile = RadialProfile(std::move(t), std::move(u), std::move(du), std::move(d2u));
    out.profile.set_slope([knots_t, inner, env, n, k, H1 = out.H1](double x) -> RadialProfile::Slope {
        auto rate = [&](double r) { return n * std::pow(r, n - 1) * std::pow(env.upper(r), double(n) / k); };
        const auto it = std::upper_bound(knots_t.begin(), knots_t.end(), x);
        const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - knots_t.begin() - 1, 0));
        const double I = inner[i] + (x > knots_t[i] ? integrate(rate, knots_t[i], x, 1e-12).value : 0.0);
        if (!(I > 0.0)) return {0.0, kInf};
        return {H1 * std::pow(I, 1.0 / n), H1 * std::pow(I, 1.0 / n - 1.0) * rate(x) / n};
    });
    return out;
}

double alexandrov_constant(const AkMatrix& A, double s0)
{
    const int n = A.dim();
    const double lmax = std::sqrt(2.0 * s0 / A.a_min());
    const double lmin = std::sqrt(2.0 * s0 / A.a_max());
    return std::pow(n / sphere_area(n) * std::pow(2.0 * lmax, n - 1) * lmin, 1.0 / n);
}

double source_norm(const FModel& f, const AkMatrix& A, double s0)
{
    const int n = A.dim();
    const double p = double(n) / A.k();
    const int M = std::max(8, static_cast<int>(std::lround(std::pow(2.0, 18.0 / n))));
    std::vector<double> L(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
    double cell = 1.0;
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) {
        L[static_cast<std::size_t>(i)] = std::sqrt(2.0 * s0 / A[i]);
        h[static_cast<std::size_t>(i)] = 2.0 * L[static_cast<std::size_t>(i)] / M;
        cell *= h[static_cast<std::size_t>(i)];
        total *= static_cast<std::size_t>(M);
    }
    double sum = 0.0;
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t r = idx;
        for (int i = n - 1; i >= 0; --i) {
            const auto m = r % static_cast<std::size_t>(M);
            r /= static_cast<std::size_t>(M);
            x[static_cast<std::size_t>(i)] = -L[static_cast<std::size_t>(i)] + (double(m) + 0.5) * h[static_cast<std::size_t>(i)];
        }
        if (A.tau(x) < s0) sum += std::pow(f.value(x), p);
    }
    return std::pow(sum * cell, 1.0 / p);
}

double EtaBump::operator()(const AkMatrix& A, std::span<const double> x) const
{
    return scale * bump_profile(4.0 * A.tau(x) / s0);
}

EtaBump make_eta(const AkMatrix& A, double s0)
{
    const int n = A.dim();
    const double p = double(n) / A.k();
    // int g(tau(x)) dx = det(A)^{-1/2} n omega_n int_0^inf rho^{n-1} g(rho^2/2) drho
    auto g = [&](double rho) { return std::pow(rho, n - 1) * std::pow(bump_profile(2.0 * rho * rho / s0), p); };
    const double I = integrate(g, 0.0, std::sqrt(0.5 * s0), 1e-10).value;
    const double mass = n * ball_volume(n) * I / std::sqrt(A.det());
    return {s0, std::pow(mass, -1.0 / p)};
}

// ---------------------------------------------------------------- the pair

double BarrierPair::lower_value(const AkMatrix& A, std::span<const double> x) const
{
    const double t = A.tau(x);
    if (t >= env.s0) return lower.value(t);
    return v1 ? v1->interpolate(x) : v3.profile.value(t);
}

double BarrierPair::upper_value(const AkMatrix& A, std::span<const double> x) const
{
    return upper.value(A.tau(x));
}

std::pair<double, double> beta_bounds(const BarrierPair& pair, const AkMatrix& A, double tau_max)
{
    const auto& env = pair.env;
    if (!(tau_max >= 100.0 * env.s0)) throw ArgumentError("beta_bounds: tau_max must be at least 100 s0");
    if (tau_max > pair.upper.domain_end() * (1.0 + 1e-12) || tau_max > pair.lower.domain_end() * (1.0 + 1e-12))
        throw ArgumentError("beta_bounds: tau_max exceeds the tabulated profiles");
    const int k = pair.k;
    const double kappa = A.kappa();

    auto up_gap = [&](double t) { return -root_minus_one(slope_excess(t, kappa, env, -1.0, 0.0), k); };
    auto lo_gap = [&](double t) { return root_minus_one(slope_excess(t, kappa, env, 1.0, pair.H2), k); };
    for (double t : {tau_max, 2.0 * tau_max, 4.0 * tau_max, 16.0 * tau_max})
        if (up_gap(t) < 0.0 || lo_gap(t) < 0.0)
            throw NumericError(fmt::format("beta_bounds: tails not monotone beyond tau = {}; increase tau_max", t));

    double bplus = env.s0, bminus = kInf;
    for (double t : pair.upper.knots()) {
        if (t > tau_max) break;
        bplus = std::max(bplus, t - pair.upper.value(t));
    }
    for (double t : pair.lower.knots()) {
        if (t > tau_max) break;
        bminus = std::min(bminus, t - pair.lower.value(t));
    }
    bplus = std::max(bplus, tau_max - pair.upper.value(tau_max) + integrate_to_infinity(up_gap, tau_max).value);
    bminus = std::min(bminus, tau_max - pair.lower.value(tau_max) - integrate_to_infinity(lo_gap, tau_max).value);
    if (pair.v1) {
        std::vector<double> x(static_cast<std::size_t>(A.dim()));
        for (std::size_t i : pair.v1->interior()) {
            pair.v1->spec().coords(i, x);
            bminus = std::min(bminus, A.tau(x) - (*pair.v1)[i]);
        }
    }
    return {bminus, bplus};
}

BarrierPair build_barriers(const FModel& f, const AkMatrix& A, const TailEnvelope& env, const BarrierOptions& opts)
{
    env.validate();
    if (f.dim() != A.dim()) throw ArgumentError("build_barriers: dimension mismatch");
    const int n = A.dim(), k = A.k();
    BarrierPair pair;
    pair.k = k;
    pair.env = env;
    pair.kappa = A.kappa();
    pair.hk = A.hk();
    pair.tau_max = opts.tau_max > 0.0 ? opts.tau_max : 1e4 * env.s0;
    if (pair.tau_max < 100.0 * env.s0) throw ArgumentError("build_barriers: tau_max must be at least 100 s0");
    if (!(pair.kappa > 1.0))
        throw ConstantsError(fmt::format("kappa = {} <= 1: the upper barrier gap tau - u is unbounded", pair.kappa));

    pair.upper = build_upper_barrier(A, env, opts);

    const double c2 = v3_c2(n, k, env, opts.rel_tol);
    const double target = c2 * std::pow(A.det(), -1.0 / n);
    const double C = alexandrov_constant(A, env.s0);
    const double fnorm = source_norm(f, A, env.s0);
    auto c1_of = [&](double c0) { return C * std::pow(fnorm + c0, 1.0 / k); };
    double c0 = 1.0;
    if (opts.c0_override) {
        c0 = *opts.c0_override;
        if (!(c0 > 0.0)) throw ArgumentError("build_barriers: c0 must be positive");
    } else {
        for (int i = 0; i < 200 && c1_of(c0) < target; ++i) c0 *= 2.0;
    }
    pair.c0_bump = c0;
    pair.c1 = c1_of(c0);
    if (pair.c1 < target)
        throw ConstantsError(fmt::format("c1 = {} below c2 det(A)^(-1/n) = {}; increase c0", pair.c1, target));
    pair.v3 = build_v3(A, n, k, env, pair.c1);
    pair.c2 = pair.v3.c2;
    pair.H1 = pair.v3.H1;

    pair.H2 = opts.H2_override ? *opts.H2_override
                               : select_H2(env, pair.kappa, k, pair.v3.slope_at_s0, opts.H2_margin);
    pair.lower = build_lower_profile(A, env, pair.H2, opts);
    pair.slope_outside = pair.lower.first().front();

    const auto eta = make_eta(A, env.s0);
    pair.eta_scale = eta.scale;
    const GridSpec spec = GridSpec::ellipsoid(std::vector<double>(A.a().begin(), A.a().end()), env.s0, opts.v1_nodes);
    const auto src = f.as_source();
    ContinuationProblem prob{spec,
                             [src, eta, A, c0](std::span<const double> x) { return src(x) + c0 * eta(A, x); },
                             f.inf_bound(), false, k, level_boundary(A, env.s0, 0.0)};
    pair.v1 = continuation_solve(prob, opts.solver).u;

    // One-sided interior slopes d v1 / d tau on the boundary of D_{s0}.
    const double lmin = std::sqrt(2.0 * env.s0 / A.a_max());
    const double theta = std::min(0.25, 2.0 * spec.max_spacing() / lmin);
    std::vector<double> dir(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
    double slope = -kInf;
    auto probe = [&] {
        const double scale = std::sqrt(env.s0 / A.tau(dir));
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = (1.0 - theta) * scale * dir[static_cast<std::size_t>(i)];
        const double tin = A.tau(x);
        slope = std::max(slope, (0.0 - pair.v1->interpolate(x)) / (env.s0 - tin));
    };
    for (int i = 0; i < n; ++i)
        for (double sgn : {-1.0, 1.0}) {
            std::fill(dir.begin(), dir.end(), 0.0);
            dir[static_cast<std::size_t>(i)] = sgn;
            probe();
        }
    for (int mask = 0; mask < (1 << n); ++mask) {
        for (int i = 0; i < n; ++i) dir[static_cast<std::size_t>(i)] = (mask >> i) & 1 ? -1.0 : 1.0;
        probe();
    }
    pair.slope_inside = slope;
    if (!(pair.slope_inside < pair.slope_outside))
        throw ConstantsError(fmt::format(
            "gradient jump at the boundary of D_s0 fails: interior slope {:.6g} >= exterior slope {:.6g}; "
            "increase H2 or c0",
            pair.slope_inside, pair.slope_outside));

    std::tie(pair.beta_minus, pair.beta_plus) = beta_bounds(pair, A, pair.tau_max);
    if (!std::isfinite(pair.beta_minus) || !std::isfinite(pair.beta_plus))
        throw ConstantsError("beta bounds are not finite");
    return pair;
}

}  // namespace khess
