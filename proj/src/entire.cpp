#include "khess/entire.hpp"

#include "khess/errors.hpp"
#include "khess/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <fmt/format.h>

namespace khess {

namespace {

double a_norm(const AkMatrix& A, std::span<const double> x)
{
    return std::sqrt(2.0 * A.tau(x));
}

std::vector<std::vector<double>> corners(const Box& K)
{
    const std::size_t n = K.lower.size();
    std::vector<std::vector<double>> out;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        std::vector<double> c(n);
        for (std::size_t i = 0; i < n; ++i) c[i] = (mask >> i) & 1 ? K.upper[i] : K.lower[i];
        out.push_back(std::move(c));
    }
    return out;
}

// Initial guess on the new grid: previous solution where it is defined, tau elsewhere.
GridField warm_field(const GridSpec& spec, const GridField& prev, const AkMatrix& A)
{
    const auto& ps = prev.spec();
    return GridField(spec, [&](std::span<const double> x) {
        for (int i = 0; i < ps.dim(); ++i)
            if (x[static_cast<std::size_t>(i)] < ps.lower(i) || x[static_cast<std::size_t>(i)] > ps.upper(i))
                return A.tau(x);
        return prev.interpolate(x);
    });
}

}  // namespace

HessianProblem HessianProblem::make(const AkMatrix& A, const FModel& f)
{
    HessianProblem p{A.dim(), A.k(), A, f, TailEnvelope{}};
    p.validate();
    p.env = tail_envelope(f, A);
    return p;
}

void HessianProblem::validate() const
{
    if (n < 3) throw ArgumentError(fmt::format("entire solutions need n >= 3, got n = {}", n));
    if (k < 1 || k > n) throw ArgumentError(fmt::format("k = {} out of range 1..{}", k, n));
    if (A.dim() != n || f.dim() != n || A.k() != k) throw ArgumentError("problem dimensions are inconsistent");
    if (!(f.inf_bound() > 0.0)) throw ArgumentError("inf f must be positive");
}

std::vector<double> EntireRun::cauchy_gaps() const
{
    std::vector<double> g;
    for (const auto& st : stages)
        if (st.converged && st.gap_previous >= 0.0) g.push_back(st.gap_previous);
    return g;
}

double expanded_box_tau(const AkMatrix& A, const Box& K)
{
    double r = 0.0;
    for (const auto& c : corners(K)) r = std::max(r, a_norm(A, c));
    r += std::sqrt(A.a_max());
    return 0.5 * r * r;
}

std::vector<double> default_s_list(const HessianProblem& p, const Box& K, int count)
{
    if (count < 1) throw ArgumentError("default_s_list: count must be positive");
    double r2 = 0.0;
    for (const auto& c : corners(K)) {
        double q = 0.0;
        for (double v : c) q += v * v;
        r2 = std::max(r2, q);
    }
    std::vector<double> s{std::max(p.env.s0, 4.0 * r2 * p.A.a_max())};
    while (static_cast<int>(s.size()) < count) s.push_back(2.0 * s.back());
    return s;
}

double sandwich_check(const GridField& u_s, const BarrierPair& pair, const AkMatrix& A)
{
    double worst = std::numeric_limits<double>::infinity();
    std::vector<double> x(static_cast<std::size_t>(u_s.spec().dim()));
    for (std::size_t i : u_s.interior()) {
        u_s.spec().coords(i, x);
        const double lo = pair.lower_value(A, x) + pair.beta_minus;
        const double hi = pair.upper_value(A, x) + pair.beta_plus;
        worst = std::min({worst, u_s[i] - lo, hi - u_s[i]});
    }
    return worst;
}

EntireRun run_nested(const HessianProblem& p, const std::vector<double>& s_list, const Box& K,
                     const NestedOptions& opts, const BarrierPair* barriers)
{
    p.validate();
    if (s_list.size() < 3) throw ArgumentError("run_nested: need at least three s values");
    for (std::size_t i = 1; i < s_list.size(); ++i)
        if (!(s_list[i] > s_list[i - 1])) throw ArgumentError("run_nested: s values must increase strictly");
    if (s_list.front() < p.env.s0)
        throw ArgumentError(fmt::format("run_nested: first s = {} is below s0 = {}", s_list.front(), p.env.s0));
    if (K.lower.size() != static_cast<std::size_t>(p.n) || K.upper.size() != K.lower.size())
        throw ArgumentError("run_nested: compact box dimension mismatch");

    EntireRun run{p, s_list, K, std::nullopt, std::nullopt, {}, 0.0, 0.0, false, {}};
    const double s_min = s_list.front();
    const double tau_K1 = expanded_box_tau(p.A, K);
    run.geometry_margin = (s_min - 1.0) - tau_K1;
    if (run.geometry_margin <= 0.0)
        throw PreconditionError(fmt::format(
            "compact K plus a unit ball reaches tau = {:.6g}, not inside D_(s_min - 1) with s_min = {}", tau_K1,
            s_min));
    run.compact_spec = GridSpec::box(K.lower, K.upper, opts.compact_nodes);
    run.barriers = barriers ? *barriers : build_barriers(p.f, p.A, p.env, opts.barriers);
    const auto& pair = *run.barriers;
    const double C1 = std::max(std::abs(pair.beta_minus), std::abs(pair.beta_plus));
    double tau_K = 0.0;
    for (const auto& c : corners(K)) tau_K = std::max(tau_K, p.A.tau(c));
    run.paper_margin = s_min - (tau_K + C1);

    const std::vector<double> a(p.A.a().begin(), p.A.a().end());
    run.stages.resize(s_list.size());
    for (std::size_t i = 0; i < s_list.size(); ++i) run.stages[i].s = s_list[i];

    auto solve_stage = [&](std::size_t i, const GridField* warm) {
        StageResult& st = run.stages[i];
        const GridSpec spec = GridSpec::ellipsoid(a, st.s, opts.nodes);
        st.h = spec.max_spacing();
        st.slack = opts.slack_factor * st.h * st.h;
        std::optional<GridField> guess;
        if (warm) guess = warm_field(spec, *warm, p.A);
        try {
            auto res = continuation_solve(spec, p.f, p.k, p.A, opts.solver, guess ? &*guess : nullptr);
            st.u = std::move(res.u);
            st.report = std::move(res.report);
            st.converged = true;
        } catch (const NonconvergenceError& e) {
            st.report = e.report();
            st.converged = false;
        }
    };

    if (opts.parallel_stages && threads() > 1) {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(s_list.size());
        for (std::size_t i = 0; i < s_list.size(); ++i)
            pool.emplace_back([&, i] {
                try {
                    solve_stage(i, nullptr);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    } else {
        for (std::size_t i = 0; i < s_list.size(); ++i) {
            const GridField* warm = opts.warm_start && i > 0 && run.stages[i - 1].converged ? &*run.stages[i - 1].u : nullptr;
            solve_stage(i, warm);
            if (!run.stages[i].converged) break;
        }
    }

    std::vector<double> x(static_cast<std::size_t>(p.n));
    const StageResult* prev = nullptr;
    for (auto& st : run.stages) {
        if (!st.converged) {
            run.failed = true;
            run.failure = fmt::format("solve at s = {} did not converge: {}", st.s, st.report.message);
            break;
        }
        st.margin = sandwich_check(*st.u, pair, p.A);
        st.sandwich_ok = st.margin >= -st.slack;
        st.sup_deviation = 0.0;
        for (std::size_t i : st.u->interior()) {
            st.u->spec().coords(i, x);
            st.sup_deviation = std::max(st.sup_deviation, std::abs((*st.u)[i] - p.A.tau(x)));
        }
        st.bound_ok = st.sup_deviation <= C1 + st.slack;
        st.on_compact = resample(*st.u, *run.compact_spec);
        if (prev) {
            double g = 0.0;
            for (std::size_t i = 0; i < st.on_compact->size(); ++i)
                g = std::max(g, std::abs((*st.on_compact)[i] - (*prev->on_compact)[i]));
            st.gap_previous = g;
        }
        prev = &st;
        if (!st.sandwich_ok && !run.failed) {
            run.failed = true;
            run.failure = fmt::format("sandwich margin {:.6g} below -{:.3g} at s = {}", st.margin, st.slack, st.s);
        }
    }
    return run;
}

LimitResult extract_limit(const EntireRun& run)
{
    const StageResult* last = nullptr;
    int good = 0;
    for (const auto& st : run.stages)
        if (st.converged && st.on_compact) {
            last = &st;
            ++good;
        }
    if (good < 2) throw StateError("extract_limit: fewer than two converged stages");
    const auto& pair = *run.barriers;
    LimitResult out{*last->on_compact, last->gap_previous,
                    std::max(std::abs(pair.beta_minus), std::abs(pair.beta_plus)), 0.0, false};
    const auto& spec = out.u.spec();
    std::vector<double> x(static_cast<std::size_t>(spec.dim()));
    for (std::size_t i = 0; i < out.u.size(); ++i) {
        spec.coords(i, x);
        out.sup_deviation = std::max(out.sup_deviation, std::abs(out.u[i] - run.problem.A.tau(x)));
    }
    out.bound_ok = out.sup_deviation <= out.bound + last->slack;
    return out;
}

}  // namespace khess
