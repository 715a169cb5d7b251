#include "khess/dirichlet.hpp"

#include "khess/errors.hpp"
#include "khess/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <fmt/format.h>

namespace khess {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

SymMatrix hessian_at(std::span<const double> u, std::size_t p, const GridSpec& spec)
{
    const int n = spec.dim();
    SymMatrix H(n);
    for (int i = 0; i < n; ++i) {
        const std::size_t si = spec.stride(i);
        const double hi = spec.spacing(i);
        H(i, i) = (u[p + si] - 2.0 * u[p] + u[p - si]) / (hi * hi);
        for (int j = i + 1; j < n; ++j) {
            const std::size_t sj = spec.stride(j);
            const double hj = spec.spacing(j);
            H(i, j) = (u[p + si + sj] - u[p + si - sj] - u[p - si + sj] + u[p - si - sj]) / (4.0 * hi * hj);
        }
    }
    return H;
}

// Below the floor F is continued by sigma_min^{1/k} - mu, where mu >= 0 is the
// smallest shift with M + mu I admissible. The continuation is monotone in M and
// its gradient T_{k-1}(M + mu I) / trace is positive semidefinite.
OperatorValue extended_operator(const SymMatrix& m, int k, double sigma_min)
{
    OperatorValue op = evaluate_operator(m, k, sigma_min);
    if (op.admissible) return op;
    auto shifted = [&](double t) {
        SymMatrix s = m;
        for (int i = 0; i < m.dim(); ++i) s(i, i) += t;
        return s;
    };
    double lo = 0.0, hi = 1.0;
    while (!evaluate_operator(shifted(hi), k, sigma_min).admissible) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) return op;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (evaluate_operator(shifted(mid), k, sigma_min).admissible ? hi : lo) = mid;
    }
    const SymMatrix T = newton_tensor(shifted(hi), k);
    op.value = std::pow(sigma_min, 1.0 / k) - hi;
    op.gradient = T * (1.0 / T.trace());
    return op;
}

// Discrete system restricted to the interior unknowns of one grid.
class System {
public:
    System(const GridField& u, std::vector<double> rhs_root, int k, double sigma_min)
        : spec_(u.spec()), interior_(u.interior()), row_(u.size(), -1), rhs_(std::move(rhs_root)), k_(k),
          sigma_min_(sigma_min)
    {
        for (std::size_t r = 0; r < interior_.size(); ++r) row_[interior_[r]] = static_cast<long>(r);
    }

    std::size_t unknowns() const noexcept { return interior_.size(); }
    const std::vector<std::size_t>& interior() const noexcept { return interior_; }

    // Residual per interior row; gradients are filled when requested.
    ResidualStats evaluate(std::span<const double> u, Vec& r, std::vector<SymMatrix>* grads) const
    {
        const std::size_t m = interior_.size();
        r.resize(static_cast<Eigen::Index>(m));
        std::vector<double> sig(m);
        std::vector<char> ok(m);
        if (grads) grads->resize(m);
        parallel_for(m, [&](std::size_t b, std::size_t e) {
            for (std::size_t q = b; q < e; ++q) {
                const auto op = extended_operator(hessian_at(u, interior_[q], spec_), k_, sigma_min_);
                r[static_cast<Eigen::Index>(q)] = op.value - rhs_[q];
                sig[q] = op.sigma;
                ok[q] = op.admissible ? 1 : 0;
                if (grads) (*grads)[q] = op.gradient;
            }
        });
        ResidualStats s;
        s.min_sigma = m ? std::numeric_limits<double>::infinity() : 0.0;
        for (std::size_t q = 0; q < m; ++q) {
            s.min_sigma = std::min(s.min_sigma, sig[q]);
            if (!ok[q]) ++s.violations;
        }
        s.sup = m ? r.lpNorm<Eigen::Infinity>() : 0.0;
        s.l2 = r.norm();
        return s;
    }

    SpMat jacobian(const std::vector<SymMatrix>& grads) const
    {
        const int n = spec_.dim();
        const std::size_t m = interior_.size();
        const std::size_t width = static_cast<std::size_t>(2 * n * n + 1);
        std::vector<Eigen::Triplet<double>> slots(m * width, Eigen::Triplet<double>(0, 0, 0.0));
        std::vector<int> used(m, 0);
        parallel_for(m, [&](std::size_t b, std::size_t e) {
            for (std::size_t q = b; q < e; ++q) {
                const std::size_t p = interior_[q];
                const SymMatrix& G = grads[q];
                auto* out = &slots[q * width];
                int c = 0;
                auto put = [&](std::size_t node, double v) {
                    const long col = row_[node];
                    if (col >= 0) out[c++] = Eigen::Triplet<double>(static_cast<int>(q), static_cast<int>(col), v);
                };
                double diag = 0.0;
                for (int i = 0; i < n; ++i) {
                    const std::size_t si = spec_.stride(i);
                    const double w = G(i, i) / (spec_.spacing(i) * spec_.spacing(i));
                    diag -= 2.0 * w;
                    put(p + si, w);
                    put(p - si, w);
                    for (int j = i + 1; j < n; ++j) {
                        const std::size_t sj = spec_.stride(j);
                        const double x = G(i, j) / (2.0 * spec_.spacing(i) * spec_.spacing(j));
                        put(p + si + sj, x);
                        put(p - si - sj, x);
                        put(p + si - sj, -x);
                        put(p - si + sj, -x);
                    }
                }
                put(p, diag);
                used[q] = c;
            }
        });
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(m * width);
        for (std::size_t q = 0; q < m; ++q)
            for (int c = 0; c < used[q]; ++c) trip.push_back(slots[q * width + static_cast<std::size_t>(c)]);
        SpMat J(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        J.setFromTriplets(trip.begin(), trip.end());
        return J;
    }

private:
    const GridSpec& spec_;
    std::vector<std::size_t> interior_;
    std::vector<long> row_;
    std::vector<double> rhs_;
    int k_;
    double sigma_min_;
};

Vec linear_solve(const SpMat& J, const Vec& b, const SolverOptions& opts)
{
    Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>> it;
    it.setTolerance(opts.linear_tol);
    it.setMaxIterations(opts.linear_max_iterations);
    it.compute(J);
    if (it.info() == Eigen::Success) {
        Vec x = it.solve(b);
        if (it.info() == Eigen::Success && x.allFinite() && (J * x - b).norm() <= opts.linear_tol * b.norm() * 10.0)
            return x;
    }
    Eigen::SparseLU<SpMat> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw NumericError("Newton system is singular");
    Vec x = lu.solve(b);
    if (lu.info() != Eigen::Success || !x.allFinite()) throw NumericError("Newton system solve failed");
    return x;
}

std::vector<double> rhs_root(const GridField& u, const SourceFn& f, int k)
{
    const auto& in = u.interior();
    std::vector<double> out(in.size());
    std::vector<double> x(static_cast<std::size_t>(u.spec().dim()));
    for (std::size_t q = 0; q < in.size(); ++q) {
        u.spec().coords(in[q], x);
        const double v = f(x);
        if (!(v > 0.0) || !std::isfinite(v))
            throw PreconditionError(fmt::format("right-hand side {} is not positive at an interior node", v));
        out[q] = std::pow(v, 1.0 / k);
    }
    return out;
}

SolveReport newton_core(GridField& u, std::vector<double> rhs, int k, const SolverOptions& opts)
{
    SolveReport rep;
    System sys(u, std::move(rhs), k, opts.sigma_min);
    const auto& in = sys.interior();
    Vec r;
    std::vector<SymMatrix> grads;
    auto stats = sys.evaluate(u.values(), r, &grads);
    std::vector<double> trial(u.values().begin(), u.values().end());
    Vec rt;
    for (;;) {
        rep.residual = stats.sup;
        rep.min_sigma = stats.min_sigma;
        rep.cone_violations = stats.violations;
        if (stats.sup <= opts.tol && stats.violations == 0) {
            rep.converged = true;
            return rep;
        }
        if (stats.sup <= opts.tol) {
            rep.message = fmt::format("residual {:.3e} reached with {} nodes below the sigma floor {}", stats.sup,
                                      stats.violations, opts.sigma_min);
            throw NonconvergenceError(rep.message, rep);
        }
        if (rep.iterations >= opts.max_iterations) {
            rep.message = fmt::format("no convergence in {} Newton iterations (residual {:.3e})", rep.iterations,
                                      stats.sup);
            throw NonconvergenceError(rep.message, rep);
        }
        const Vec delta = linear_solve(sys.jacobian(grads), -r, opts);
        double lambda = 1.0;
        bool accepted = false;
        ResidualStats ts;
        for (int h = 0; h <= opts.max_halvings; ++h, lambda *= 0.5) {
            for (std::size_t q = 0; q < in.size(); ++q)
                trial[in[q]] = u[in[q]] + lambda * delta[static_cast<Eigen::Index>(q)];
            ts = sys.evaluate(trial, rt, nullptr);
            const bool cone_ok = ts.violations == 0 || (stats.violations > 0 && ts.violations <= stats.violations);
            if (cone_ok && ts.l2 <= (1.0 - opts.armijo * lambda) * stats.l2) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            rep.message = fmt::format("damping exhausted after {} halvings at iteration {} (residual {:.3e})",
                                      opts.max_halvings, rep.iterations, stats.sup);
            throw NonconvergenceError(rep.message, rep);
        }
        for (std::size_t q = 0; q < in.size(); ++q) u[in[q]] = trial[in[q]];
        rep.damping.push_back(lambda);
        ++rep.iterations;
        stats = sys.evaluate(u.values(), r, &grads);
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SymMatrix discrete_hessian(const GridField& u, std::size_t node)
{
    if (node >= u.size() || u.tag(node) != NodeTag::Interior)
        throw StateError("discrete_hessian: node is not interior, stencil would leave the grid");
    return hessian_at(u.values(), node, u.spec());
}

GridField residual(const GridField& u, const SourceFn& f, int k, double sigma_min, ResidualStats* stats)
{
    System sys(u, rhs_root(u, f, k), k, sigma_min);
    Vec r;
    const auto s = sys.evaluate(u.values(), r, nullptr);
    if (stats) *stats = s;
    GridField out(u.spec(), 0.0);
    for (std::size_t q = 0; q < sys.interior().size(); ++q) out[sys.interior()[q]] = r[static_cast<Eigen::Index>(q)];
    return out;
}

GridField jacobian_apply(const GridField& u, const GridField& w, int k, double sigma_min)
{
    if (!(u.spec() == w.spec())) throw ArgumentError("jacobian_apply: grid mismatch");
    System sys(u, std::vector<double>(u.interior().size(), 0.0), k, sigma_min);
    Vec r;
    std::vector<SymMatrix> grads;
    sys.evaluate(u.values(), r, &grads);
    const SpMat J = sys.jacobian(grads);
    Vec x(static_cast<Eigen::Index>(sys.unknowns()));
    for (std::size_t q = 0; q < sys.unknowns(); ++q) x[static_cast<Eigen::Index>(q)] = w[sys.interior()[q]];
    const Vec y = J * x;
    GridField out(u.spec(), 0.0);
    for (std::size_t q = 0; q < sys.unknowns(); ++q) out[sys.interior()[q]] = y[static_cast<Eigen::Index>(q)];
    return out;
}

SolveResult newton_solve(GridField u0, const SourceFn& f, int k, const SolverOptions& opts)
{
    const auto t0 = std::chrono::steady_clock::now();
    auto rhs = rhs_root(u0, f, k);
    SolveReport rep;
    try {
        rep = newton_core(u0, std::move(rhs), k, opts);
    } catch (const NonconvergenceError& e) {
        SolveReport r = e.report();
        r.wall_seconds = seconds_since(t0);
        throw NonconvergenceError(e.what(), r);
    }
    rep.stages = {1.0};
    rep.wall_seconds = seconds_since(t0);
    return {std::move(u0), std::move(rep)};
}

SourceFn level_boundary(const AkMatrix& A, double s, double value)
{
    return [A, s, value](std::span<const double> x) { return A.tau(x) - s + value; };
}

SolveResult continuation_solve(const ContinuationProblem& p, const SolverOptions& opts, const GridField* warm)
{
    const auto t0 = std::chrono::steady_clock::now();
    if (!(p.f_inf > 0.0))
        throw PreconditionError(fmt::format("right-hand side infimum {} is not positive", p.f_inf));
    if (!p.boundary) throw ArgumentError("continuation_solve: boundary data missing");

    const GridField start(p.spec, p.boundary);
    std::vector<double> fvals(start.interior().size());
    {
        std::vector<double> x(static_cast<std::size_t>(p.spec.dim()));
        for (std::size_t q = 0; q < fvals.size(); ++q) {
            p.spec.coords(start.interior()[q], x);
            fvals[q] = p.f_unit ? 1.0 : p.f(x);
        }
    }
    auto stage_rhs = [&](double t) {
        std::vector<double> r(fvals.size());
        for (std::size_t q = 0; q < r.size(); ++q) {
            const double v = 1.0 + t * (fvals[q] - 1.0);
            if (!(v > 0.0)) throw PreconditionError("continuation right-hand side lost positivity");
            r[q] = std::pow(v, 1.0 / p.k);
        }
        return r;
    };

    SolveReport total;
    auto absorb = [&](const SolveReport& r, double t) {
        total.iterations += r.iterations;
        total.damping.insert(total.damping.end(), r.damping.begin(), r.damping.end());
        total.residual = r.residual;
        total.min_sigma = r.min_sigma;
        total.cone_violations = r.cone_violations;
        total.stages.push_back(t);
    };
    auto absorb_failure = [&](const SolveReport& r) {
        total.iterations += r.iterations;
        total.damping.insert(total.damping.end(), r.damping.begin(), r.damping.end());
        total.residual = r.residual;
        total.min_sigma = r.min_sigma;
        total.cone_violations = r.cone_violations;
    };
    auto fail = [&](const std::string& msg) {
        total.converged = false;
        total.message = msg;
        total.wall_seconds = seconds_since(t0);
        throw NonconvergenceError(msg, total);
    };

    if (warm) {
        if (!(warm->spec() == p.spec)) throw ArgumentError("continuation_solve: warm start grid mismatch");
        GridField u = *warm;
        for (std::size_t i = 0; i < u.size(); ++i)
            if (u.tag(i) != NodeTag::Interior) u[i] = start[i];
        try {
            const auto r = newton_core(u, stage_rhs(1.0), p.k, opts);
            absorb(r, 1.0);
            total.converged = true;
            total.warm_started = true;
            total.wall_seconds = seconds_since(t0);
            return {std::move(u), std::move(total)};
        } catch (const NonconvergenceError& e) {
            absorb_failure(e.report());
        }
    }

    GridField u = start;
    if (p.f_unit) {
        try {
            absorb(newton_core(u, stage_rhs(1.0), p.k, opts), 1.0);
        } catch (const NonconvergenceError& e) {
            absorb_failure(e.report());
            fail(e.what());
        }
        total.converged = true;
        total.wall_seconds = seconds_since(t0);
        return {std::move(u), std::move(total)};
    }

    try {
        absorb(newton_core(u, stage_rhs(0.0), p.k, opts), 0.0);
    } catch (const NonconvergenceError& e) {
        absorb_failure(e.report());
        fail(std::string("t = 0 stage failed: ") + e.what());
    }
    double t = 0.0, step = 0.25;
    while (t < 1.0) {
        const double next = std::min(1.0, t + step);
        GridField trial = u;
        try {
            absorb(newton_core(trial, stage_rhs(next), p.k, opts), next);
            u = std::move(trial);
            t = next;
        } catch (const NonconvergenceError& e) {
            absorb_failure(e.report());
            step *= 0.5;
            if (step < opts.min_step * (1.0 - 1e-12))
                fail(fmt::format("continuation stalled at t = {} (minimum step {} reached): {}", t, opts.min_step,
                                 e.what()));
        }
    }
    total.converged = true;
    total.wall_seconds = seconds_since(t0);
    return {std::move(u), std::move(total)};
}

SolveResult continuation_solve(const GridSpec& spec, const FModel& f, int k, const AkMatrix& A,
                               const SolverOptions& opts, const GridField* warm)
{
    if (f.dim() != spec.dim() || A.dim() != spec.dim()) throw ArgumentError("continuation_solve: dimension mismatch");
    if (k != A.k()) throw ArgumentError("continuation_solve: k does not match the matrix normalization");
    ContinuationProblem p{spec, f.as_source(), f.inf_bound(), f.is_unit(), k, nullptr};
    if (spec.kind() == GridSpec::Kind::Ellipsoid)
        p.boundary = level_boundary(A, spec.level(), spec.level());
    else
        p.boundary = [A](std::span<const double> x) { return A.tau(x); };
    return continuation_solve(p, opts, warm);
}

double comparison_check(const GridField& u, const GridField& v)
{
    if (!(u.spec() == v.spec()) || u.mask() != v.mask()) throw ArgumentError("comparison_check: grid mismatch");
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i : u.interior()) m = std::min(m, u[i] - v[i]);
    return m;
}

}  // namespace khess
