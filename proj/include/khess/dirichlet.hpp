#pragma once

// Central-difference discretization of F(D^2 u) = f^{1/k} with damped Newton
// and homotopy continuation in f_t = 1 + t (f - 1).

#include "khess/fmodel.hpp"
#include "khess/grid.hpp"
#include "khess/symfunc.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace khess {

struct SolverOptions {
    double tol = 1e-9;  ///< residual sup-norm
    int max_iterations = 100;
    int max_halvings = 30;
    double armijo = 1e-4;
    double sigma_min = kDefaultSigmaMin;
    double linear_tol = 1e-10;
    int linear_max_iterations = 1000;
    double min_step = 1.0 / 64.0;
};

struct SolveReport {
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> damping;  ///< accepted step length per Newton iteration
    double min_sigma = 0.0;
    int cone_violations = 0;
    std::vector<double> stages;  ///< continuation parameters reached
    bool warm_started = false;
    double wall_seconds = 0.0;
    std::string message;
};

class NonconvergenceError : public std::runtime_error {
public:
    NonconvergenceError(const std::string& what, SolveReport report)
        : std::runtime_error(what), report_(std::move(report)) {}
    const SolveReport& report() const noexcept { return report_; }

private:
    SolveReport report_;
};

struct SolveResult {
    GridField u;
    SolveReport report;
};

/// Central-difference Hessian at an interior node; exact on quadratics.
SymMatrix discrete_hessian(const GridField& u, std::size_t node);

struct ResidualStats {
    double sup = 0.0;
    double l2 = 0.0;
    double min_sigma = 0.0;
    int violations = 0;
};

/// F(D^2 u) - f^{1/k} at interior nodes and 0 elsewhere; F uses the sigma floor.
GridField residual(const GridField& u, const SourceFn& f, int k, double sigma_min = kDefaultSigmaMin,
                   ResidualStats* stats = nullptr);

/// Jacobian of the residual applied to a field perturbation w (interior
/// entries only are read; the result is zero off the interior).
GridField jacobian_apply(const GridField& u, const GridField& w, int k, double sigma_min = kDefaultSigmaMin);

/// Damped Newton from u0 with the boundary values of u0 held fixed.
/// Throws NonconvergenceError carrying the report.
SolveResult newton_solve(GridField u0, const SourceFn& f, int k, const SolverOptions& opts = {});

/// Dirichlet data x -> tau(x) - s + value: the quadratic extension that equals
/// `value` on the boundary of D_s.
SourceFn level_boundary(const AkMatrix& A, double s, double value);

struct ContinuationProblem {
    GridSpec spec;
    SourceFn f;
    double f_inf = 1.0;
    bool f_unit = false;
    int k = 1;
    SourceFn boundary;  ///< also the t = 0 initial guess
};

/// Homotopy solve; with `warm` a direct t = 1 attempt precedes the march.
SolveResult continuation_solve(const ContinuationProblem& p, const SolverOptions& opts = {},
                               const GridField* warm = nullptr);

/// Boxes use boundary data tau(x); ellipsoids D_s use tau(x) - s + s.
SolveResult continuation_solve(const GridSpec& spec, const FModel& f, int k, const AkMatrix& A,
                               const SolverOptions& opts = {}, const GridField* warm = nullptr);

/// min over interior nodes of u - v.
double comparison_check(const GridField& u, const GridField& v);

}  // namespace khess
