#pragma once

// Nested solves on growing sublevel sets D_s, the two-sided barrier check
// and extraction of the limiting entire solution on a compact box.

#include "khess/dirichlet.hpp"
#include "khess/fmodel.hpp"
#include "khess/grid.hpp"
#include "khess/radial_barriers.hpp"
#include "khess/symfunc.hpp"

#include <optional>
#include <string>
#include <vector>

namespace khess {

struct HessianProblem {
    int n = 3;
    int k = 2;
    AkMatrix A;
    FModel f;
    TailEnvelope env;

    /// Envelope from tail_envelope(f, A); throws ArgumentError unless n >= 3,
    /// 1 <= k <= n and inf f > 0.
    static HessianProblem make(const AkMatrix& A, const FModel& f);
    void validate() const;
};

struct Box {
    std::vector<double> lower, upper;
};

struct NestedOptions {
    int nodes = 33;
    int compact_nodes = 17;
    bool warm_start = true;
    bool parallel_stages = false;  ///< independent cold starts, one thread per stage
    double slack_factor = 5.0;     ///< sandwich slack is slack_factor * h^2
    SolverOptions solver;
    BarrierOptions barriers;
};

struct StageResult {
    double s = 0.0;
    bool converged = false;
    std::optional<GridField> u;
    std::optional<GridField> on_compact;
    SolveReport report;
    double h = 0.0;
    double slack = 0.0;
    double margin = 0.0;          ///< sandwich_check value
    bool sandwich_ok = false;
    double sup_deviation = 0.0;   ///< sup over D_s of |u_s - tau|
    bool bound_ok = false;        ///< sup_deviation <= max(|beta-|, |beta+|) + slack
    double gap_previous = -1.0;   ///< sup over K of |u_s - u_{s_prev}|; -1 for the first stage
};

struct EntireRun {
    HessianProblem problem;
    std::vector<double> s_values;
    Box compact;
    std::optional<GridSpec> compact_spec;
    std::optional<BarrierPair> barriers;
    std::vector<StageResult> stages;
    double geometry_margin = 0.0;  ///< (s_min - 1) minus the largest tau on K expanded by a unit ball
    double paper_margin = 0.0;     ///< s_min - (max tau on K + C1) with C1 = max(|beta-|, |beta+|)
    bool failed = false;
    std::string failure;

    std::vector<double> cauchy_gaps() const;
};

/// Largest tau over the box K expanded by a unit ball (an upper bound).
double expanded_box_tau(const AkMatrix& A, const Box& K);

/// Geometric s-list of the given length, ratio 2, starting at
/// max(s0, 4 r_K^2 a_max) with r_K the largest corner norm of K.
std::vector<double> default_s_list(const HessianProblem& p, const Box& K, int count = 3);

/// Barriers are built (or taken from `barriers`) once; every stage is solved,
/// checked against them and resampled onto K. Nonconvergence ends the run
/// with failed = true. Throws PreconditionError when K does not fit.
EntireRun run_nested(const HessianProblem& p, const std::vector<double>& s_list, const Box& K,
                     const NestedOptions& opts = {}, const BarrierPair* barriers = nullptr);

/// min over interior nodes of min(u_s - lower - beta-, upper + beta+ - u_s).
double sandwich_check(const GridField& u_s, const BarrierPair& pair, const AkMatrix& A);

struct LimitResult {
    GridField u;
    double cauchy_gap = 0.0;
    double bound = 0.0;            ///< max(|beta-|, |beta+|)
    double sup_deviation = 0.0;    ///< sup over K of |u - tau|
    bool bound_ok = false;
};

/// Finest-s solution on K plus the last consecutive gap. Throws StateError
/// with fewer than two converged stages.
LimitResult extract_limit(const EntireRun& run);

}  // namespace khess
