#pragma once

// Measurement of u - x^T A x / 2 on exterior annuli: affine part (b, c),
// decay exponent of the remainder with optional log factor, and the radial
// potential of a power-law source as an exact reference.

#include "khess/grid.hpp"
#include "khess/symfunc.hpp"

#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace khess {

inline constexpr double kLogImprovement = 0.8;  ///< log model wins when rms_log <= 0.8 rms_power

/// Fit of y ~ C r^{-p} and of y ~ C r^{-p} ln r on log-log axes.
struct PowerLawFit {
    double exponent = 0.0;  ///< from the selected model
    double exponent_power = 0.0;
    double exponent_log = 0.0;
    double rms_power = 0.0;
    double rms_log = 0.0;
    bool log_flag = false;
};

/// Needs at least 3 points with r > 1 and y > 0.
PowerLawFit fit_power_law(std::span<const double> r, std::span<const double> y);

struct ShellStats {
    double r_inner = 0.0, r_outer = 0.0;
    std::size_t count = 0;
    double c_local = 0.0;
    std::vector<double> b_local;
    double rms = 0.0;           ///< RMS of the per-shell affine fit residual
    double sup_remainder = 0.0; ///< sup |w - b.x - c| with the global (b, c)
    double r_at_sup = 0.0;
};

struct AsymptoticFit {
    std::vector<double> b;
    double c = 0.0;
    double exponent = std::numeric_limits<double>::infinity();  ///< +inf when the remainder vanishes
    bool log_flag = false;
    double rms_power = 0.0, rms_log = 0.0;
    double c_model_exponent = 0.0;  ///< p of the c-extrapolation model
    bool c_model_log = false;
    std::vector<ShellStats> shells;

    void write_json(std::ostream& os) const;
    void write_csv(std::ostream& os) const;
};

struct ShellOptions {
    double r_inner = 0.0, r_outer = 0.0;
    int shells = 6;
    std::size_t min_points = 50;
};

/// Points are row-major (count x n); values are u at those points.
AsymptoticFit fit_quadratic_remainder(std::span<const double> points, std::span<const double> values,
                                      const AkMatrix& A, const ShellOptions& opts);
/// Uses the interior nodes of u inside the annulus.
AsymptoticFit fit_quadratic_remainder(const GridField& u, const AkMatrix& A, const ShellOptions& opts);

struct RadialSource {
    double delta = 3.0;
    int n = 3;
    double r0 = 1.0;
    void validate() const;
};

/// h with (r^{n-1} h')' = r^{n-1} r^{-delta}, h'(r0) = 0 and h(inf) = 0.
double radial_potential(const RadialSource& src, double r);
double radial_potential_derivative(const RadialSource& src, double r);

/// (min(delta, n) - 2, delta == n).
std::pair<double, bool> decay_rate_oracle(const RadialSource& src);

struct DecayRow {
    double r_inner = 0.0, r_outer = 0.0;
    double sup_w = 0.0, sup_grad = 0.0, sup_hess = 0.0;
};

struct DecayReport {
    std::vector<DecayRow> rows;
    double slopes[3] = {0.0, 0.0, 0.0};  ///< log-log slopes for m = 0, 1, 2; -inf when the sups vanish

    void write_json(std::ostream& os) const;
};

/// Shells are consecutive radii; w = u - tau - (b.x + c) when an affine part is given.
DecayReport derivative_decay_report(const GridField& u, const AkMatrix& A, std::span<const double> radii,
                                    std::span<const double> b = {}, double c = 0.0);

}  // namespace khess
