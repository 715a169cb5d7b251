#pragma once

// Rescaling diagnostic for entire solutions of sigma_k = 1: the blow-down
// v(x) = (u(Rx) - R^2) / R^2, inclusion radii of {v < 0}, and the decay of
// D^2 u - A with a difference-quotient proxy for the Holder seminorm.

#include "khess/grid.hpp"
#include "khess/symfunc.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace khess {

/// v on the box [-half_width, half_width]^n with the given node count.
/// Throws ArgumentError when some R x leaves the solved region of u.
GridField rescale(const GridField& u, double R, double half_width = 1.0, int nodes = 17);

struct LevelSetBounds {
    double inner = 0.0;            ///< largest sampled ball inside {v < 0}
    double outer = 0.0;            ///< smallest sampled ball containing {v < 0}
    double predicted_inner = 0.0;  ///< sqrt(1/A2 - B/(A2 R^2)), 0 when negative
    double predicted_outer = 0.0;  ///< sqrt(1/A1)
    double cell = 0.0;             ///< grid cell in rescaled units
    bool growth_ok = true;         ///< A1|x|^2 <= u <= A2|x|^2 + B on every sample
    bool covered = true;           ///< samples reach beyond the predicted outer radius
    bool inclusions_ok = true;     ///< both inclusions hold within one cell; not judged when uncovered
    std::vector<std::string> warnings;
};

/// Samples the non-exterior nodes of u. Violations are reported, not thrown.
LevelSetBounds level_set_bounds(const GridField& u, double R, double A1, double A2, double B);

struct RescaleRow {
    double R = 0.0;
    double ball_radius = 0.0;      ///< R / sqrt(8 A2)
    std::size_t nodes = 0;
    double sup_deviation = 0.0;    ///< sup |D^2 u - A| (Frobenius) on the ball
    double holder_proxy = 0.0;     ///< R^alpha max |D^2u(y) - D^2u(z)| / |y - z|^alpha, |y - z| >= R/4
    double max_residual = 0.0;     ///< sup |sigma_k(D^2 u)^{1/k} - 1| on the ball
    LevelSetBounds level;
};

struct RescaleOptions {
    double alpha = 0.5;
    double A2 = 0.0;               ///< growth constant; 0 means a_max / 2
    double exclude_fraction = 0.0; ///< nodes with |y| < exclude_fraction * ball radius are skipped
};

struct RescaleReport {
    double alpha = 0.5;
    double A1 = 0.0, A2 = 0.0, B = 0.0;
    double noise_floor = 0.0;        ///< rounding level of the discrete Hessian
    double holder_noise_floor = 0.0; ///< the same level propagated into the proxy
    std::vector<RescaleRow> rows;

    /// Both metrics nonincreasing in R up to the noise floors.
    bool nonincreasing() const;
    /// Last row within factor times the noise floors.
    bool ends_at_noise(double factor = 10.0) const;

    void write_json(std::ostream& os) const;
    void write_csv(std::ostream& os) const;
};

/// R values must increase. Throws ArgumentError when a ball has no interior nodes.
RescaleReport hessian_decay(const GridField& u, const std::vector<double>& R_list, const AkMatrix& A,
                            const RescaleOptions& opts = {});

}  // namespace khess
