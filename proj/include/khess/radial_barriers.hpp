#pragma once

// Functions of tau = x^T A x / 2 and the explicit sub/supersolution pair
// for sigma_k(lambda(D^2 u)) = f outside a sublevel set D_{s0}.

#include "khess/dirichlet.hpp"
#include "khess/fmodel.hpp"
#include "khess/grid.hpp"
#include "khess/symfunc.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace khess {

/// Piecewise quintic Hermite profile u(tau) on strictly increasing knots.
/// Below the first knot the profile is extended by its first value.
/// Intervals touching an infinite second derivative fall back to cubic Hermite.
class RadialProfile {
public:
    RadialProfile() = default;
    RadialProfile(std::vector<double> knots, std::vector<double> u, std::vector<double> du, std::vector<double> d2u);

    double domain_start() const noexcept { return knots_.empty() ? 0.0 : knots_.front(); }
    double domain_end() const noexcept { return knots_.empty() ? 0.0 : knots_.back(); }
    const std::vector<double>& knots() const noexcept { return knots_; }
    const std::vector<double>& values() const noexcept { return u_; }
    const std::vector<double>& first() const noexcept { return du_; }
    const std::vector<double>& second() const noexcept { return d2u_; }

    struct Sample {
        double u, du, d2u;
    };
    struct Slope {
        double du, d2u;
    };
    using SlopeFn = std::function<Slope(double)>;
    /// Exact u' and u'' inside the knot range; values stay interpolated.
    void set_slope(SlopeFn fn) { slope_ = std::move(fn); }
    /// Throws ArgumentError above the last knot.
    Sample sample(double tau) const;
    double value(double tau) const { return sample(tau).u; }
    double derivative(double tau) const { return sample(tau).du; }

    void write_csv(std::ostream& os) const;
    void write_csv_file(const std::string& path) const;

private:
    std::vector<double> knots_, u_, du_, d2u_;
    SlopeFn slope_;
};

/// D^2 u = u' A + u'' (A x)(A x)^T for u = u(tau(x)).
SymMatrix radial_hessian(const AkMatrix& A, std::span<const double> x, double uprime, double usecond);

/// sigma_k(a) u'^k + u'' u'^{k-1} sum_i sigma_{k-1;i}(a) (a_i x_i)^2.
double sigma_k_radial(const AkMatrix& A, std::span<const double> x, double uprime, double usecond);

struct BarrierOptions {
    double tau_max = 0.0;  ///< 0 selects 1e4 * s0
    double knot_ratio = 1.05;
    double rel_tol = 1e-9;
    double H2_margin = 1.1;
    std::optional<double> H2_override;
    std::optional<double> c0_override;
    int v1_nodes = 33;
    SolverOptions solver;
};

/// Supersolution profile: 0 below s0, then
/// int_{s0}^tau (t^{-kappa} int_{s0}^t kappa r^{kappa-1} f_lower(r) dr)^{1/k} dt.
RadialProfile build_upper_barrier(const AkMatrix& A, const TailEnvelope& env, const BarrierOptions& opts = {});

/// Exterior subsolution profile on [s0, tau_max] with the constant H2 added
/// to the inner integral of f_upper.
RadialProfile build_lower_profile(const AkMatrix& A, const TailEnvelope& env, double H2,
                                  const BarrierOptions& opts = {});

/// The function H(tau) = int_{s0}^tau kappa r^{kappa-1} f_upper dr + H2 - tau^kappa f_upper(tau),
/// in its closed form (separate branch when kappa = beta/2).
double H_function(const TailEnvelope& env, double kappa, double H2, double tau);

/// margin * max(s0^kappa f_upper(s0), s0^kappa slope_bound^k), rechecked on a
/// tau grid up to 1e6; throws ConstantsError if the recheck fails.
double select_H2(const TailEnvelope& env, double kappa, int k, double slope_bound, double margin = 1.1);

struct V3Profile {
    RadialProfile profile;  ///< on [s0/2, s0], constant -c1 below
    double c1 = 0.0, c2 = 0.0, H1 = 0.0;
    double slope_at_s0 = 0.0;  ///< H1 (int_{s0/2}^{s0} n r^{n-1} f_upper^{n/k} dr)^{1/n}
};

/// c2 = int_{s0/2}^{s0} (int_{s0/2}^t n r^{n-1} f_upper^{n/k}(r) dr)^{1/n} dt.
double v3_c2(int n, int k, const TailEnvelope& env, double rel_tol = 1e-9);
V3Profile build_v3(const AkMatrix& A, int n, int k, const TailEnvelope& env, double c1, int knots = 65);

/// Alexandrov-type constant for D_{s0}: with semi-axes l_i = sqrt(2 s0 / a_i),
/// C = (n / |S^{n-1}| * (2 l_max)^{n-1} * l_min)^{1/n}.
double alexandrov_constant(const AkMatrix& A, double s0);
/// ||f||_{L^{n/k}(D_{s0})} by a tensor midpoint rule.
double source_norm(const FModel& f, const AkMatrix& A, double s0);

/// Bump exp(1 - 1/(1 - 4 tau/s0)) supported in D_{s0/4}, scaled to unit L^{n/k} norm.
struct EtaBump {
    double s0 = 0.0;
    double scale = 0.0;
    double operator()(const AkMatrix& A, std::span<const double> x) const;
};
EtaBump make_eta(const AkMatrix& A, double s0);

struct BarrierPair {
    int k = 0;
    TailEnvelope env;
    RadialProfile upper;
    RadialProfile lower;  ///< exterior part, tau >= s0
    std::optional<GridField> v1;  ///< interior part on D_{s0}
    V3Profile v3;
    double kappa = 0.0, hk = 0.0;
    double H1 = 0.0, H2 = 0.0, c0_bump = 0.0, c1 = 0.0, c2 = 0.0;
    double eta_scale = 0.0;
    double slope_inside = 0.0;   ///< largest one-sided interior tau-slope of v1 at the boundary
    double slope_outside = 0.0;  ///< (H2 s0^{-kappa})^{1/k}
    double beta_minus = 0.0, beta_plus = 0.0;
    double tau_max = 0.0;

    double lower_value(const AkMatrix& A, std::span<const double> x) const;
    double upper_value(const AkMatrix& A, std::span<const double> x) const;
};

/// Full construction: upper profile, constants c0/c1/c2/H1/H2, v1 solve,
/// gradient-jump verification and beta bounds. Throws ConstantsError when
/// the jump inequality fails.
BarrierPair build_barriers(const FModel& f, const AkMatrix& A, const TailEnvelope& env,
                           const BarrierOptions& opts = {});

/// (beta_minus, beta_plus): extrema of tau - u over the knots plus exact tails
/// beyond tau_max. Throws NumericError when the tails are not monotone.
std::pair<double, double> beta_bounds(const BarrierPair& pair, const AkMatrix& A, double tau_max);

}  // namespace khess
