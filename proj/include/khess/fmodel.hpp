#pragma once

// Analytic right-hand sides f > 0 with derivatives through order 3 and
// certified radial tail envelopes in the variable s = x^T A x / 2.

#include "khess/symfunc.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace khess {

/// f(x) and its derivatives up to the requested order. `third` is the
/// row-major n*n*n tensor D_ijk f.
struct FDerivs {
    double value = 0.0;
    std::vector<double> grad;
    std::vector<double> hess;
    std::vector<double> third;
};

/// Tail constants: for s >= s0, 1 - C0 s^{-beta/2} <= f <= 1 + C0 s^{-beta/2}.
struct TailEnvelope {
    double C0 = 0.0;
    double s0 = 2.0;
    double beta = 6.0;

    /// Throws ArgumentError unless C0 >= 0, s0 > 1, beta > 2 and 1 - C0 s0^{-beta/2} > 0.
    void validate() const;
    double upper(double s) const;  ///< 1 + C0 s^{-beta/2}
    double lower(double s) const;  ///< 1 - C0 s^{-beta/2}
};

/// Pointwise source used by the solvers; the FModel is one provider.
using SourceFn = std::function<double(std::span<const double>)>;

class FModel {
public:
    enum class Kind { Constant, PowerTail, Bump, Sum };

    /// f = value (value must be positive; tail-admissible only for value 1).
    static FModel constant(int dim, double value = 1.0);
    /// f = 1 + sign * C0 * (1 + |x|^2)^{-beta/2}.
    static FModel power_tail(int dim, double C0, double beta, double sign = 1.0);
    /// f = 1 + amplitude * exp(1 - 1/(1 - |x-c|^2/r^2)) inside the ball, 1 outside.
    static FModel bump(std::vector<double> center, double radius, double amplitude);
    /// f = 1 + sum_i (f_i - 1); terms may not be sums themselves.
    static FModel sum(std::vector<FModel> terms);

    Kind kind() const noexcept { return kind_; }
    int dim() const noexcept { return dim_; }
    /// Certified global infimum; always > 0 for a constructed model.
    double inf_bound() const noexcept { return inf_bound_; }
    /// True when f is identically 1.
    bool is_unit() const noexcept;

    double value(std::span<const double> x) const;
    FDerivs eval(std::span<const double> x, int order) const;

    /// Variant parameters (for manifests and config echo).
    double C0() const noexcept { return c0_; }
    double beta() const noexcept { return beta_; }
    double sign() const noexcept { return sign_; }
    double radius() const noexcept { return radius_; }
    double amplitude() const noexcept { return amplitude_; }
    double constant_value() const noexcept { return constant_; }
    const std::vector<double>& center() const noexcept { return center_; }
    const std::vector<FModel>& terms() const noexcept { return terms_; }
    std::string describe() const;

    SourceFn as_source() const;

private:
    FModel() = default;
    void add_perturbation(std::span<const double> x, int order, FDerivs& out) const;

    Kind kind_ = Kind::Constant;
    int dim_ = 0;
    double inf_bound_ = 1.0;
    double constant_ = 1.0;
    double c0_ = 0.0, beta_ = 0.0, sign_ = 1.0;
    std::vector<double> center_;
    double radius_ = 0.0, amplitude_ = 0.0;
    std::vector<FModel> terms_;
};

/// Smallest s0 >= 2 and C0 such that the envelope brackets f on {tau >= s0}.
/// Throws ConstantsError when no admissible envelope exists.
TailEnvelope tail_envelope(const FModel& f, const AkMatrix& A);

/// Sampled decay check of |x|^{beta+m} |D^m(f - 1)|, m = 0..3, over spheres
/// with the given increasing radii.
bool verify_C2(const FModel& f, double beta, std::span<const double> radii);

/// Largest scaled derivative norm on each sphere, row m = 0..3.
std::vector<std::vector<double>> c2_profile(const FModel& f, double beta,
                                            std::span<const double> radii);

/// Smooth bump exp(1 - 1/(1 - t)) for t in [0,1), zero otherwise.
double bump_profile(double t) noexcept;

}  // namespace khess
