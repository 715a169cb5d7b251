#include "khess/fmodel.hpp"

#include "khess/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace khess {

namespace {

// psi(q) and its first three derivatives in q.
struct Profile4 {
    double d0 = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0;
};

Profile4 bump_derivs(double q)
{
    if (q >= 1.0) return {};
    const double om = 1.0 - q;
    const double g = 1.0 - 1.0 / om;
    const double g1 = -1.0 / (om * om);
    const double g2 = -2.0 / (om * om * om);
    const double g3 = -6.0 / (om * om * om * om);
    const double phi = std::exp(g);
    return {phi, phi * g1, phi * (g1 * g1 + g2), phi * (g1 * g1 * g1 + 3.0 * g1 * g2 + g3)};
}

Profile4 power_derivs(double q, double b)
{
    const double base = 1.0 + q;
    const double p0 = std::pow(base, -b);
    return {p0, -b * p0 / base, b * (b + 1.0) * p0 / (base * base),
            -b * (b + 1.0) * (b + 2.0) * p0 / (base * base * base)};
}

// Adds alpha * psi(|x - c|^2 / rho^2) with derivatives into `out`.
void add_composite(std::span<const double> x, std::span<const double> c, double rho, double alpha,
                   const Profile4& psi_at, int order, FDerivs& out)
{
    const std::size_t n = x.size();
    std::vector<double> qi(n);
    const double inv_r2 = 1.0 / (rho * rho);
    for (std::size_t i = 0; i < n; ++i) qi[i] = 2.0 * (x[i] - (c.empty() ? 0.0 : c[i])) * inv_r2;
    const double qd = 2.0 * inv_r2;  // q_ij = qd * delta_ij

    out.value += alpha * psi_at.d0;
    if (order >= 1)
        for (std::size_t i = 0; i < n; ++i) out.grad[i] += alpha * psi_at.d1 * qi[i];
    if (order >= 2)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out.hess[i * n + j] +=
                    alpha * (psi_at.d2 * qi[i] * qi[j] + (i == j ? psi_at.d1 * qd : 0.0));
    if (order >= 3)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t l = 0; l < n; ++l) {
                    double t = psi_at.d3 * qi[i] * qi[j] * qi[l];
                    if (i == j) t += psi_at.d2 * qd * qi[l];
                    if (i == l) t += psi_at.d2 * qd * qi[j];
                    if (j == l) t += psi_at.d2 * qd * qi[i];
                    out.third[(i * n + j) * n + l] += alpha * t;
                }
}

double norm2(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

double bump_profile(double t) noexcept
{
    return t < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t)) : 0.0;
}

// ------------------------------------------------------------ TailEnvelope

void TailEnvelope::validate() const
{
    if (!(C0 >= 0.0) || !std::isfinite(C0)) throw ArgumentError("TailEnvelope: C0 must be >= 0");
    if (!(s0 > 1.0)) throw ArgumentError("TailEnvelope: s0 must exceed 1");
    if (!(beta > 2.0)) throw ArgumentError("TailEnvelope: beta must exceed 2");
    if (!(lower(s0) > 0.0)) throw ArgumentError("TailEnvelope: 1 - C0 s0^{-beta/2} must be positive");
}

double TailEnvelope::upper(double s) const
{
    return 1.0 + C0 * std::pow(s, -0.5 * beta);
}

double TailEnvelope::lower(double s) const
{
    return 1.0 - C0 * std::pow(s, -0.5 * beta);
}

// ------------------------------------------------------------------ FModel

FModel FModel::constant(int dim, double value)
{
    if (dim < 1) throw ArgumentError("FModel: dimension must be positive");
    FModel f;
    f.kind_ = Kind::Constant;
    f.dim_ = dim;
    f.constant_ = value;
    f.inf_bound_ = value;
    return f;
}

FModel FModel::power_tail(int dim, double C0, double beta, double sign)
{
    if (dim < 1) throw ArgumentError("FModel: dimension must be positive");
    if (!(C0 >= 0.0) || !(beta > 0.0)) throw ArgumentError("power_tail: need C0 >= 0 and beta > 0");
    FModel f;
    f.kind_ = Kind::PowerTail;
    f.dim_ = dim;
    f.c0_ = C0;
    f.beta_ = beta;
    f.sign_ = sign >= 0.0 ? 1.0 : -1.0;
    f.inf_bound_ = f.sign_ > 0.0 ? 1.0 : 1.0 - C0;
    return f;
}

FModel FModel::bump(std::vector<double> center, double radius, double amplitude)
{
    if (center.empty()) throw ArgumentError("bump: empty center");
    if (!(radius > 0.0)) throw ArgumentError("bump: radius must be positive");
    FModel f;
    f.kind_ = Kind::Bump;
    f.dim_ = static_cast<int>(center.size());
    f.center_ = std::move(center);
    f.radius_ = radius;
    f.amplitude_ = amplitude;
    f.inf_bound_ = amplitude >= 0.0 ? 1.0 : 1.0 + amplitude;
    return f;
}

FModel FModel::sum(std::vector<FModel> terms)
{
    if (terms.empty()) throw ArgumentError("sum: no terms");
    FModel f;
    f.kind_ = Kind::Sum;
    f.dim_ = terms.front().dim();
    double inf = 1.0;
    for (const auto& t : terms) {
        if (t.kind() == Kind::Sum) throw ArgumentError("sum: nested sums are not supported");
        if (t.dim() != f.dim_) throw ArgumentError("sum: dimension mismatch");
        inf += std::min(0.0, t.inf_bound() - 1.0);
    }
    f.inf_bound_ = inf;
    f.terms_ = std::move(terms);
    return f;
}

bool FModel::is_unit() const noexcept
{
    switch (kind_) {
    case Kind::Constant:
        return constant_ == 1.0;
    case Kind::PowerTail:
        return c0_ == 0.0;
    case Kind::Bump:
        return amplitude_ == 0.0;
    case Kind::Sum:
        return std::all_of(terms_.begin(), terms_.end(), [](const FModel& t) { return t.is_unit(); });
    }
    return false;
}

void FModel::add_perturbation(std::span<const double> x, int order, FDerivs& out) const
{
    switch (kind_) {
    case Kind::Constant:
        out.value += constant_ - 1.0;
        return;
    case Kind::PowerTail: {
        double q = 0.0;
        for (double v : x) q += v * v;
        add_composite(x, {}, 1.0, sign_ * c0_, power_derivs(q, 0.5 * beta_), order, out);
        return;
    }
    case Kind::Bump: {
        double q = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - center_[i]) * (x[i] - center_[i]);
        q /= radius_ * radius_;
        if (q >= 1.0) return;
        add_composite(x, center_, radius_, amplitude_, bump_derivs(q), order, out);
        return;
    }
    case Kind::Sum:
        for (const auto& t : terms_) t.add_perturbation(x, order, out);
        return;
    }
}

FDerivs FModel::eval(std::span<const double> x, int order) const
{
    if (order < 0 || order > 3) throw ArgumentError("FModel::eval: order must lie in [0, 3]");
    if (static_cast<int>(x.size()) != dim_) throw ArgumentError("FModel::eval: dimension mismatch");
    const std::size_t n = x.size();
    FDerivs out;
    out.value = 1.0;
    if (order >= 1) out.grad.assign(n, 0.0);
    if (order >= 2) out.hess.assign(n * n, 0.0);
    if (order >= 3) out.third.assign(n * n * n, 0.0);
    add_perturbation(x, order, out);
    return out;
}

double FModel::value(std::span<const double> x) const
{
    FDerivs d;
    d.value = 1.0;
    add_perturbation(x, 0, d);
    return d.value;
}

SourceFn FModel::as_source() const
{
    return [f = *this](std::span<const double> x) { return f.value(x); };
}

std::string FModel::describe() const
{
    std::ostringstream os;
    switch (kind_) {
    case Kind::Constant:
        os << "constant(" << constant_ << ")";
        break;
    case Kind::PowerTail:
        os << "power_tail(C0=" << c0_ << ", beta=" << beta_ << ", sign=" << sign_ << ")";
        break;
    case Kind::Bump:
        os << "bump(radius=" << radius_ << ", amplitude=" << amplitude_ << ")";
        break;
    case Kind::Sum:
        os << "sum[";
        for (std::size_t i = 0; i < terms_.size(); ++i) os << (i ? ", " : "") << terms_[i].describe();
        os << "]";
        break;
    }
    return os.str();
}

// --------------------------------------------------------------- envelopes

TailEnvelope tail_envelope(const FModel& f, const AkMatrix& A)
{
    if (f.dim() != A.dim()) throw ArgumentError("tail_envelope: dimension mismatch");
    if (!(f.inf_bound() > 0.0))
        throw ConstantsError("tail_envelope: inf f must be positive, certified bound is " +
                             std::to_string(f.inf_bound()));
    const int n = f.dim();
    const double amax = A.a_max();

    std::vector<FModel> terms;
    if (f.kind() == FModel::Kind::Sum)
        terms = f.terms();
    else
        terms.push_back(f);

    TailEnvelope env;
    env.C0 = 0.0;
    env.s0 = 2.0;
    env.beta = 2.0 * n;
    bool have_tail = false;
    for (const auto& t : terms) {
        if (t.kind() != FModel::Kind::PowerTail || t.C0() == 0.0) continue;
        env.beta = have_tail ? std::min(env.beta, t.beta()) : t.beta();
        have_tail = true;
    }
    for (const auto& t : terms) {
        switch (t.kind()) {
        case FModel::Kind::Constant:
            if (t.constant_value() != 1.0)
                throw ConstantsError("tail_envelope: constant f must equal 1 to admit a tail envelope");
            break;
        case FModel::Kind::Bump: {
            if (t.amplitude() == 0.0) break;
            const double reach = norm2(t.center()) + t.radius();
            env.s0 = std::max(env.s0, 0.5 * amax * reach * reach);
            break;
        }
        case FModel::Kind::PowerTail: {
            if (t.C0() == 0.0) break;
            if (!(t.beta() > 2.0)) throw ConstantsError("tail_envelope: power tail needs beta > 2");
            // |x|^2 >= 2 s / a_max on {tau = s}, and s^{-b_i} <= s^{-b_min} for s >= 1.
            env.C0 += t.C0() * std::pow(0.5 * amax, 0.5 * t.beta());
            break;
        }
        case FModel::Kind::Sum:
            break;
        }
    }
    if (env.C0 > 0.0) env.s0 = std::max(env.s0, std::pow(2.0 * env.C0, 2.0 / env.beta));
    env.validate();
    return env;
}

std::vector<std::vector<double>> c2_profile(const FModel& f, double beta, std::span<const double> radii)
{
    const int n = f.dim();
    std::mt19937_64 rng(0x5eedc2u);
    std::normal_distribution<double> gauss;
    constexpr int kSamples = 128;
    std::vector<std::vector<double>> dirs(kSamples, std::vector<double>(static_cast<std::size_t>(n)));
    for (auto& d : dirs) {
        for (auto& v : d) v = gauss(rng);
        const double len = norm2(d);
        for (auto& v : d) v /= len;
    }
    std::vector<std::vector<double>> out(4, std::vector<double>(radii.size(), 0.0));
    std::vector<double> x(static_cast<std::size_t>(n));
    for (std::size_t r = 0; r < radii.size(); ++r) {
        for (const auto& d : dirs) {
            for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = radii[r] * d[static_cast<std::size_t>(i)];
            const FDerivs fd = f.eval(x, 3);
            const double norms[4] = {std::abs(fd.value - 1.0), norm2(fd.grad), norm2(fd.hess), norm2(fd.third)};
            for (int m = 0; m < 4; ++m)
                out[static_cast<std::size_t>(m)][r] =
                    std::max(out[static_cast<std::size_t>(m)][r], std::pow(radii[r], beta + m) * norms[m]);
        }
    }
    return out;
}

bool verify_C2(const FModel& f, double beta, std::span<const double> radii)
{
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (!(radii[i] > radii[i - 1])) throw ArgumentError("verify_C2: radii must be increasing");

    // Certified variants: compact support or an explicit power decay rate.
    switch (f.kind()) {
    case FModel::Kind::Constant:
    case FModel::Kind::Bump:
        return true;
    case FModel::Kind::PowerTail:
        if (f.C0() == 0.0 || beta <= f.beta()) return true;
        break;
    case FModel::Kind::Sum: {
        bool all = true;
        for (const auto& t : f.terms())
            all = all && (t.kind() != FModel::Kind::PowerTail || t.C0() == 0.0 || beta <= t.beta());
        if (all) return true;
        break;
    }
    }

    if (radii.size() < 3) throw ArgumentError("verify_C2: need at least three radii to sample");
    const auto prof = c2_profile(f, beta, radii);
    const std::size_t split = (2 * radii.size()) / 3;
    for (const auto& row : prof) {
        const double head = *std::max_element(row.begin(), row.begin() + static_cast<long>(split));
        const double tail = *std::max_element(row.begin() + static_cast<long>(split), row.end());
        if (tail > 4.0 * head + 1e-300) return false;
    }
    return true;
}

}  // namespace khess
