#include "khess/asymptotics.hpp"

#include "khess/dirichlet.hpp"
#include "khess/errors.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

namespace khess {

namespace {

using nlohmann::json;

json num(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

// Least squares y = alpha + slope * x; returns (alpha, slope, rms).
struct LineFit {
    double alpha = 0.0, slope = 0.0, rms = 0.0;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y)
{
    const std::size_t m = x.size();
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    f.alpha = my - f.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double e = y[i] - f.alpha - f.slope * x[i];
        ss += e * e;
    }
    f.rms = std::sqrt(ss / m);
    return f;
}

// Per-shell design [1, x_1..x_n] with a reusable factorization.
struct Shell {
    std::vector<std::size_t> idx;
    Eigen::MatrixXd X;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    double r_inner = 0.0, r_outer = 0.0;
};

double g_basis(double r, double p, bool log)
{
    return std::pow(r, -p) * (log ? std::log(r) : 1.0);
}

struct CModel {
    double rss = std::numeric_limits<double>::infinity();
    double c = 0.0, amplitude = 0.0, p = 0.0;
    bool log = false;
};

}  // namespace

PowerLawFit fit_power_law(std::span<const double> r, std::span<const double> y)
{
    std::vector<double> lx, ly, lyl;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!(y[i] > 0.0) || !(r[i] > 1.0)) continue;
        lx.push_back(std::log(r[i]));
        ly.push_back(std::log(y[i]));
        lyl.push_back(std::log(y[i]) - std::log(std::log(r[i])));
    }
    if (lx.size() < 3) throw ArgumentError("fit_power_law: need at least 3 points with r > 1 and y > 0");
    const auto pw = fit_line(lx, ly);
    const auto lg = fit_line(lx, lyl);
    PowerLawFit out;
    out.exponent_power = -pw.slope;
    out.exponent_log = -lg.slope;
    out.rms_power = pw.rms;
    out.rms_log = lg.rms;
    out.log_flag = lg.rms <= kLogImprovement * pw.rms;
    out.exponent = out.log_flag ? out.exponent_log : out.exponent_power;
    return out;
}

AsymptoticFit fit_quadratic_remainder(std::span<const double> points, std::span<const double> values,
                                      const AkMatrix& A, const ShellOptions& opts)
{
    const int n = A.dim();
    const std::size_t count = values.size();
    if (points.size() != count * static_cast<std::size_t>(n))
        throw ArgumentError("fit_quadratic_remainder: points and values disagree in size");
    if (!(opts.r_inner > 0.0) || !(opts.r_outer >= 2.0 * opts.r_inner))
        throw ArgumentError("fit_quadratic_remainder: annulus must satisfy r_outer >= 2 r_inner > 0");
    if (opts.shells < 4) throw ArgumentError("fit_quadratic_remainder: need at least 4 shells");

    const int S = opts.shells;
    const double ratio = std::pow(opts.r_outer / opts.r_inner, 1.0 / S);
    std::vector<Shell> shells(static_cast<std::size_t>(S));
    for (int j = 0; j < S; ++j) {
        shells[static_cast<std::size_t>(j)].r_inner = opts.r_inner * std::pow(ratio, j);
        shells[static_cast<std::size_t>(j)].r_outer = opts.r_inner * std::pow(ratio, j + 1);
    }
    std::vector<double> w(count), rr(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto x = points.subspan(i * static_cast<std::size_t>(n), static_cast<std::size_t>(n));
        double q = 0.0;
        for (double v : x) q += v * v;
        rr[i] = std::sqrt(q);
        w[i] = values[i] - A.tau(x);
        if (rr[i] < opts.r_inner || rr[i] >= opts.r_outer) continue;
        const int j = std::min(S - 1, static_cast<int>(std::floor(std::log(rr[i] / opts.r_inner) / std::log(ratio))));
        shells[static_cast<std::size_t>(j)].idx.push_back(i);
    }
    for (auto& sh : shells) {
        if (sh.idx.size() < opts.min_points)
            throw ArgumentError(fmt::format("shell [{:.4g}, {:.4g}) has {} points, need at least {}", sh.r_inner,
                                            sh.r_outer, sh.idx.size(), opts.min_points));
        sh.X.resize(static_cast<Eigen::Index>(sh.idx.size()), n + 1);
        for (std::size_t q = 0; q < sh.idx.size(); ++q) {
            sh.X(static_cast<Eigen::Index>(q), 0) = 1.0;
            for (int d = 0; d < n; ++d)
                sh.X(static_cast<Eigen::Index>(q), d + 1) = points[sh.idx[q] * static_cast<std::size_t>(n) + static_cast<std::size_t>(d)];
        }
        sh.qr.compute(sh.X);
    }
    auto shell_vector = [&](const Shell& sh, auto&& fn) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(sh.idx.size()));
        for (std::size_t q = 0; q < sh.idx.size(); ++q) v[static_cast<Eigen::Index>(q)] = fn(sh.idx[q]);
        return v;
    };

    AsymptoticFit fit;
    fit.shells.resize(static_cast<std::size_t>(S));
    std::vector<double> cj(static_cast<std::size_t>(S)), rmid(static_cast<std::size_t>(S));
    for (int j = 0; j < S; ++j) {
        const auto& sh = shells[static_cast<std::size_t>(j)];
        auto& st = fit.shells[static_cast<std::size_t>(j)];
        const Eigen::VectorXd y = shell_vector(sh, [&](std::size_t i) { return w[i]; });
        const Eigen::VectorXd coef = sh.qr.solve(y);
        st.r_inner = sh.r_inner;
        st.r_outer = sh.r_outer;
        st.count = sh.idx.size();
        st.c_local = coef[0];
        st.b_local.assign(coef.data() + 1, coef.data() + 1 + n);
        st.rms = std::sqrt((sh.X * coef - y).squaredNorm() / static_cast<double>(sh.idx.size()));
        cj[static_cast<std::size_t>(j)] = coef[0];
        rmid[static_cast<std::size_t>(j)] = std::sqrt(sh.r_inner * sh.r_outer);
    }

    // c from c_j = c + C g_j(p), g_j the shell intercept of r^{-p} (ln r)^q.
    auto c_model = [&](double p, bool log) {
        Eigen::MatrixXd M(S, 2);
        Eigen::VectorXd y(S);
        for (int j = 0; j < S; ++j) {
            const auto& sh = shells[static_cast<std::size_t>(j)];
            const Eigen::VectorXd g = shell_vector(sh, [&](std::size_t i) { return g_basis(rr[i], p, log); });
            M(j, 0) = 1.0;
            M(j, 1) = sh.qr.solve(g)[0];
            y[j] = cj[static_cast<std::size_t>(j)];
        }
        const Eigen::Vector2d sol = M.colPivHouseholderQr().solve(y);
        return CModel{(M * sol - y).squaredNorm(), sol[0], sol[1], p, log};
    };
    CModel best;
    for (bool log : {false, true}) {
        CModel local;
        for (double p = 0.05; p <= 6.0 + 1e-12; p += 0.05) {
            const auto m = c_model(p, log);
            if (m.rss < local.rss) local = m;
        }
        double lo = std::max(1e-3, local.p - 0.05), hi = local.p + 0.05;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        for (int it = 0; it < 60; ++it) {
            const double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
            if (c_model(a, log).rss < c_model(b, log).rss)
                hi = b;
            else
                lo = a;
        }
        const auto refined = c_model(0.5 * (lo + hi), log);
        if (refined.rss < local.rss) local = refined;
        if (local.rss < best.rss * (1.0 - 1e-9)) best = local;
    }
    fit.c = best.c;
    fit.c_model_exponent = best.p;
    fit.c_model_log = best.log;

    // b from the outer half of the shells, weighted by r^2, with the fitted tail removed.
    fit.b.assign(static_cast<std::size_t>(n), 0.0);
    double wsum = 0.0;
    for (int j = S / 2; j < S; ++j) {
        const auto& sh = shells[static_cast<std::size_t>(j)];
        const Eigen::VectorXd g = shell_vector(sh, [&](std::size_t i) { return g_basis(rr[i], best.p, best.log); });
        const Eigen::VectorXd gb = sh.qr.solve(g);
        const double wt = rmid[static_cast<std::size_t>(j)] * rmid[static_cast<std::size_t>(j)];
        wsum += wt;
        for (int d = 0; d < n; ++d)
            fit.b[static_cast<std::size_t>(d)] +=
                wt * (fit.shells[static_cast<std::size_t>(j)].b_local[static_cast<std::size_t>(d)] - best.amplitude * gb[d + 1]);
    }
    for (auto& v : fit.b) v /= wsum;

    double wmax = 0.0, smax = 0.0;
    for (int j = 0; j < S; ++j) {
        auto& st = fit.shells[static_cast<std::size_t>(j)];
        for (std::size_t i : shells[static_cast<std::size_t>(j)].idx) {
            double rem = w[i] - fit.c;
            for (int d = 0; d < n; ++d)
                rem -= fit.b[static_cast<std::size_t>(d)] * points[i * static_cast<std::size_t>(n) + static_cast<std::size_t>(d)];
            wmax = std::max(wmax, std::abs(w[i]));
            if (std::abs(rem) >= st.sup_remainder) {
                st.sup_remainder = std::abs(rem);
                st.r_at_sup = rr[i];
            }
        }
        smax = std::max(smax, st.sup_remainder);
    }
    if (smax <= 1e-12 * std::max(1.0, wmax)) {
        fit.exponent = std::numeric_limits<double>::infinity();
        fit.log_flag = false;
        return fit;
    }
    std::vector<double> rs, ys;
    for (const auto& st : fit.shells) {
        rs.push_back(st.r_at_sup);
        ys.push_back(st.sup_remainder);
    }
    const auto pl = fit_power_law(rs, ys);
    fit.exponent = pl.exponent;
    fit.log_flag = pl.log_flag;
    fit.rms_power = pl.rms_power;
    fit.rms_log = pl.rms_log;
    return fit;
}

AsymptoticFit fit_quadratic_remainder(const GridField& u, const AkMatrix& A, const ShellOptions& opts)
{
    const int n = u.spec().dim();
    if (A.dim() != n) throw ArgumentError("fit_quadratic_remainder: dimension mismatch");
    std::vector<double> pts, vals, x(static_cast<std::size_t>(n));
    for (std::size_t i : u.interior()) {
        u.spec().coords(i, x);
        double q = 0.0;
        for (double v : x) q += v * v;
        const double r = std::sqrt(q);
        if (r < opts.r_inner || r >= opts.r_outer) continue;
        pts.insert(pts.end(), x.begin(), x.end());
        vals.push_back(u[i]);
    }
    return fit_quadratic_remainder(pts, vals, A, opts);
}

void AsymptoticFit::write_json(std::ostream& os) const
{
    json j;
    j["b"] = b;
    j["c"] = c;
    j["exponent"] = num(exponent);
    j["exponent_sentinel"] = !std::isfinite(exponent);
    j["log_flag"] = log_flag;
    j["rms_power"] = rms_power;
    j["rms_log"] = rms_log;
    j["c_model"] = {{"exponent", c_model_exponent}, {"log", c_model_log}};
    json sh = json::array();
    for (const auto& s : shells)
        sh.push_back({{"r_inner", s.r_inner},
                      {"r_outer", s.r_outer},
                      {"count", s.count},
                      {"c_local", s.c_local},
                      {"b_local", s.b_local},
                      {"rms", s.rms},
                      {"sup_remainder", s.sup_remainder},
                      {"r_at_sup", s.r_at_sup}});
    j["shells"] = sh;
    os << j.dump(2) << "\n";
}

void AsymptoticFit::write_csv(std::ostream& os) const
{
    os << "r_inner,r_outer,count,c_local,rms,sup_remainder,r_at_sup\n";
    for (const auto& s : shells)
        os << fmt::format("{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", s.r_inner, s.r_outer, s.count,
                          s.c_local, s.rms, s.sup_remainder, s.r_at_sup);
}

// ---------------------------------------------------------------- potential

void RadialSource::validate() const
{
    if (!(delta > 2.0)) throw ArgumentError(fmt::format("radial source needs delta > 2, got {}", delta));
    if (n < 3) throw ArgumentError(fmt::format("radial source needs n >= 3, got {}", n));
    if (!(r0 > 0.0)) throw ArgumentError("radial source needs r0 > 0");
}

namespace {

bool critical(const RadialSource& s)
{
    return std::abs(s.n - s.delta) < 1e-14;
}

// int_{r0}^r t^{n-1-delta} dt
double source_mass(const RadialSource& s, double r)
{
    const double e = s.n - s.delta;
    if (critical(s)) return std::log(r / s.r0);
    return (std::pow(r, e) - std::pow(s.r0, e)) / e;
}

}  // namespace

double radial_potential_derivative(const RadialSource& src, double r)
{
    src.validate();
    if (!(r > src.r0)) throw ArgumentError(fmt::format("radial potential needs r > r0 = {}, got {}", src.r0, r));
    return std::pow(r, 1 - src.n) * source_mass(src, r);
}

double radial_potential(const RadialSource& src, double r)
{
    src.validate();
    if (!(r > src.r0)) throw ArgumentError(fmt::format("radial potential needs r > r0 = {}, got {}", src.r0, r));
    const int n = src.n;
    const double d = src.delta;
    if (critical(src))
        return -std::pow(r, 2 - n) * (std::log(r / src.r0) / (n - 2) + 1.0 / ((n - 2.0) * (n - 2.0)));
    return -(std::pow(r, 2.0 - d) / (d - 2.0) - std::pow(src.r0, n - d) * std::pow(r, 2.0 - n) / (n - 2.0)) / (n - d);
}

std::pair<double, bool> decay_rate_oracle(const RadialSource& src)
{
    src.validate();
    return {std::min(src.delta, double(src.n)) - 2.0, critical(src)};
}

// --------------------------------------------------------- derivative decay

DecayReport derivative_decay_report(const GridField& u, const AkMatrix& A, std::span<const double> radii,
                                    std::span<const double> b, double c)
{
    const auto& spec = u.spec();
    const int n = spec.dim();
    if (radii.size() < 2) throw ArgumentError("derivative_decay_report: need at least two radii");
    for (std::size_t i = 1; i < radii.size(); ++i)
        if (!(radii[i] > radii[i - 1])) throw ArgumentError("derivative_decay_report: radii must increase");
    if (!b.empty() && b.size() != static_cast<std::size_t>(n)) throw ArgumentError("derivative_decay_report: bad b");

    std::vector<double> x(static_cast<std::size_t>(n));
    GridField w(spec, 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        spec.coords(i, x);
        double v = u[i] - A.tau(x) - c;
        for (std::size_t d = 0; d < b.size(); ++d) v -= b[d] * x[d];
        w[i] = v;
    }
    DecayReport rep;
    rep.rows.resize(radii.size() - 1);
    std::vector<std::vector<double>> rs(3, std::vector<double>(rep.rows.size(), 0.0));
    for (std::size_t j = 0; j < rep.rows.size(); ++j) {
        rep.rows[j].r_inner = radii[j];
        rep.rows[j].r_outer = radii[j + 1];
    }
    for (std::size_t i : u.interior()) {
        spec.coords(i, x);
        double q = 0.0;
        for (double v : x) q += v * v;
        const double r = std::sqrt(q);
        if (r < radii.front() || r >= radii.back()) continue;
        const std::size_t j =
            static_cast<std::size_t>(std::upper_bound(radii.begin(), radii.end(), r) - radii.begin()) - 1;
        double g2 = 0.0;
        for (int d = 0; d < n; ++d) {
            const std::size_t s = spec.stride(d);
            const double gd = (w[i + s] - w[i - s]) / (2.0 * spec.spacing(d));
            g2 += gd * gd;
        }
        const double vals[3] = {std::abs(w[i]), std::sqrt(g2), discrete_hessian(w, i).frobenius()};
        double* sups[3] = {&rep.rows[j].sup_w, &rep.rows[j].sup_grad, &rep.rows[j].sup_hess};
        for (int m = 0; m < 3; ++m)
            if (vals[m] >= *sups[m]) {
                *sups[m] = vals[m];
                rs[static_cast<std::size_t>(m)][j] = r;
            }
    }
    for (int m = 0; m < 3; ++m) {
        std::vector<double> lx, ly;
        double top = 0.0;
        for (std::size_t j = 0; j < rep.rows.size(); ++j) {
            const double s = m == 0 ? rep.rows[j].sup_w : m == 1 ? rep.rows[j].sup_grad : rep.rows[j].sup_hess;
            top = std::max(top, s);
            if (s > 0.0 && rs[static_cast<std::size_t>(m)][j] > 0.0) {
                lx.push_back(std::log(rs[static_cast<std::size_t>(m)][j]));
                ly.push_back(std::log(s));
            }
        }
        if (top <= 1e-13 || lx.size() < 2)
            rep.slopes[m] = -std::numeric_limits<double>::infinity();
        else
            rep.slopes[m] = fit_line(lx, ly).slope;
    }
    return rep;
}

void DecayReport::write_json(std::ostream& os) const
{
    json j;
    j["slopes"] = {num(slopes[0]), num(slopes[1]), num(slopes[2])};
    json rowsj = json::array();
    for (const auto& r : rows)
        rowsj.push_back({{"r_inner", r.r_inner},
                         {"r_outer", r.r_outer},
                         {"sup_w", r.sup_w},
                         {"sup_grad", r.sup_grad},
                         {"sup_hess", r.sup_hess}});
    j["rows"] = rowsj;
    os << j.dump(2) << "\n";
}

}  // namespace khess
