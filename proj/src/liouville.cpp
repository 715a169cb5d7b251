#include "khess/liouville.hpp"

#include "khess/dirichlet.hpp"
#include "khess/errors.hpp"
#include "khess/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

namespace khess {

namespace {

double norm(std::span<const double> x)
{
    double q = 0.0;
    for (double v : x) q += v * v;
    return std::sqrt(q);
}

bool inside_solved(const GridSpec& spec, std::span<const double> y)
{
    for (int i = 0; i < spec.dim(); ++i) {
        const double t = 1e-9 * std::max(1.0, std::abs(y[static_cast<std::size_t>(i)]));
        if (y[static_cast<std::size_t>(i)] < spec.lower(i) - t || y[static_cast<std::size_t>(i)] > spec.upper(i) + t)
            return false;
    }
    if (spec.kind() == GridSpec::Kind::Ellipsoid) return spec.tau(y) <= spec.level() * (1.0 + 1e-12);
    return true;
}

double min_spacing(const GridSpec& spec)
{
    double h = std::numeric_limits<double>::infinity();
    for (int i = 0; i < spec.dim(); ++i) h = std::min(h, spec.spacing(i));
    return h;
}

}  // namespace

GridField rescale(const GridField& u, double R, double half_width, int nodes)
{
    if (!(R > 0.0) || !(half_width > 0.0)) throw ArgumentError("rescale: R and half_width must be positive");
    const int n = u.spec().dim();
    const GridSpec target = GridSpec::box(std::vector<double>(static_cast<std::size_t>(n), -half_width),
                                          std::vector<double>(static_cast<std::size_t>(n), half_width), nodes);
    std::vector<double> y(static_cast<std::size_t>(n));
    return GridField(target, [&](std::span<const double> x) {
        for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = R * x[static_cast<std::size_t>(i)];
        if (!inside_solved(u.spec(), y))
            throw ArgumentError(fmt::format("rescale: R x = ({:.4g}, ...) leaves the solved region for R = {}", y[0], R));
        return (u.interpolate(y) - R * R) / (R * R);
    });
}

LevelSetBounds level_set_bounds(const GridField& u, double R, double A1, double A2, double B)
{
    if (!(R > 0.0)) throw ArgumentError("level_set_bounds: R must be positive");
    if (!(A1 > 0.0) || !(A2 >= A1) || !(B >= 0.0))
        throw ArgumentError(fmt::format("level_set_bounds: need 0 < A1 <= A2 and B >= 0, got {}, {}, {}", A1, A2, B));
    const auto& spec = u.spec();
    LevelSetBounds out;
    out.cell = spec.max_spacing() / R;
    out.predicted_outer = std::sqrt(1.0 / A1);
    const double pin = 1.0 / A2 - B / (A2 * R * R);
    out.predicted_inner = pin > 0.0 ? std::sqrt(pin) : 0.0;

    std::vector<double> y(static_cast<std::size_t>(spec.dim()));
    double inner = std::numeric_limits<double>::infinity(), outer = 0.0, reach = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u.tag(i) == NodeTag::Exterior) continue;
        spec.coords(i, y);
        const double r = norm(y);
        const double r2 = r * r;
        const double v = u[i];
        const double tol = 1e-12 * std::max(1.0, std::abs(v));
        worst = std::max({worst, A1 * r2 - v - tol, v - A2 * r2 - B - tol});
        reach = std::max(reach, r / R);
        if (v < R * R)
            outer = std::max(outer, r / R);
        else
            inner = std::min(inner, r / R);
    }
    if (worst > 0.0) {
        out.growth_ok = false;
        out.warnings.push_back(fmt::format("growth bounds violated on samples by {:.3g}", worst));
    }
    if (!std::isfinite(inner)) {
        inner = reach;
        out.warnings.push_back(fmt::format("{{v < 0}} is not enclosed by the samples at R = {}", R));
    }
    out.covered = reach >= out.predicted_outer && std::isfinite(inner);
    if (reach < out.predicted_outer)
        out.warnings.push_back(fmt::format("samples reach radius {:.4g} < predicted outer {:.4g}", reach,
                                           out.predicted_outer));
    out.inner = inner;
    out.outer = outer;
    if (!out.covered) return out;
    const bool ok = out.inner >= out.predicted_inner - out.cell && out.outer <= out.predicted_outer + out.cell;
    if (!ok) {
        out.inclusions_ok = false;
        out.warnings.push_back(fmt::format("inclusions fail at R = {}: inner {:.6g} vs {:.6g}, outer {:.6g} vs {:.6g}",
                                           R, out.inner, out.predicted_inner, out.outer, out.predicted_outer));
    }
    return out;
}

RescaleReport hessian_decay(const GridField& u, const std::vector<double>& R_list, const AkMatrix& A,
                            const RescaleOptions& opts)
{
    const auto& spec = u.spec();
    const int n = spec.dim();
    if (A.dim() != n) throw ArgumentError("hessian_decay: dimension mismatch");
    if (R_list.empty()) throw ArgumentError("hessian_decay: empty R list");
    for (std::size_t i = 0; i < R_list.size(); ++i)
        if (!(R_list[i] > 0.0) || (i > 0 && !(R_list[i] > R_list[i - 1])))
            throw ArgumentError("hessian_decay: R values must be positive and increasing");
    if (!(opts.alpha > 0.0) || !(opts.alpha < 1.0)) throw ArgumentError("hessian_decay: alpha must lie in (0, 1)");

    RescaleReport rep;
    rep.alpha = opts.alpha;
    rep.A1 = 0.5 * A.a_min();
    rep.A2 = opts.A2 > 0.0 ? opts.A2 : 0.5 * A.a_max();
    std::vector<double> y(static_cast<std::size_t>(n));
    double umax = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (u.tag(i) == NodeTag::Exterior) continue;
        spec.coords(i, y);
        const double r = norm(y);
        rep.B = std::max(rep.B, u[i] - rep.A2 * r * r);
        umax = std::max(umax, std::abs(u[i]));
    }
    const double h = min_spacing(spec);
    rep.noise_floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, umax) / (h * h);
    rep.holder_noise_floor = 2.0 * std::pow(4.0, opts.alpha) * rep.noise_floor;

    const SymMatrix Am = A.matrix();
    for (double R : R_list) {
        RescaleRow row;
        row.R = R;
        row.ball_radius = R / std::sqrt(8.0 * rep.A2);
        std::vector<std::vector<double>> pos;
        std::vector<SymMatrix> hess;
        for (std::size_t i : u.interior()) {
            spec.coords(i, y);
            const double r = norm(y);
            if (r >= row.ball_radius || r < opts.exclude_fraction * row.ball_radius) continue;
            pos.emplace_back(y);
            hess.push_back(discrete_hessian(u, i));
        }
        if (pos.empty()) throw ArgumentError(fmt::format("hessian_decay: no interior nodes in the ball for R = {}", R));
        row.nodes = pos.size();
        for (const auto& H : hess) {
            row.sup_deviation = std::max(row.sup_deviation, (H - Am).frobenius());
            row.max_residual = std::max(row.max_residual, std::abs(evaluate_operator(H, A.k()).value - 1.0));
        }
        const double sep = R / 4.0;
        std::mutex mu;
        double proxy = 0.0;
        parallel_for(pos.size(), [&](std::size_t begin, std::size_t end) {
            double local = 0.0;
            for (std::size_t i = begin; i < end; ++i)
                for (std::size_t j = i + 1; j < pos.size(); ++j) {
                    double d2 = 0.0;
                    for (int q = 0; q < n; ++q) {
                        const double dq = pos[i][static_cast<std::size_t>(q)] - pos[j][static_cast<std::size_t>(q)];
                        d2 += dq * dq;
                    }
                    const double d = std::sqrt(d2);
                    if (d < sep) continue;
                    local = std::max(local, (hess[i] - hess[j]).frobenius() / std::pow(d, opts.alpha));
                }
            std::lock_guard lock(mu);
            proxy = std::max(proxy, local);
        });
        row.holder_proxy = std::pow(R, opts.alpha) * proxy;
        if (rep.B >= 0.0 && rep.A1 > 0.0) row.level = level_set_bounds(u, R, rep.A1, rep.A2, rep.B);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

bool RescaleReport::nonincreasing() const
{
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].sup_deviation > rows[i - 1].sup_deviation + noise_floor) return false;
        if (rows[i].holder_proxy > rows[i - 1].holder_proxy + holder_noise_floor) return false;
    }
    return true;
}

bool RescaleReport::ends_at_noise(double factor) const
{
    if (rows.empty()) return false;
    return rows.back().sup_deviation <= factor * noise_floor && rows.back().holder_proxy <= factor * holder_noise_floor;
}

void RescaleReport::write_json(std::ostream& os) const
{
    nlohmann::json j;
    j["alpha"] = alpha;
    j["A1"] = A1;
    j["A2"] = A2;
    j["B"] = B;
    j["noise_floor"] = noise_floor;
    j["holder_noise_floor"] = holder_noise_floor;
    j["nonincreasing"] = nonincreasing();
    j["ends_at_noise"] = ends_at_noise();
    auto rowsj = nlohmann::json::array();
    for (const auto& r : rows)
        rowsj.push_back({{"R", r.R},
                         {"ball_radius", r.ball_radius},
                         {"nodes", r.nodes},
                         {"sup_deviation", r.sup_deviation},
                         {"holder_proxy", r.holder_proxy},
                         {"max_residual", r.max_residual},
                         {"level_set",
                          {{"inner", r.level.inner},
                           {"outer", r.level.outer},
                           {"predicted_inner", r.level.predicted_inner},
                           {"predicted_outer", r.level.predicted_outer},
                           {"cell", r.level.cell},
                           {"growth_ok", r.level.growth_ok},
                           {"covered", r.level.covered},
                           {"inclusions_ok", r.level.inclusions_ok},
                           {"warnings", r.level.warnings}}}});
    j["rows"] = rowsj;
    os << j.dump(2) << "\n";
}

void RescaleReport::write_csv(std::ostream& os) const
{
    os << "R,ball_radius,nodes,sup_deviation,holder_proxy,max_residual,inner,outer\n";
    for (const auto& r : rows)
        os << fmt::format("{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.R, r.ball_radius, r.nodes,
                          r.sup_deviation, r.holder_proxy, r.max_residual, r.level.inner, r.level.outer);
}

}  // namespace khess
