#include "commands.hpp"

#include "config.hpp"
#include "selftest.hpp"

#include "khess/asymptotics.hpp"
#include "khess/entire.hpp"
#include "khess/errors.hpp"
#include "khess/liouville.hpp"
#include "khess/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#ifndef KHESS_VERSION
#define KHESS_VERSION "0.0.0"
#endif

namespace khess::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

json num(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

class Manifest {
public:
    Manifest(std::string command, const Context& ctx) : dir_(ctx.out)
    {
        j_["command"] = std::move(command);
        j_["seed"] = ctx.seed;
        j_["threads"] = ctx.threads;
        j_["versions"] = {{"khess", KHESS_VERSION},
                          {"field_format", 1},
                          {"fmt", FMT_VERSION},
                          {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                                        NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)},
                          {"cli11", CLI11_VERSION}};
        j_["config"] = json::object();
        j_["artifacts"] = json::array();
        timings_ = json::object();
    }

    json& operator[](const std::string& key) { return j_[key]; }
    fs::path path(const std::string& name) const { return dir_ / name; }

    fs::path artifact(const std::string& name)
    {
        j_["artifacts"].push_back(name);
        return dir_ / name;
    }
    void timing(const std::string& key, double seconds) { timings_[key] = seconds; }

    void write_json_artifact(const std::string& name, const json& j)
    {
        std::ofstream os(artifact(name));
        os << j.dump(2) << "\n";
    }

    int finish(int code, const std::string& status, const std::string& message)
    {
        j_["exit_code"] = code;
        j_["status"] = status;
        j_["message"] = message;
        std::error_code ec;
        fs::create_directories(dir_, ec);
        std::ofstream os(dir_ / "manifest.json");
        os << j_.dump(2) << "\n";
        std::ofstream ts(dir_ / "timings.json");
        ts << timings_.dump(2) << "\n";
        if (!os || !ts) std::cerr << "error: cannot write manifest to " << dir_.string() << "\n";
        return code;
    }

private:
    fs::path dir_;
    json j_;
    json timings_;
};

json report_json(const SolveReport& r)
{
    return {{"converged", r.converged},
            {"iterations", r.iterations},
            {"residual", num(r.residual)},
            {"damping", r.damping},
            {"min_sigma", num(r.min_sigma)},
            {"cone_violations", r.cone_violations},
            {"continuation", r.stages},
            {"warm_started", r.warm_started},
            {"message", r.message}};
}

json barriers_json(const BarrierPair& p)
{
    return {{"k", p.k},
            {"envelope", {{"C0", p.env.C0}, {"s0", p.env.s0}, {"beta", p.env.beta}}},
            {"kappa", p.kappa},
            {"h_k", p.hk},
            {"H1", p.H1},
            {"H2", p.H2},
            {"c0", p.c0_bump},
            {"c1", p.c1},
            {"c2", p.c2},
            {"eta_scale", p.eta_scale},
            {"slope_inside", p.slope_inside},
            {"slope_outside", p.slope_outside},
            {"beta_minus", num(p.beta_minus)},
            {"beta_plus", num(p.beta_plus)},
            {"tau_max", p.tau_max}};
}

void write_field(Manifest& m, const GridField& u, const std::string& stem)
{
    u.write_binary_file(m.artifact(stem + ".khes").string());
    u.write_csv_file(m.artifact(stem + ".csv").string());
}

// Runs body with the parsed config and maps failures onto exit codes.
int run(const Context& ctx, const std::string& name, bool needs_config,
        const std::function<int(Manifest&, const Node&)>& body)
{
    Manifest m(name, ctx);
    const auto t0 = Clock::now();
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) {
        std::cerr << "error: cannot create output directory " << ctx.out << ": " << ec.message() << "\n";
        return kConfigError;
    }
    set_threads(ctx.threads);
    auto done = [&](int code, const std::string& status, const std::string& msg) {
        m.timing("total_seconds", since(t0));
        if (code != kOk) std::cerr << "error: " << msg << "\n";
        return m.finish(code, status, msg);
    };
    try {
        json cfg = json::object();
        if (needs_config) {
            if (ctx.config.empty()) throw ConfigError("--config is required for " + name);
            cfg = load_config(ctx.config);
        } else if (!ctx.config.empty()) {
            cfg = load_config(ctx.config);
        }
        m["config"] = cfg;
        Node root(cfg, "");
        const int code = body(m, root);
        return done(code, code == kOk ? "ok" : "failed", code == kOk ? "" : "see report");
    } catch (const ConfigError& e) {
        return done(kConfigError, "config_error", e.what());
    } catch (const ArgumentError& e) {
        return done(kConfigError, "argument_error", e.what());
    } catch (const PreconditionError& e) {
        return done(kConfigError, "precondition_error", e.what());
    } catch (const NonconvergenceError& e) {
        m["solve_report"] = report_json(e.report());
        return done(kNonconvergence, "nonconvergence", e.what());
    } catch (const ConeViolation& e) {
        return done(kNonconvergence, "cone_violation", e.what());
    } catch (const NumericError& e) {
        return done(kNonconvergence, "numeric_error", e.what());
    } catch (const ConstantsError& e) {
        return done(kCertificateFailure, "constants_failure", e.what());
    } catch (const std::exception& e) {
        return done(kConfigError, "error", e.what());
    }
}

}  // namespace

int cmd_solve_dirichlet(const Context& ctx)
{
    return run(ctx, "solve-dirichlet", true, [&](Manifest& m, const Node& root) {
        const AkMatrix A = parse_A(root);
        const FModel f = parse_f(root.object("f"), A.dim());
        const GridSpec spec = parse_domain(root.object("domain"), A);
        const SolverOptions opts = root.has("solver") ? parse_solver(root.object("solver")) : SolverOptions{};
        root.finish();
        m["A"] = std::vector<double>(A.a().begin(), A.a().end());
        m["f"] = f.describe();
        const auto t0 = Clock::now();
        try {
            auto res = continuation_solve(spec, f, A.k(), A, opts);
            m.timing("solve_seconds", since(t0));
            m["solve_report"] = report_json(res.report);
            m.write_json_artifact("report.json", report_json(res.report));
            write_field(m, res.u, "u");
            return int(kOk);
        } catch (const NonconvergenceError& e) {
            m.timing("solve_seconds", since(t0));
            m.write_json_artifact("report.json", report_json(e.report()));
            throw;
        }
    });
}

int cmd_build_entire(const Context& ctx)
{
    return run(ctx, "build-entire", true, [&](Manifest& m, const Node& root) {
        const AkMatrix A = parse_A(root);
        const FModel f = parse_f(root.object("f"), A.dim());
        const Node kn = root.object("compact");
        Box K{kn.numbers("lower"), kn.numbers("upper")};
        NestedOptions opts;
        opts.compact_nodes = kn.integer("nodes", opts.compact_nodes);
        kn.finish();
        opts.nodes = root.integer("nodes", opts.nodes);
        opts.warm_start = root.boolean("warm_start", opts.warm_start);
        opts.parallel_stages = root.boolean("parallel_stages", opts.parallel_stages);
        opts.slack_factor = root.number("slack_factor", opts.slack_factor);
        if (root.has("solver")) opts.solver = parse_solver(root.object("solver"));
        if (root.has("barriers")) opts.barriers = parse_barriers(root.object("barriers"));
        const bool stage_fields = root.boolean("write_stage_fields", true);
        const auto p = HessianProblem::make(A, f);
        std::vector<double> s_list;
        if (root.has("s_list"))
            s_list = root.numbers("s_list");
        else
            s_list = default_s_list(p, K, root.integer("stages", 3));
        root.finish();
        m["A"] = std::vector<double>(A.a().begin(), A.a().end());
        m["f"] = f.describe();
        m["s_list"] = s_list;

        const auto t0 = Clock::now();
        const auto run_result = run_nested(p, s_list, K, opts);
        m.timing("nested_seconds", since(t0));
        m["barriers"] = barriers_json(*run_result.barriers);
        m["geometry_margin"] = run_result.geometry_margin;
        m["paper_margin"] = run_result.paper_margin;
        json stages = json::array();
        for (std::size_t i = 0; i < run_result.stages.size(); ++i) {
            const auto& st = run_result.stages[i];
            stages.push_back({{"s", st.s},
                              {"converged", st.converged},
                              {"h", st.h},
                              {"slack", st.slack},
                              {"margin", st.margin},
                              {"sandwich_ok", st.sandwich_ok},
                              {"sup_deviation", st.sup_deviation},
                              {"bound_ok", st.bound_ok},
                              {"gap_previous", st.gap_previous < 0.0 ? json(nullptr) : json(st.gap_previous)},
                              {"report", report_json(st.report)}});
            m.timing(fmt::format("stage_{}_seconds", i), st.report.wall_seconds);
            if (stage_fields && st.u) write_field(m, *st.u, fmt::format("stage_{}", i));
        }
        m["stages"] = stages;
        const auto gaps = run_result.cauchy_gaps();
        bool decreasing = gaps.size() >= 2;
        for (std::size_t i = 1; i < gaps.size(); ++i) decreasing = decreasing && gaps[i] < gaps[i - 1];
        m["cauchy"] = {{"gaps", gaps},
                       {"strictly_decreasing", decreasing},
                       {"ratio_last_first", gaps.size() >= 2 ? json(gaps.back() / gaps.front()) : json(nullptr)}};
        int converged = 0;
        for (const auto& st : run_result.stages) converged += st.converged ? 1 : 0;
        if (converged >= 2) {
            const auto lim = extract_limit(run_result);
            m["limit"] = {{"cauchy_gap", lim.cauchy_gap},
                          {"bound", lim.bound},
                          {"sup_deviation", lim.sup_deviation},
                          {"bound_ok", lim.bound_ok}};
            write_field(m, lim.u, "limit");
        }
        m["failure"] = run_result.failure;
        if (!run_result.failed) return int(kOk);
        std::cerr << "error: " << run_result.failure << "\n";
        return converged == static_cast<int>(run_result.stages.size()) ? int(kCertificateFailure) : int(kNonconvergence);
    });
}

int cmd_barriers(const Context& ctx)
{
    return run(ctx, "barriers", true, [&](Manifest& m, const Node& root) {
        const AkMatrix A = parse_A(root);
        const FModel f = parse_f(root.object("f"), A.dim());
        const BarrierOptions opts = root.has("barriers") ? parse_barriers(root.object("barriers")) : BarrierOptions{};
        root.finish();
        const auto p = HessianProblem::make(A, f);
        const auto t0 = Clock::now();
        const auto pair = build_barriers(p.f, p.A, p.env, opts);
        m.timing("barrier_seconds", since(t0));
        m["barriers"] = barriers_json(pair);
        m.write_json_artifact("barriers.json", barriers_json(pair));
        pair.upper.write_csv_file(m.artifact("upper.csv").string());
        pair.lower.write_csv_file(m.artifact("lower.csv").string());
        pair.v3.profile.write_csv_file(m.artifact("v3.csv").string());
        if (pair.v1) write_field(m, *pair.v1, "v1");
        return int(kOk);
    });
}

int cmd_fit_asymptotics(const Context& ctx)
{
    return run(ctx, "fit-asymptotics", true, [&](Manifest& m, const Node& root) {
        const AkMatrix A = parse_A(root);
        const Node an = root.object("annulus");
        ShellOptions so;
        so.r_inner = an.number("r_inner");
        so.r_outer = an.number("r_outer");
        so.shells = an.integer("shells", so.shells);
        so.min_points = static_cast<std::size_t>(an.integer("min_points", static_cast<int>(so.min_points)));
        an.finish();
        const bool decay = root.boolean("decay", true);
        const int n = A.dim();
        std::optional<AsymptoticFit> fit;
        std::optional<GridField> field;
        if (root.has("input") == root.has("radial_source"))
            throw ConfigError("exactly one of 'input' and 'radial_source' is required");
        if (root.has("input")) {
            const auto path = root.string("input");
            if (!fs::exists(path)) throw ConfigError(fmt::format("field 'input': file '{}' does not exist", path));
            root.finish();
            field = GridField::read_binary_file(path);
            fit = fit_quadratic_remainder(*field, A, so);
        } else {
            const Node sn = root.object("radial_source");
            RadialSource src{sn.number("delta"), n, sn.number("r0", 1.0)};
            sn.finish();
            const int per_shell = root.integer("samples_per_shell", 400);
            root.finish();
            src.validate();
            if (per_shell < 2) throw ConfigError("field 'samples_per_shell': must be at least 2");
            if (!(so.r_inner > src.r0)) throw ConfigError("field 'annulus.r_inner': must exceed r0");
            std::mt19937_64 rng(ctx.seed);
            std::normal_distribution<double> nd;
            std::uniform_real_distribution<double> ud(0.0, 1.0);
            std::vector<double> pts, vals, dir(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
            const double ratio = std::pow(so.r_outer / so.r_inner, 1.0 / so.shells);
            for (int j = 0; j < so.shells; ++j)
                for (int q = 0; q < per_shell / 2; ++q) {
                    double len = 0.0;
                    for (auto& d : dir) {
                        d = nd(rng);
                        len += d * d;
                    }
                    len = std::sqrt(len);
                    const double r = so.r_inner * std::pow(ratio, j + ud(rng));
                    for (double sgn : {1.0, -1.0}) {
                        for (int i = 0; i < n; ++i)
                            x[static_cast<std::size_t>(i)] = sgn * r * dir[static_cast<std::size_t>(i)] / len;
                        pts.insert(pts.end(), x.begin(), x.end());
                        vals.push_back(A.tau(x) + radial_potential(src, r));
                    }
                }
            const auto oracle = decay_rate_oracle(src);
            m["oracle"] = {{"exponent", oracle.first}, {"log_flag", oracle.second}};
            fit = fit_quadratic_remainder(pts, vals, A, so);
        }
        std::ostringstream js;
        fit->write_json(js);
        const json fj = json::parse(js.str());
        m["fit"] = fj;
        m.write_json_artifact("fit.json", fj);
        {
            std::ofstream os(m.artifact("shells.csv"));
            fit->write_csv(os);
        }
        if (field && decay) {
            std::vector<double> radii;
            for (const auto& s : fit->shells) radii.push_back(s.r_inner);
            radii.push_back(fit->shells.back().r_outer);
            const auto rep = derivative_decay_report(*field, A, radii, fit->b, fit->c);
            std::ostringstream ds;
            rep.write_json(ds);
            const json dj = json::parse(ds.str());
            m["decay"] = dj;
            m.write_json_artifact("decay.json", dj);
        }
        return int(kOk);
    });
}

int cmd_check_liouville(const Context& ctx)
{
    return run(ctx, "check-liouville", true, [&](Manifest& m, const Node& root) {
        const AkMatrix A = parse_A(root);
        RescaleOptions ro;
        ro.alpha = root.number("alpha", ro.alpha);
        ro.A2 = root.number("A2", ro.A2);
        ro.exclude_fraction = root.number("exclude_fraction", ro.exclude_fraction);
        const auto R = root.numbers("R");
        std::optional<GridField> u;
        if (root.has("input") == root.has("fixture")) throw ConfigError("exactly one of 'input' and 'fixture' is required");
        if (root.has("input")) {
            const auto path = root.string("input");
            if (!fs::exists(path)) throw ConfigError(fmt::format("field 'input': file '{}' does not exist", path));
            u = GridField::read_binary_file(path);
        } else {
            const Node fx = root.object("fixture");
            const auto type = fx.string("type", "quadratic");
            if (type != "quadratic") throw ConfigError(fmt::format("field 'fixture.type': unknown fixture '{}'", type));
            const double s = fx.number("s", 32.0);
            const int nodes = fx.integer("nodes", 33);
            const double shift = fx.number("constant", 0.0);
            fx.finish();
            const auto spec = GridSpec::ellipsoid(std::vector<double>(A.a().begin(), A.a().end()), s, nodes);
            u = GridField(spec, [&](std::span<const double> x) { return A.tau(x) + shift; });
        }
        root.finish();
        if (u->spec().dim() != A.dim()) throw ConfigError("field 'A': dimension differs from the input field");
        const auto t0 = Clock::now();
        const auto rep = hessian_decay(*u, R, A, ro);
        m.timing("liouville_seconds", since(t0));
        std::ostringstream js;
        rep.write_json(js);
        const json rj = json::parse(js.str());
        m["liouville"] = rj;
        double worst = 0.0;
        for (const auto& r : rep.rows) worst = std::max({worst, r.sup_deviation, r.holder_proxy});
        m["max_metric"] = worst;
        m.write_json_artifact("liouville.json", rj);
        std::ofstream os(m.artifact("liouville.csv"));
        rep.write_csv(os);
        return int(kOk);
    });
}

int cmd_selftest(const Context& ctx)
{
    return run(ctx, "selftest", false, [&](Manifest& m, const Node& root) {
        root.finish();
        const auto suites = run_selftest(ctx.seed);
        int failed = 0;
        json table = json::array();
        std::cout << fmt::format("{:<24} {:<6} {}\n", "suite", "status", "seconds");
        for (const auto& s : suites) {
            failed += s.passed ? 0 : 1;
            table.push_back({{"suite", s.name}, {"passed", s.passed}, {"metrics", s.metrics}});
            m.timing(s.name + "_seconds", s.seconds);
            std::cout << fmt::format("{:<24} {:<6} {:.2f}\n", s.name, s.passed ? "PASS" : "FAIL", s.seconds);
        }
        std::cout << fmt::format("{} of {} suites passed\n", suites.size() - failed, suites.size());
        m["suites"] = table;
        m["failed_suites"] = failed;
        return std::min(failed, 125);
    });
}

}  // namespace khess::cli
