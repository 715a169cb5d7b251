#include "commands.hpp"

#include <cstdlib>
#include <functional>
#include <map>

#include <CLI11.hpp>

int main(int argc, char** argv)
{
    using namespace khess::cli;
    CLI::App app{"k-Hessian Dirichlet solves, entire solutions and asymptotic diagnostics"};
    app.require_subcommand(1);
    Context ctx;
    const std::map<std::string, std::pair<std::string, std::function<int(const Context&)>>> commands{
        {"solve-dirichlet", {"solve one Dirichlet problem on a box or ellipsoid", cmd_solve_dirichlet}},
        {"build-entire", {"nested solves, barrier sandwich and limit on a compact box", cmd_build_entire}},
        {"fit-asymptotics", {"fit b, c and the decay exponent of u - x^T A x / 2", cmd_fit_asymptotics}},
        {"check-liouville", {"rescaled Hessian decay and level-set inclusions", cmd_check_liouville}},
        {"barriers", {"construct the sub/supersolution pair and its constants", cmd_barriers}},
        {"selftest", {"run the property suites", cmd_selftest}}};
    std::function<int(const Context&)> chosen;
    for (const auto& [name, entry] : commands) {
        auto* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", ctx.config, "JSON configuration file");
        sub->add_option("--out", ctx.out, "output directory")->capture_default_str();
        sub->add_option("--threads", ctx.threads, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber)->capture_default_str();
        sub->add_option("--seed", ctx.seed, "seed for randomized sampling")->capture_default_str();
        sub->callback([&chosen, fn = entry.second] { chosen = fn; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }
    return chosen ? chosen(ctx) : kConfigError;
}
