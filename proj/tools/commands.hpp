#pragma once

#include <cstdint>
#include <string>

namespace khess::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kNonconvergence = 2, kCertificateFailure = 3 };

struct Context {
    std::string config;
    std::string out = "khess_out";
    int threads = 1;
    std::uint64_t seed = 1;
};

int cmd_solve_dirichlet(const Context& ctx);
int cmd_build_entire(const Context& ctx);
int cmd_fit_asymptotics(const Context& ctx);
int cmd_check_liouville(const Context& ctx);
int cmd_barriers(const Context& ctx);
int cmd_selftest(const Context& ctx);

}  // namespace khess::cli
