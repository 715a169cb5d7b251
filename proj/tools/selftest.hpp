#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace khess::cli {

struct SuiteResult {
    std::string name;
    bool passed = false;
    nlohmann::json metrics;
    double seconds = 0.0;
};

/// Property suites: symmetric-function oracles, source derivatives, barrier
/// ODE identities, manufactured solutions, fitting and rescaling checks.
std::vector<SuiteResult> run_selftest(std::uint64_t seed);

}  // namespace khess::cli
