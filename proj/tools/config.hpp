#pragma once

// Schema-checked access to JSON run configurations.

#include "khess/dirichlet.hpp"
#include "khess/fmodel.hpp"
#include "khess/grid.hpp"
#include "khess/radial_barriers.hpp"
#include "khess/symfunc.hpp"

#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace khess::cli {

using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A JSON object with a dotted path; every key read is recorded so that
/// finish() can reject the rest.
class Node {
public:
    Node(const json& j, std::string path);

    const std::string& path() const noexcept { return path_; }
    bool has(const std::string& key) const;

    double number(const std::string& key) const;
    double number(const std::string& key, double fallback) const;
    std::optional<double> optional_number(const std::string& key) const;
    int integer(const std::string& key) const;
    int integer(const std::string& key, int fallback) const;
    bool boolean(const std::string& key, bool fallback) const;
    std::string string(const std::string& key) const;
    std::string string(const std::string& key, const std::string& fallback) const;
    std::vector<double> numbers(const std::string& key) const;
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const;
    Node object(const std::string& key) const;
    std::vector<Node> objects(const std::string& key) const;

    /// Throws ConfigError naming the first unknown key.
    void finish() const;

private:
    const json& at(const std::string& key) const;
    std::string field(const std::string& key) const;

    const json* j_;
    std::string path_;
    std::shared_ptr<std::set<std::string>> used_;
};

/// Parses the file; syntax errors carry line and column.
json load_config(const std::string& path);

AkMatrix parse_A(const Node& root);
FModel parse_f(const Node& node, int dim);
SolverOptions parse_solver(const Node& node);
BarrierOptions parse_barriers(const Node& node);
GridSpec parse_domain(const Node& node, const AkMatrix& A);

}  // namespace khess::cli
