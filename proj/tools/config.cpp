#include "config.hpp"

#include "khess/errors.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace khess::cli {

Node::Node(const json& j, std::string path)
    : j_(&j), path_(std::move(path)), used_(std::make_shared<std::set<std::string>>())
{
    if (!j.is_object()) throw ConfigError(fmt::format("field '{}': expected an object", path_.empty() ? "<root>" : path_));
}

std::string Node::field(const std::string& key) const
{
    return path_.empty() ? key : path_ + "." + key;
}

bool Node::has(const std::string& key) const
{
    return j_->contains(key);
}

const json& Node::at(const std::string& key) const
{
    used_->insert(key);
    auto it = j_->find(key);
    if (it == j_->end()) throw ConfigError(fmt::format("field '{}': required key missing", field(key)));
    return *it;
}

double Node::number(const std::string& key) const
{
    const auto& v = at(key);
    if (!v.is_number()) throw ConfigError(fmt::format("field '{}': expected a number, got {}", field(key), v.dump()));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(fmt::format("field '{}': must be finite", field(key)));
    return d;
}

double Node::number(const std::string& key, double fallback) const
{
    used_->insert(key);
    return has(key) ? number(key) : fallback;
}

std::optional<double> Node::optional_number(const std::string& key) const
{
    used_->insert(key);
    if (!has(key) || (*j_)[key].is_null()) return std::nullopt;
    return number(key);
}

int Node::integer(const std::string& key) const
{
    const auto& v = at(key);
    if (!v.is_number_integer())
        throw ConfigError(fmt::format("field '{}': expected an integer, got {}", field(key), v.dump()));
    return v.get<int>();
}

int Node::integer(const std::string& key, int fallback) const
{
    used_->insert(key);
    return has(key) ? integer(key) : fallback;
}

bool Node::boolean(const std::string& key, bool fallback) const
{
    used_->insert(key);
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_boolean()) throw ConfigError(fmt::format("field '{}': expected true or false, got {}", field(key), v.dump()));
    return v.get<bool>();
}

std::string Node::string(const std::string& key) const
{
    const auto& v = at(key);
    if (!v.is_string()) throw ConfigError(fmt::format("field '{}': expected a string, got {}", field(key), v.dump()));
    return v.get<std::string>();
}

std::string Node::string(const std::string& key, const std::string& fallback) const
{
    used_->insert(key);
    return has(key) ? string(key) : fallback;
}

std::vector<double> Node::numbers(const std::string& key) const
{
    const auto& v = at(key);
    if (!v.is_array()) throw ConfigError(fmt::format("field '{}': expected an array of numbers", field(key)));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number())
            throw ConfigError(fmt::format("field '{}[{}]': expected a number, got {}", field(key), i, v[i].dump()));
        out.push_back(v[i].get<double>());
    }
    return out;
}

std::vector<double> Node::numbers(const std::string& key, std::vector<double> fallback) const
{
    used_->insert(key);
    return has(key) ? numbers(key) : fallback;
}

Node Node::object(const std::string& key) const
{
    return Node(at(key), field(key));
}

std::vector<Node> Node::objects(const std::string& key) const
{
    const auto& v = at(key);
    if (!v.is_array()) throw ConfigError(fmt::format("field '{}': expected an array of objects", field(key)));
    std::vector<Node> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(v[i], fmt::format("{}[{}]", field(key), i));
    return out;
}

void Node::finish() const
{
    for (auto it = j_->begin(); it != j_->end(); ++it)
        if (!used_->count(it.key())) throw ConfigError(fmt::format("field '{}': unknown key", field(it.key())));
}

json load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError(fmt::format("cannot open config '{}'", path));
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("{}: {}", path, e.what()));
    }
}

AkMatrix parse_A(const Node& root)
{
    const int k = root.integer("k");
    std::vector<double> a;
    if (root.has("A")) {
        a = root.numbers("A");
    } else {
        const int n = root.integer("n");
        if (n < 1) throw ConfigError("field 'n': must be positive");
        a.assign(static_cast<std::size_t>(n), 1.0);
    }
    if (a.size() < 2) throw ConfigError("field 'A': need at least two diagonal entries");
    if (k < 1 || k > static_cast<int>(a.size()))
        throw ConfigError(fmt::format("field 'k': {} out of range 1..{}", k, a.size()));
    for (double v : a)
        if (!(v > 0.0)) throw ConfigError("field 'A': entries must be positive");
    return normalize_to_Ak(a, k);
}

FModel parse_f(const Node& node, int dim)
{
    const auto type = node.string("type");
    FModel f = FModel::constant(dim);
    if (type == "constant") {
        f = FModel::constant(dim, node.number("value", 1.0));
    } else if (type == "power_tail") {
        f = FModel::power_tail(dim, node.number("C0"), node.number("beta"), node.number("sign", 1.0));
    } else if (type == "bump") {
        auto c = node.numbers("center", std::vector<double>(static_cast<std::size_t>(dim), 0.0));
        if (static_cast<int>(c.size()) != dim)
            throw ConfigError(fmt::format("field '{}.center': expected {} entries", node.path(), dim));
        f = FModel::bump(std::move(c), node.number("radius"), node.number("amplitude"));
    } else if (type == "sum") {
        std::vector<FModel> terms;
        for (const auto& t : node.objects("terms")) terms.push_back(parse_f(t, dim));
        f = FModel::sum(std::move(terms));
    } else {
        throw ConfigError(fmt::format("field '{}.type': unknown variant '{}' (constant, power_tail, bump, sum)",
                                      node.path(), type));
    }
    node.finish();
    return f;
}

SolverOptions parse_solver(const Node& node)
{
    SolverOptions o;
    o.tol = node.number("tol", o.tol);
    o.max_iterations = node.integer("max_iterations", o.max_iterations);
    o.max_halvings = node.integer("max_halvings", o.max_halvings);
    o.armijo = node.number("armijo", o.armijo);
    o.sigma_min = node.number("sigma_min", o.sigma_min);
    o.linear_tol = node.number("linear_tol", o.linear_tol);
    o.linear_max_iterations = node.integer("linear_max_iterations", o.linear_max_iterations);
    o.min_step = node.number("min_step", o.min_step);
    node.finish();
    if (!(o.tol > 0.0) || o.max_iterations < 1 || o.max_halvings < 0 || !(o.sigma_min > 0.0) ||
        !(o.min_step > 0.0 && o.min_step <= 1.0))
        throw ConfigError(fmt::format("field '{}': solver options out of range", node.path()));
    return o;
}

BarrierOptions parse_barriers(const Node& node)
{
    BarrierOptions o;
    o.tau_max = node.number("tau_max", o.tau_max);
    o.knot_ratio = node.number("knot_ratio", o.knot_ratio);
    o.rel_tol = node.number("rel_tol", o.rel_tol);
    o.H2_margin = node.number("H2_margin", o.H2_margin);
    o.H2_override = node.optional_number("H2");
    o.c0_override = node.optional_number("c0");
    o.v1_nodes = node.integer("v1_nodes", o.v1_nodes);
    if (node.has("solver")) o.solver = parse_solver(node.object("solver"));
    node.finish();
    return o;
}

GridSpec parse_domain(const Node& node, const AkMatrix& A)
{
    const auto type = node.string("type");
    const int nodes = node.integer("nodes", 33);
    const std::size_t n = static_cast<std::size_t>(A.dim());
    std::optional<GridSpec> spec;
    try {
        if (type == "box") {
            auto lo = node.numbers("lower"), hi = node.numbers("upper");
            if (lo.size() != n || hi.size() != n)
                throw ConfigError(fmt::format("field '{}': lower/upper need {} entries", node.path(), n));
            spec = GridSpec::box(std::move(lo), std::move(hi), nodes);
        } else if (type == "ellipsoid") {
            spec = GridSpec::ellipsoid(std::vector<double>(A.a().begin(), A.a().end()), node.number("s"), nodes);
        } else {
            throw ConfigError(fmt::format("field '{}.type': unknown domain '{}' (box, ellipsoid)", node.path(), type));
        }
    } catch (const ArgumentError& e) {
        throw ConfigError(fmt::format("field '{}': {}", node.path(), e.what()));
    }
    node.finish();
    return *spec;
}

}  // namespace khess::cli
