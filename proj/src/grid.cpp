#include "khess/grid.hpp"

#include "khess/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

namespace khess {

namespace {

constexpr char kMagic[4] = {'K', 'H', 'E', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v)
{
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v)
{
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v)
{
    put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(std::istream& is)
{
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ArgumentError("field file: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is)
{
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw ArgumentError("field file: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is)
{
    return std::bit_cast<double>(get_u64(is));
}

void check_nodes(int nodes)
{
    if (nodes < 17 || nodes % 2 == 0)
        throw ArgumentError(fmt::format("grid: nodes per axis must be odd and >= 17, got {}", nodes));
}

// Cubic Lagrange weights on nodes base..base+3 for local coordinate t.
void lagrange4(double t, double w[4])
{
    const double x0 = 0.0, x1 = 1.0, x2 = 2.0, x3 = 3.0;
    w[0] = (t - x1) * (t - x2) * (t - x3) / ((x0 - x1) * (x0 - x2) * (x0 - x3));
    w[1] = (t - x0) * (t - x2) * (t - x3) / ((x1 - x0) * (x1 - x2) * (x1 - x3));
    w[2] = (t - x0) * (t - x1) * (t - x3) / ((x2 - x0) * (x2 - x1) * (x2 - x3));
    w[3] = (t - x0) * (t - x1) * (t - x2) / ((x3 - x0) * (x3 - x1) * (x3 - x2));
}

}  // namespace

// ------------------------------------------------------------------ GridSpec

GridSpec GridSpec::box(std::vector<double> lower, std::vector<double> upper, int nodes)
{
    if (lower.size() != upper.size() || lower.empty())
        throw ArgumentError("grid: box corners must have equal nonzero dimension");
    check_nodes(nodes);
    GridSpec g;
    g.kind_ = Kind::Box;
    const std::size_t n = lower.size();
    g.nodes_.assign(n, nodes);
    g.h_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(upper[i] > lower[i])) throw ArgumentError("grid: box upper corner must exceed lower");
        g.h_[i] = (upper[i] - lower[i]) / (nodes - 1);
    }
    g.lower_ = std::move(lower);
    g.finalize();
    return g;
}

GridSpec GridSpec::ellipsoid(std::vector<double> a, double s, int nodes)
{
    if (a.empty()) throw ArgumentError("grid: empty ellipsoid matrix");
    if (!(s > 0.0)) throw ArgumentError("grid: sublevel value s must be positive");
    check_nodes(nodes);
    GridSpec g;
    g.kind_ = Kind::Ellipsoid;
    const std::size_t n = a.size();
    g.nodes_.assign(n, nodes);
    g.lower_.resize(n);
    g.h_.resize(n);
    const double shrink = 1.0 - 4.0 / (nodes - 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(a[i] > 0.0)) throw ArgumentError("grid: ellipsoid matrix must be positive definite");
        const double L = std::sqrt(2.0 * s / a[i]) / shrink;
        g.lower_[i] = -L;
        g.h_[i] = 2.0 * L / (nodes - 1);
    }
    g.a_ = std::move(a);
    g.s_ = s;
    g.finalize();
    return g;
}

void GridSpec::finalize()
{
    const std::size_t n = nodes_.size();
    stride_.assign(n, 1);
    for (std::size_t i = n - 1; i-- > 0;) stride_[i] = stride_[i + 1] * static_cast<std::size_t>(nodes_[i + 1]);
    size_ = stride_[0] * static_cast<std::size_t>(nodes_[0]);
}

double GridSpec::upper(int axis) const noexcept
{
    return lower(axis) + spacing(axis) * (nodes(axis) - 1);
}

double GridSpec::max_spacing() const noexcept
{
    return *std::max_element(h_.begin(), h_.end());
}

double GridSpec::tau(std::span<const double> x) const noexcept
{
    double t = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i) t += a_[i] * x[i] * x[i];
    return 0.5 * t;
}

void GridSpec::multi_index(std::size_t idx, std::span<int> out) const noexcept
{
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        out[i] = static_cast<int>(idx / stride_[i]);
        idx %= stride_[i];
    }
}

std::size_t GridSpec::flat_index(std::span<const int> mi) const noexcept
{
    std::size_t idx = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) idx += static_cast<std::size_t>(mi[i]) * stride_[i];
    return idx;
}

void GridSpec::coords(std::size_t idx, std::span<double> x) const noexcept
{
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto m = idx / stride_[i];
        idx %= stride_[i];
        x[i] = lower_[i] + h_[i] * static_cast<double>(m);
    }
}

std::vector<double> GridSpec::coords(std::size_t idx) const
{
    std::vector<double> x(nodes_.size());
    coords(idx, x);
    return x;
}

std::vector<NodeTag> GridSpec::build_mask() const
{
    const int n = dim();
    std::vector<NodeTag> mask(size_, NodeTag::Exterior);
    std::vector<int> mi(static_cast<std::size_t>(n));
    std::vector<double> x(static_cast<std::size_t>(n));
    for (std::size_t idx = 0; idx < size_; ++idx) {
        multi_index(idx, mi);
        bool edge = false;
        for (int i = 0; i < n; ++i) edge = edge || mi[static_cast<std::size_t>(i)] == 0 || mi[static_cast<std::size_t>(i)] == nodes(i) - 1;
        if (kind_ == Kind::Box) {
            mask[idx] = edge ? NodeTag::Boundary : NodeTag::Interior;
            continue;
        }
        coords(idx, x);
        if (!edge && tau(x) < s_) mask[idx] = NodeTag::Interior;
    }
    if (kind_ == Kind::Box) return mask;

    // Non-interior nodes touched by an interior stencil become boundary nodes.
    for (std::size_t idx = 0; idx < size_; ++idx) {
        if (mask[idx] != NodeTag::Interior) continue;
        for (int i = 0; i < n; ++i) {
            const std::size_t si = stride_[static_cast<std::size_t>(i)];
            for (std::size_t nb : {idx + si, idx - si})
                if (mask[nb] == NodeTag::Exterior) mask[nb] = NodeTag::Boundary;
            for (int j = i + 1; j < n; ++j) {
                const std::size_t sj = stride_[static_cast<std::size_t>(j)];
                for (std::size_t nb : {idx + si + sj, idx + si - sj, idx - si + sj, idx - si - sj})
                    if (mask[nb] == NodeTag::Exterior) mask[nb] = NodeTag::Boundary;
            }
        }
    }
    return mask;
}

bool GridSpec::operator==(const GridSpec& o) const noexcept
{
    return kind_ == o.kind_ && nodes_ == o.nodes_ && lower_ == o.lower_ && h_ == o.h_ && a_ == o.a_ &&
           s_ == o.s_;
}

// ----------------------------------------------------------------- GridField

GridField::GridField(GridSpec spec, double fill)
    : spec_(std::move(spec)), values_(spec_.size(), fill), mask_(spec_.build_mask())
{
    for (std::size_t i = 0; i < mask_.size(); ++i)
        if (mask_[i] == NodeTag::Interior) interior_.push_back(i);
}

GridField::GridField(GridSpec spec, std::function<double(std::span<const double>)> fn)
    : GridField(std::move(spec), 0.0)
{
    std::vector<double> x(static_cast<std::size_t>(spec_.dim()));
    for (std::size_t i = 0; i < values_.size(); ++i) {
        spec_.coords(i, x);
        values_[i] = fn(x);
    }
}

void GridField::set_boundary(const std::function<double(std::span<const double>)>& g)
{
    std::vector<double> x(static_cast<std::size_t>(spec_.dim()));
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (mask_[i] == NodeTag::Interior) continue;
        spec_.coords(i, x);
        values_[i] = g(x);
    }
}

bool GridField::all_finite() const noexcept
{
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double GridField::interpolate(std::span<const double> x) const
{
    const int n = spec_.dim();
    if (static_cast<int>(x.size()) != n) throw ArgumentError("interpolate: dimension mismatch");
    std::array<int, 8> base{};
    std::array<std::array<double, 4>, 8> w{};
    for (int i = 0; i < n; ++i) {
        const double t = (x[static_cast<std::size_t>(i)] - spec_.lower(i)) / spec_.spacing(i);
        if (t < -1e-9 || t > spec_.nodes(i) - 1 + 1e-9)
            throw ArgumentError("interpolate: point outside the grid hull");
        int b = static_cast<int>(std::floor(t)) - 1;
        b = std::clamp(b, 0, spec_.nodes(i) - 4);
        base[static_cast<std::size_t>(i)] = b;
        lagrange4(t - b, w[static_cast<std::size_t>(i)].data());
    }
    double sum = 0.0;
    const int total = 1 << (2 * n);
    for (int c = 0; c < total; ++c) {
        double weight = 1.0;
        std::size_t idx = 0;
        for (int i = 0; i < n; ++i) {
            const int off = (c >> (2 * i)) & 3;
            weight *= w[static_cast<std::size_t>(i)][static_cast<std::size_t>(off)];
            idx += static_cast<std::size_t>(base[static_cast<std::size_t>(i)] + off) * spec_.stride(i);
        }
        sum += weight * values_[idx];
    }
    return sum;
}

void GridField::write_binary(std::ostream& os) const
{
    const int n = spec_.dim();
    os.write(kMagic, 4);
    put_u32(os, kFormatVersion);
    put_u32(os, static_cast<std::uint32_t>(n));
    put_u32(os, static_cast<std::uint32_t>(spec_.kind()));
    for (int i = 0; i < n; ++i) put_u32(os, static_cast<std::uint32_t>(spec_.nodes(i)));
    for (int i = 0; i < n; ++i) put_f64(os, spec_.lower(i));
    for (int i = 0; i < n; ++i) put_f64(os, spec_.spacing(i));
    put_f64(os, spec_.level());
    for (int i = 0; i < n; ++i) put_f64(os, spec_.kind() == GridSpec::Kind::Ellipsoid ? spec_.a()[static_cast<std::size_t>(i)] : 0.0);

    // Mask as (tag u8, run length u64) pairs.
    std::vector<std::pair<NodeTag, std::uint64_t>> runs;
    for (NodeTag t : mask_) {
        if (!runs.empty() && runs.back().first == t)
            ++runs.back().second;
        else
            runs.emplace_back(t, 1);
    }
    put_u64(os, runs.size());
    for (const auto& [tag, len] : runs) {
        const char c = static_cast<char>(tag);
        os.write(&c, 1);
        put_u64(os, len);
    }
    put_u64(os, values_.size());
    for (double v : values_) put_f64(os, v);
}

GridField GridField::read_binary(std::istream& is)
{
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw ArgumentError("field file: bad magic (expected KHES)");
    const auto version = get_u32(is);
    if (version != kFormatVersion) throw ArgumentError(fmt::format("field file: unsupported version {}", version));
    const auto n = static_cast<int>(get_u32(is));
    if (n < 1 || n > 6) throw ArgumentError("field file: bad dimension");
    const auto kind = static_cast<GridSpec::Kind>(get_u32(is));
    std::vector<int> nodes(static_cast<std::size_t>(n));
    for (auto& v : nodes) v = static_cast<int>(get_u32(is));
    std::vector<double> lower(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n)), a(static_cast<std::size_t>(n));
    for (auto& v : lower) v = get_f64(is);
    for (auto& v : h) v = get_f64(is);
    const double s = get_f64(is);
    for (auto& v : a) v = get_f64(is);

    GridSpec spec = [&] {
        if (kind == GridSpec::Kind::Ellipsoid) return GridSpec::ellipsoid(a, s, nodes[0]);
        std::vector<double> upper(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) upper[static_cast<std::size_t>(i)] = lower[static_cast<std::size_t>(i)] + h[static_cast<std::size_t>(i)] * (nodes[static_cast<std::size_t>(i)] - 1);
        return GridSpec::box(lower, upper, nodes[0]);
    }();
    GridField field(spec);

    const auto nruns = get_u64(is);
    std::size_t pos = 0;
    for (std::uint64_t r = 0; r < nruns; ++r) {
        char c;
        if (!is.read(&c, 1)) throw ArgumentError("field file: truncated mask");
        const auto len = get_u64(is);
        for (std::uint64_t j = 0; j < len; ++j, ++pos)
            if (pos >= field.size() || field.mask_[pos] != static_cast<NodeTag>(c))
                throw ArgumentError("field file: mask does not match the grid geometry");
    }
    const auto count = get_u64(is);
    if (count != field.size()) throw ArgumentError("field file: value count mismatch");
    for (auto& v : field.values_) v = get_f64(is);
    return field;
}

void GridField::write_binary_file(const std::string& path) const
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ArgumentError("cannot open for writing: " + path);
    write_binary(os);
}

GridField GridField::read_binary_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArgumentError("cannot open field file: " + path);
    return read_binary(is);
}

void GridField::write_csv(std::ostream& os) const
{
    const int n = spec_.dim();
    for (int i = 0; i < n; ++i) os << "x" << (i + 1) << ",";
    os << "u\n";
    std::vector<double> x(static_cast<std::size_t>(n));
    std::string line;
    for (std::size_t idx = 0; idx < values_.size(); ++idx) {
        spec_.coords(idx, x);
        line.clear();
        for (double v : x) line += fmt::format("{:.17g},", v);
        line += fmt::format("{:.17g}\n", values_[idx]);
        os << line;
    }
}

void GridField::write_csv_file(const std::string& path) const
{
    std::ofstream os(path);
    if (!os) throw ArgumentError("cannot open for writing: " + path);
    write_csv(os);
}

GridField resample(const GridField& src, const GridSpec& target)
{
    GridField out(target);
    std::vector<double> x(static_cast<std::size_t>(target.dim()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        target.coords(i, x);
        out[i] = src.interpolate(x);
    }
    return out;
}

}  // namespace khess
