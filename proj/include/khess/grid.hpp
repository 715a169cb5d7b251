#pragma once

// Uniform Cartesian grids over boxes or ellipsoidal sublevel sets
// D_s = {x^T A x / 2 < s}, with node masks and scalar fields.

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace khess {

enum class NodeTag : std::uint8_t { Interior = 0, Boundary = 1, Exterior = 2 };

class GridSpec {
public:
    enum class Kind : std::uint32_t { Box = 0, Ellipsoid = 1 };

    /// Box [lower, upper] with `nodes` (odd, >= 17) nodes per axis.
    static GridSpec box(std::vector<double> lower, std::vector<double> upper, int nodes);
    /// Hull of D_s for diagonal A: [-L_i, L_i] with L_i chosen so that the
    /// semi-axis sqrt(2 s / a_i) sits exactly two cells inside the hull.
    static GridSpec ellipsoid(std::vector<double> a, double s, int nodes);

    int dim() const noexcept { return static_cast<int>(nodes_.size()); }
    Kind kind() const noexcept { return kind_; }
    int nodes(int axis) const noexcept { return nodes_[static_cast<std::size_t>(axis)]; }
    double spacing(int axis) const noexcept { return h_[static_cast<std::size_t>(axis)]; }
    double lower(int axis) const noexcept { return lower_[static_cast<std::size_t>(axis)]; }
    double upper(int axis) const noexcept;
    double max_spacing() const noexcept;
    std::size_t size() const noexcept { return size_; }
    std::size_t stride(int axis) const noexcept { return stride_[static_cast<std::size_t>(axis)]; }

    /// Ellipsoid parameters (empty / zero for boxes).
    const std::vector<double>& a() const noexcept { return a_; }
    double level() const noexcept { return s_; }
    double tau(std::span<const double> x) const noexcept;

    void coords(std::size_t idx, std::span<double> x) const noexcept;
    std::vector<double> coords(std::size_t idx) const;
    void multi_index(std::size_t idx, std::span<int> out) const noexcept;
    std::size_t flat_index(std::span<const int> mi) const noexcept;

    /// Node classification; for ellipsoids a node is interior iff tau < s.
    std::vector<NodeTag> build_mask() const;

    bool operator==(const GridSpec& o) const noexcept;

private:
    GridSpec() = default;
    void finalize();

    Kind kind_ = Kind::Box;
    std::vector<int> nodes_;
    std::vector<double> lower_, h_;
    std::vector<std::size_t> stride_;
    std::size_t size_ = 0;
    std::vector<double> a_;
    double s_ = 0.0;
};

class GridField {
public:
    explicit GridField(GridSpec spec, double fill = 0.0);
    GridField(GridSpec spec, std::function<double(std::span<const double>)> fn);

    const GridSpec& spec() const noexcept { return spec_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }
    const std::vector<NodeTag>& mask() const noexcept { return mask_; }
    NodeTag tag(std::size_t i) const noexcept { return mask_[i]; }
    const std::vector<std::size_t>& interior() const noexcept { return interior_; }

    /// Overwrite all non-interior nodes with g(x).
    void set_boundary(const std::function<double(std::span<const double>)>& g);
    bool all_finite() const noexcept;

    /// Tensor cubic Lagrange interpolation at an arbitrary point of the hull.
    double interpolate(std::span<const double> x) const;

    void write_binary(std::ostream& os) const;
    static GridField read_binary(std::istream& is);
    void write_binary_file(const std::string& path) const;
    static GridField read_binary_file(const std::string& path);
    void write_csv(std::ostream& os) const;
    void write_csv_file(const std::string& path) const;

private:
    GridSpec spec_;
    std::vector<double> values_;
    std::vector<NodeTag> mask_;
    std::vector<std::size_t> interior_;
};

/// Samples fn over the grid of another field's spec restricted to a box,
/// via cubic interpolation of `src`.
GridField resample(const GridField& src, const GridSpec& target);

}  // namespace khess
