#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "khess/errors.hpp"
#include "khess/grid.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace khess;

namespace {

template <class T>
T take(const std::string& bytes, std::size_t& pos)
{
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

TEST_CASE("box geometry and indexing")
{
    const auto spec = GridSpec::box({-1, 0, 2}, {1, 4, 3}, 17);
    CHECK(spec.dim() == 3);
    CHECK(spec.size() == 17u * 17u * 17u);
    CHECK(spec.spacing(1) == doctest::Approx(0.25));
    CHECK(spec.upper(2) == doctest::Approx(3.0));
    CHECK(spec.max_spacing() == doctest::Approx(0.25));
    std::vector<int> mi(3);
    for (std::size_t idx : {std::size_t{0}, std::size_t{1234}, spec.size() - 1}) {
        spec.multi_index(idx, mi);
        CHECK(spec.flat_index(mi) == idx);
        const auto x = spec.coords(idx);
        for (int i = 0; i < 3; ++i)
            CHECK(x[static_cast<std::size_t>(i)] == doctest::Approx(spec.lower(i) + mi[static_cast<std::size_t>(i)] * spec.spacing(i)));
    }
    const auto mask = spec.build_mask();
    std::size_t boundary = 0;
    for (auto t : mask) boundary += t == NodeTag::Boundary;
    CHECK(boundary == 17u * 17u * 17u - 15u * 15u * 15u);

    CHECK_THROWS_AS(GridSpec::box({0, 0}, {1, 1}, 16), ArgumentError);
    CHECK_THROWS_AS(GridSpec::box({0, 0}, {1, 1}, 15), ArgumentError);
    CHECK_THROWS_AS(GridSpec::box({0, 1}, {1, 1}, 17), ArgumentError);
}

TEST_CASE("ellipsoid hull and mask")
{
    const std::vector<double> a{0.5, 1.0, 2.0};
    const double s = 4.0;
    const auto spec = GridSpec::ellipsoid(a, s, 21);
    for (int i = 0; i < 3; ++i) {
        const double semi = std::sqrt(2 * s / a[static_cast<std::size_t>(i)]);
        CHECK(spec.upper(i) - semi == doctest::Approx(2 * spec.spacing(i)));
        CHECK(spec.lower(i) == doctest::Approx(-spec.upper(i)));
    }
    GridField u(spec);
    std::vector<double> x(3);
    for (std::size_t idx = 0; idx < spec.size(); ++idx) {
        spec.coords(idx, x);
        const double tau = 0.5 * (a[0] * x[0] * x[0] + a[1] * x[1] * x[1] + a[2] * x[2] * x[2]);
        CHECK((u.tag(idx) == NodeTag::Interior) == (tau < s));
    }
    CHECK_THROWS_AS(GridSpec::ellipsoid({1.0, -1.0}, 1.0, 17), ArgumentError);
    CHECK_THROWS_AS(GridSpec::ellipsoid({1.0, 1.0}, 0.0, 17), ArgumentError);
}

TEST_CASE("cubic interpolation reproduces cubics")
{
    const auto spec = GridSpec::box({-1, -2, 0}, {1, 2, 3}, 17);
    auto p = [](std::span<const double> x) {
        return 1 + x[0] - 2 * x[1] * x[2] + x[0] * x[0] * x[0] - 0.5 * x[1] * x[1] * x[2] + x[0] * x[1] * x[2];
    };
    const GridField u(spec, p);
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> ux(-1, 1), uy(-2, 2), uz(0, 3);
    for (int t = 0; t < 500; ++t) {
        const double x[3] = {ux(rng), uy(rng), uz(rng)};
        CHECK(u.interpolate(x) == doctest::Approx(p(x)).epsilon(1e-12));
    }
    const double out[3] = {1.5, 0, 1};
    CHECK_THROWS_AS(u.interpolate(out), ArgumentError);

    const auto target = GridSpec::box({-0.5, -0.5, 0.5}, {0.5, 0.5, 1.5}, 17);
    const auto r = resample(u, target);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == doctest::Approx(p(target.coords(i))).epsilon(1e-12));
}

TEST_CASE("binary field format")
{
    const auto spec = GridSpec::ellipsoid({1.0, 2.0, 3.0}, 2.0, 17);
    const GridField u(spec, [](std::span<const double> x) { return std::sin(x[0]) + x[1] * x[2]; });
    std::stringstream ss;
    u.write_binary(ss);
    const std::string bytes = ss.str();

    REQUIRE(bytes.size() > 4);
    CHECK(bytes.substr(0, 4) == "KHES");
    std::size_t pos = 4;
    CHECK(take<std::uint32_t>(bytes, pos) == 1u);
    CHECK(take<std::uint32_t>(bytes, pos) == 3u);
    CHECK(take<std::uint32_t>(bytes, pos) == 1u);
    for (int i = 0; i < 3; ++i) CHECK(take<std::uint32_t>(bytes, pos) == 17u);
    for (int i = 0; i < 3; ++i) CHECK(take<double>(bytes, pos) == spec.lower(i));
    for (int i = 0; i < 3; ++i) CHECK(take<double>(bytes, pos) == spec.spacing(i));

    std::stringstream in(bytes);
    const auto v = GridField::read_binary(in);
    CHECK(v.spec() == u.spec());
    CHECK(v.mask() == u.mask());
    bool same = true;
    for (std::size_t i = 0; i < u.size(); ++i) same = same && u[i] == v[i];
    CHECK(same);

    std::string bad = bytes;
    bad[0] = 'X';
    std::stringstream bs(bad);
    CHECK_THROWS_AS(GridField::read_binary(bs), ArgumentError);
    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(GridField::read_binary(truncated), ArgumentError);
    CHECK_THROWS_AS(GridField::read_binary_file("/nonexistent/u.khes"), ArgumentError);
}

TEST_CASE("csv export round-trips at 17 significant digits")
{
    const auto spec = GridSpec::box({0, 0}, {1, 1}, 17);
    const GridField u(spec, [](std::span<const double> x) { return std::exp(x[0]) / 3.0 + x[1]; });
    std::stringstream ss;
    u.write_csv(ss);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "x1,x2,u");
    std::size_t rows = 0;
    while (std::getline(ss, line)) {
        double x1, x2, val;
        char c1, c2;
        std::istringstream ls(line);
        ls >> x1 >> c1 >> x2 >> c2 >> val;
        CHECK(val == u[rows]);
        ++rows;
    }
    CHECK(rows == u.size());
}

TEST_CASE("boundary overwrite leaves the interior")
{
    const auto spec = GridSpec::box({0, 0, 0}, {1, 1, 1}, 17);
    GridField u(spec, 5.0);
    u.set_boundary([](std::span<const double>) { return -1.0; });
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == (u.tag(i) == NodeTag::Interior ? 5.0 : -1.0));
    CHECK(u.interior().size() == 15u * 15u * 15u);
    CHECK(u.all_finite());
}
