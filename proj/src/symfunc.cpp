#include "khess/symfunc.hpp"

#include "khess/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

namespace khess {

namespace {

void check_dim(int dim)
{
    if (dim < 1 || dim > kMaxDim)
        throw ArgumentError("matrix dimension must lie in [1, 6], got " + std::to_string(dim));
}

void check_k(int n, int k)
{
    if (k < 1 || k > n)
        throw ArgumentError("k must lie in [1, n=" + std::to_string(n) + "], got " +
                            std::to_string(k));
}

using Full = std::array<std::array<double, kMaxDim>, kMaxDim>;

Full to_full(const SymMatrix& m)
{
    Full a{};
    for (int i = 0; i < m.dim(); ++i)
        for (int j = 0; j < m.dim(); ++j) a[i][j] = m(i, j);
    return a;
}

// Determinant of the principal submatrix picked by `rows` (size <= 4) by
// Gaussian elimination with partial pivoting.
double principal_det(const SymMatrix& m, const std::array<int, kMaxDim>& rows, int size)
{
    switch (size) {
    case 1:
        return m(rows[0], rows[0]);
    case 2:
        return m(rows[0], rows[0]) * m(rows[1], rows[1]) - m(rows[0], rows[1]) * m(rows[0], rows[1]);
    case 3: {
        const double a = m(rows[0], rows[0]), b = m(rows[0], rows[1]), c = m(rows[0], rows[2]);
        const double d = m(rows[1], rows[1]), e = m(rows[1], rows[2]), f = m(rows[2], rows[2]);
        return a * (d * f - e * e) - b * (b * f - c * e) + c * (b * e - c * d);
    }
    default:
        break;
    }
    std::array<std::array<double, kMaxDim>, kMaxDim> w{};
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) w[i][j] = m(rows[i], rows[j]);
    double det = 1.0;
    for (int c = 0; c < size; ++c) {
        int piv = c;
        for (int r = c + 1; r < size; ++r)
            if (std::abs(w[r][c]) > std::abs(w[piv][c])) piv = r;
        if (w[piv][c] == 0.0) return 0.0;
        if (piv != c) {
            std::swap(w[piv], w[c]);
            det = -det;
        }
        det *= w[c][c];
        for (int r = c + 1; r < size; ++r) {
            const double factor = w[r][c] / w[c][c];
            for (int j = c; j < size; ++j) w[r][j] -= factor * w[c][j];
        }
    }
    return det;
}

EigenVector eigen_2x2(const SymMatrix& m)
{
    const double a = m(0, 0), b = m(0, 1), d = m(1, 1);
    const double mean = 0.5 * (a + d);
    const double rad = std::hypot(0.5 * (a - d), b);
    return EigenVector{mean - rad, mean + rad};
}

}  // namespace

// ---------------------------------------------------------------- SymMatrix

SymMatrix::SymMatrix(int dim) : dim_(dim)
{
    check_dim(dim);
}

SymMatrix SymMatrix::identity(int dim)
{
    SymMatrix m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
}

SymMatrix SymMatrix::diagonal(std::span<const double> d)
{
    SymMatrix m(static_cast<int>(d.size()));
    for (int i = 0; i < m.dim(); ++i) m(i, i) = d[static_cast<std::size_t>(i)];
    return m;
}

SymMatrix SymMatrix::from_full(int dim, std::span<const double> full)
{
    if (full.size() != static_cast<std::size_t>(dim * dim))
        throw ArgumentError("from_full: expected dim*dim entries");
    SymMatrix m(dim);
    for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) m(i, j) = full[static_cast<std::size_t>(i * dim + j)];
    return m;
}

bool SymMatrix::all_finite() const noexcept
{
    return std::all_of(packed().begin(), packed().end(), [](double v) { return std::isfinite(v); });
}

double SymMatrix::trace() const noexcept
{
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
}

double SymMatrix::frobenius() const noexcept
{
    double s = 0.0;
    for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) s += (*this)(i, j) * (*this)(i, j);
    return std::sqrt(s);
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& o) noexcept
{
    for (std::size_t i = 0; i < kStorage; ++i) data_[i] += o.data_[i];
    return *this;
}

SymMatrix& SymMatrix::operator-=(const SymMatrix& o) noexcept
{
    for (std::size_t i = 0; i < kStorage; ++i) data_[i] -= o.data_[i];
    return *this;
}

SymMatrix& SymMatrix::operator*=(double c) noexcept
{
    for (auto& v : data_) v *= c;
    return *this;
}

SymMatrix SymMatrix::sym_product(const SymMatrix& a, const SymMatrix& b) noexcept
{
    const int n = a.dim();
    SymMatrix out(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double ab = 0.0, ba = 0.0;
            for (int l = 0; l < n; ++l) {
                ab += a(i, l) * b(l, j);
                ba += b(i, l) * a(l, j);
            }
            out(i, j) = 0.5 * (ab + ba);
        }
    }
    return out;
}

// -------------------------------------------------------------- EigenVector

EigenVector::EigenVector(std::initializer_list<double> values)
    : EigenVector(std::span<const double>(values.begin(), values.size()))
{
}

EigenVector::EigenVector(std::span<const double> values) : dim_(static_cast<int>(values.size()))
{
    check_dim(dim_);
    for (double v : values)
        if (!std::isfinite(v)) throw ArgumentError("EigenVector: non-finite eigenvalue");
    std::copy(values.begin(), values.end(), values_.begin());
    std::sort(values_.begin(), values_.begin() + dim_);
}

// ----------------------------------------------------------------- AkMatrix

AkMatrix::AkMatrix(std::vector<double> a, int k) : a_(std::move(a)), k_(k)
{
    const int n = static_cast<int>(a_.size());
    check_dim(n);
    check_k(n, k);
    for (double v : a_)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ArgumentError("AkMatrix: diagonal entries must be positive and finite");
    const double s = sigma_k(a_, k);
    if (std::abs(s - 1.0) > 1e-12)
        throw ArgumentError("AkMatrix: sigma_k(a) = " + std::to_string(s) + " differs from 1");
}

SymMatrix AkMatrix::matrix() const
{
    return SymMatrix::diagonal(a_);
}

double AkMatrix::det() const noexcept
{
    double d = 1.0;
    for (double v : a_) d *= v;
    return d;
}

double AkMatrix::a_min() const noexcept
{
    return *std::min_element(a_.begin(), a_.end());
}

double AkMatrix::a_max() const noexcept
{
    return *std::max_element(a_.begin(), a_.end());
}

double AkMatrix::sigma_excluding(int m, int i) const
{
    std::array<double, kMaxDim> rest{};
    int count = 0;
    for (int j = 0; j < dim(); ++j)
        if (j != i) rest[static_cast<std::size_t>(count++)] = a_[static_cast<std::size_t>(j)];
    if (m == 0) return 1.0;
    if (m > count) return 0.0;
    return sigma_k(std::span<const double>(rest.data(), static_cast<std::size_t>(count)), m);
}

double AkMatrix::hk() const
{
    double best = 0.0;
    for (int i = 0; i < dim(); ++i) best = std::max(best, a_[static_cast<std::size_t>(i)] * sigma_excluding(k_ - 1, i));
    return best;
}

double AkMatrix::kappa() const
{
    return k_ / (2.0 * hk());
}

double AkMatrix::tau(std::span<const double> x) const noexcept
{
    double t = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i) t += a_[i] * x[i] * x[i];
    return 0.5 * t;
}

// ---------------------------------------------------------------- functions

double binomial(int n, int k)
{
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return std::round(r);
}

double sigma_k(std::span<const double> lambda, int k)
{
    const int n = static_cast<int>(lambda.size());
    check_k(n, k);
    std::array<double, kMaxDim + 1> e{};
    e[0] = 1.0;
    for (int i = 0; i < n; ++i) {
        const double li = lambda[static_cast<std::size_t>(i)];
        for (int j = std::min(i + 1, k); j >= 1; --j) e[j] += li * e[j - 1];
    }
    return e[static_cast<std::size_t>(k)];
}

double sigma_k(const EigenVector& lambda, int k)
{
    return sigma_k(lambda.values(), k);
}

double sigma_k_minor_sum(const SymMatrix& m, int k)
{
    const int n = m.dim();
    check_k(n, k);
    double sum = 0.0;
    std::array<int, kMaxDim> rows{};
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != k) continue;
        int c = 0;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) rows[static_cast<std::size_t>(c++)] = i;
        sum += principal_det(m, rows, k);
    }
    return sum;
}

std::array<double, kMaxDim + 1> sigma_all(const SymMatrix& m, int k)
{
    const int n = m.dim();
    check_k(n, k);
    std::array<double, kMaxDim + 1> out{};
    out[0] = 1.0;
    if (n <= 4) {
        for (int j = 1; j <= k; ++j) out[static_cast<std::size_t>(j)] = sigma_k_minor_sum(m, j);
        return out;
    }
    const EigenVector ev = eigenvalues(m);
    for (int j = 1; j <= k; ++j) out[static_cast<std::size_t>(j)] = sigma_k(ev, j);
    return out;
}

double sigma_k_matrix(const SymMatrix& m, int k)
{
    if (!m.all_finite()) throw ArgumentError("sigma_k_matrix: non-finite entries");
    check_k(m.dim(), k);
    if (m.dim() <= 4) return sigma_k_minor_sum(m, k);
    return sigma_k(eigenvalues(m), k);
}

EigenVector eigenvalues_jacobi(const SymMatrix& m)
{
    const int n = m.dim();
    Full a = to_full(m);
    const double scale = std::max(m.frobenius(), 1e-300);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += 2.0 * a[i][j] * a[i][j];
        if (std::sqrt(off) <= 1e-14 * scale) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int r = 0; r < n; ++r) {
                    const double arp = a[r][p], arq = a[r][q];
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for (int r = 0; r < n; ++r) {
                    const double apr = a[p][r], aqr = a[q][r];
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
            }
        }
    }
    std::array<double, kMaxDim> d{};
    for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = a[i][i];
    return EigenVector(std::span<const double>(d.data(), static_cast<std::size_t>(n)));
}

EigenVector eigenvalues(const SymMatrix& m)
{
    if (!m.all_finite()) throw ArgumentError("eigenvalues: non-finite entries");
    const int n = m.dim();
    if (n == 1) return EigenVector{m(0, 0)};
    if (n == 2) return eigen_2x2(m);
    if (n != 3) return eigenvalues_jacobi(m);

    // Trigonometric closed form for 3x3.
    const double p1 = m(0, 1) * m(0, 1) + m(0, 2) * m(0, 2) + m(1, 2) * m(1, 2);
    const double q = m.trace() / 3.0;
    const double d0 = m(0, 0) - q, d1 = m(1, 1) - q, d2 = m(2, 2) - q;
    const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    const double scale = std::max(std::abs(q), p);
    if (p <= 1e-10 * scale || scale == 0.0) return eigenvalues_jacobi(m);
    SymMatrix b = m;
    for (int i = 0; i < 3; ++i) b(i, i) -= q;
    b *= 1.0 / p;
    const double r = 0.5 * principal_det(b, {0, 1, 2, 0, 0, 0}, 3);
    if (1.0 - std::abs(r) < 1e-10) return eigenvalues_jacobi(m);
    const double phi = std::acos(std::clamp(r, -1.0, 1.0)) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    const double e2 = 3.0 * q - e1 - e3;
    return EigenVector{e1, e2, e3};
}

SymMatrix newton_tensor(const SymMatrix& m, int k)
{
    if (!m.all_finite()) throw ArgumentError("newton_tensor: non-finite entries");
    const auto sig = sigma_all(m, k);
    const int n = m.dim();
    SymMatrix t = SymMatrix::identity(n);
    for (int j = 1; j < k; ++j) {
        SymMatrix next = SymMatrix::identity(n) * sig[static_cast<std::size_t>(j)];
        next -= SymMatrix::sym_product(m, t);
        t = next;
    }
    return t;
}

OperatorValue evaluate_operator(const SymMatrix& m, int k, double sigma_min)
{
    const int n = m.dim();
    const auto sig = sigma_all(m, k);
    OperatorValue out;
    out.sigma = sig[static_cast<std::size_t>(k)];
    bool cone = true;
    for (int j = 1; j < k; ++j) cone = cone && sig[static_cast<std::size_t>(j)] > 0.0;
    out.admissible = cone && out.sigma >= sigma_min && out.sigma > 0.0;

    SymMatrix t = SymMatrix::identity(n);
    for (int j = 1; j < k; ++j) {
        SymMatrix next = SymMatrix::identity(n) * sig[static_cast<std::size_t>(j)];
        next -= SymMatrix::sym_product(m, t);
        t = next;
    }
    const double floored = std::max(out.sigma, sigma_min);
    const double inv_k = 1.0 / k;
    out.value = std::pow(floored, inv_k);
    out.gradient = t * (inv_k * out.value / floored);
    return out;
}

FAndGrad F_and_grad(const SymMatrix& m, int k, double sigma_min)
{
    if (!m.all_finite()) throw ArgumentError("F_and_grad: non-finite entries");
    OperatorValue op = evaluate_operator(m, k, sigma_min);
    if (!op.admissible)
        throw ConeViolation("F_and_grad: matrix outside Gamma_k or sigma_k = " +
                                std::to_string(op.sigma) + " below floor",
                            op.sigma);
    return {op.value, op.gradient};
}

ConeMembership cone_membership(std::span<const double> lambda, int k)
{
    const int n = static_cast<int>(lambda.size());
    check_k(n, k);
    std::array<double, kMaxDim + 1> e{};
    e[0] = 1.0;
    for (int i = 0; i < n; ++i) {
        const double li = lambda[static_cast<std::size_t>(i)];
        for (int j = std::min(i + 1, k); j >= 1; --j) e[j] += li * e[j - 1];
    }
    ConeMembership c{true, true};
    for (int j = 1; j <= k; ++j) {
        c.strict = c.strict && e[static_cast<std::size_t>(j)] > 0.0;
        c.closure = c.closure && e[static_cast<std::size_t>(j)] >= kClosureTolerance;
    }
    return c;
}

ConeMembership cone_membership(const SymMatrix& m, int k)
{
    const auto sig = sigma_all(m, k);
    ConeMembership c{true, true};
    for (int j = 1; j <= k; ++j) {
        c.strict = c.strict && sig[static_cast<std::size_t>(j)] > 0.0;
        c.closure = c.closure && sig[static_cast<std::size_t>(j)] >= kClosureTolerance;
    }
    return c;
}

bool in_gamma_k(const SymMatrix& m, int k)
{
    return cone_membership(m, k).strict;
}

bool in_gamma_k(std::span<const double> lambda, int k)
{
    return cone_membership(lambda, k).strict;
}

AkMatrix normalize_to_Ak(std::span<const double> d, int k)
{
    for (double v : d)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ArgumentError("normalize_to_Ak: entries must be positive");
    const double t = std::pow(sigma_k(d, k), -1.0 / k);
    std::vector<double> a(d.begin(), d.end());
    for (double& v : a) v *= t;
    // One correction pass absorbs the rounding of the k-th root.
    const double t2 = std::pow(sigma_k(a, k), -1.0 / k);
    for (double& v : a) v *= t2;
    return AkMatrix(std::move(a), k);
}

double maclaurin_gap(const SymMatrix& m, int k)
{
    const int n = m.dim();
    check_k(n, k);
    const EigenVector ev = eigenvalues(m);
    if (!(ev[0] > 0.0)) throw ArgumentError("maclaurin_gap: matrix is not positive definite");
    const double det = sigma_k(ev, n);
    return std::pow(sigma_k(ev, k) / binomial(n, k), 1.0 / k) - std::pow(det, 1.0 / n);
}

}  // namespace khess
