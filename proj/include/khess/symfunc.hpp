#pragma once

// Elementary symmetric functions of Hessian eigenvalues and the k-Hessian
// operator F(M) = sigma_k(lambda(M))^{1/k} with its gradient.

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace khess {

inline constexpr int kMaxDim = 6;
inline constexpr double kDefaultSigmaMin = 1e-8;
inline constexpr double kClosureTolerance = -1e-12;

/// Dense real symmetric matrix of dimension 2..6, stored as its upper triangle.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(int dim);

    static SymMatrix identity(int dim);
    static SymMatrix diagonal(std::span<const double> d);
    /// Row-major full matrix; only the upper triangle is read.
    static SymMatrix from_full(int dim, std::span<const double> full);

    int dim() const noexcept { return dim_; }
    double operator()(int i, int j) const noexcept { return data_[index(i, j)]; }
    double& operator()(int i, int j) noexcept { return data_[index(i, j)]; }

    std::span<const double> packed() const noexcept
    {
        return {data_.data(), static_cast<std::size_t>(dim_ * (dim_ + 1) / 2)};
    }
    bool all_finite() const noexcept;
    double trace() const noexcept;
    double frobenius() const noexcept;

    SymMatrix& operator+=(const SymMatrix& o) noexcept;
    SymMatrix& operator-=(const SymMatrix& o) noexcept;
    SymMatrix& operator*=(double c) noexcept;
    friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) noexcept { return a += b; }
    friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) noexcept { return a -= b; }
    friend SymMatrix operator*(SymMatrix a, double c) noexcept { return a *= c; }
    friend SymMatrix operator*(double c, SymMatrix a) noexcept { return a *= c; }

    /// Symmetrized product (A*B + B*A)/2; equals A*B when the factors commute.
    static SymMatrix sym_product(const SymMatrix& a, const SymMatrix& b) noexcept;

private:
    static constexpr std::size_t kStorage = kMaxDim * (kMaxDim + 1) / 2;
    std::size_t index(int i, int j) const noexcept
    {
        if (i > j) std::swap(i, j);
        return static_cast<std::size_t>(i * dim_ - i * (i - 1) / 2 + (j - i));
    }

    int dim_ = 0;
    std::array<double, kStorage> data_{};
};

/// Eigenvalues sorted ascending.
class EigenVector {
public:
    EigenVector() = default;
    EigenVector(std::initializer_list<double> values);
    explicit EigenVector(std::span<const double> values);

    int dim() const noexcept { return dim_; }
    double operator[](int i) const noexcept { return values_[static_cast<std::size_t>(i)]; }
    std::span<const double> values() const noexcept
    {
        return {values_.data(), static_cast<std::size_t>(dim_)};
    }

private:
    int dim_ = 0;
    std::array<double, kMaxDim> values_{};
};

/// Diagonal A with positive entries and sigma_k(a) = 1.
class AkMatrix {
public:
    /// Validates positivity and |sigma_k(a) - 1| <= 1e-12.
    AkMatrix(std::vector<double> a, int k);

    int dim() const noexcept { return static_cast<int>(a_.size()); }
    int k() const noexcept { return k_; }
    std::span<const double> a() const noexcept { return a_; }
    double operator[](int i) const noexcept { return a_[static_cast<std::size_t>(i)]; }

    SymMatrix matrix() const;
    double det() const noexcept;
    double a_min() const noexcept;
    double a_max() const noexcept;
    /// sigma_{m;i}(a): sigma_m of a with entry i removed.
    double sigma_excluding(int m, int i) const;
    /// h_k(a) = max_i a_i sigma_{k-1;i}(a).
    double hk() const;
    /// kappa = k / (2 h_k(a)).
    double kappa() const;
    /// tau(x) = x^T A x / 2.
    double tau(std::span<const double> x) const noexcept;

private:
    std::vector<double> a_;
    int k_;
};

double binomial(int n, int k);

/// sigma_k by the prefix-polynomial recurrence, O(nk).
double sigma_k(std::span<const double> lambda, int k);
double sigma_k(const EigenVector& lambda, int k);

/// All sigma_1..sigma_k of M from principal-minor sums (n <= 4) or eigenvalues.
std::array<double, kMaxDim + 1> sigma_all(const SymMatrix& m, int k);

double sigma_k_matrix(const SymMatrix& m, int k);
/// Sum of all k x k principal minors; exact-arithmetic route for n <= 4.
double sigma_k_minor_sum(const SymMatrix& m, int k);

EigenVector eigenvalues(const SymMatrix& m);
/// Cyclic Jacobi rotations to 1e-12 relative off-diagonal norm.
EigenVector eigenvalues_jacobi(const SymMatrix& m);

/// Newton transformation T_{k-1}(M); d sigma_k / d M_ij = [T_{k-1}]_ij.
SymMatrix newton_tensor(const SymMatrix& m, int k);

struct OperatorValue {
    double sigma = 0.0;     ///< sigma_k(M), unfloored
    double value = 0.0;     ///< max(sigma_k, sigma_min)^{1/k}
    SymMatrix gradient;     ///< dF/dM_ij at the floored value
    bool admissible = false;  ///< lambda in Gamma_k and sigma_k >= sigma_min
};

/// Non-throwing operator evaluation used inside the solver loops.
OperatorValue evaluate_operator(const SymMatrix& m, int k, double sigma_min = kDefaultSigmaMin);

struct FAndGrad {
    double value;
    SymMatrix gradient;
};

/// F(M) = sigma_k^{1/k} and F_ij = (1/k) sigma_k^{1/k-1} T_{k-1}(M).
/// Throws ConeViolation when lambda(M) is outside Gamma_k or sigma_k < sigma_min.
FAndGrad F_and_grad(const SymMatrix& m, int k, double sigma_min = kDefaultSigmaMin);

struct ConeMembership {
    bool strict = false;   ///< sigma_j > 0 for j = 1..k
    bool closure = false;  ///< sigma_j >= -1e-12 for j = 1..k
};

ConeMembership cone_membership(const SymMatrix& m, int k);
ConeMembership cone_membership(std::span<const double> lambda, int k);
bool in_gamma_k(const SymMatrix& m, int k);
bool in_gamma_k(std::span<const double> lambda, int k);

/// a = d * sigma_k(d)^{-1/k}.
AkMatrix normalize_to_Ak(std::span<const double> d, int k);

/// (sigma_k / C(n,k))^{1/k} - det^{1/n}; requires M positive definite.
double maclaurin_gap(const SymMatrix& m, int k);

}  // namespace khess
