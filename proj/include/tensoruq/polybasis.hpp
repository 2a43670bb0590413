#pragma once

/**
 * @file polybasis.hpp
 * Orthonormal univariate polynomial families used as per-dimension factors of
 * the tensor-product gPC basis.
 *
 * Two families are provided:
 *   - Hermite:  normalized probabilists' Hermite He_k(x)/sqrt(k!), orthonormal
 *               under the standard normal density.
 *   - Legendre: sqrt(2k+1) P_k(x), orthonormal under the uniform density on
 *               [-1, 1].
 *
 * Both are evaluated with the three-term recurrence of the orthonormal family
 *   x psi_k = b_{k+1} psi_{k+1} + b_k psi_{k-1},
 * with b_k = sqrt(k) (Hermite) and b_k = k / sqrt(4k^2 - 1) (Legendre).
 */

#include <tensoruq/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tensoruq {

enum class Family { hermite, legendre };

inline std::string_view to_string(Family f)
{
    return f == Family::hermite ? "hermite" : "legendre";
}

inline Family family_from_string(std::string_view name)
{
    if (name == "hermite" || name == "gaussian-hermite") return Family::hermite;
    if (name == "legendre" || name == "uniform-legendre") return Family::legendre;
    throw domain_error("unknown basis family: " + std::string(name));
}

struct QuadratureRule {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
};

class BasisFamily {
public:
    BasisFamily(Family kind, int max_degree)
        : kind_(kind), max_degree_(max_degree)
    {
        if (max_degree < 0) throw domain_error("max_degree must be >= 0");
    }

    Family kind() const noexcept { return kind_; }
    int max_degree() const noexcept { return max_degree_; }
    int size() const noexcept { return max_degree_ + 1; }

    /// psi_degree(x).
    double eval(int degree, double x) const
    {
        check_degree(degree);
        double prev = 0.0;
        double cur = 1.0;
        for (int k = 0; k < degree; ++k) {
            const double next = (x * cur - coupling(k) * prev) / coupling(k + 1);
            prev = cur;
            cur = next;
        }
        return cur;
    }

    /// d psi_degree / dx.
    double eval_deriv(int degree, double x) const
    {
        check_degree(degree);
        if (degree == 0) return 0.0;
        Eigen::VectorXd v(degree + 1), dv(degree + 1);
        fill(x, v, &dv);
        return dv[degree];
    }

    /// [psi_0(x), ..., psi_p(x)].
    Eigen::VectorXd values(double x) const
    {
        if (!std::isfinite(x)) throw domain_error("basis evaluated at non-finite point");
        Eigen::VectorXd v(size());
        fill(x, v, nullptr);
        return v;
    }

    /// [psi_0'(x), ..., psi_p'(x)].
    Eigen::VectorXd derivatives(double x) const
    {
        if (!std::isfinite(x)) throw domain_error("basis evaluated at non-finite point");
        Eigen::VectorXd v(size()), dv(size());
        fill(x, v, &dv);
        return dv;
    }

    /**
     * Gauss rule for the family's probability measure (Golub-Welsch on the
     * symmetric Jacobi matrix of the orthonormal recurrence). Exact for
     * polynomials of degree <= 2n-1; weights sum to one.
     */
    QuadratureRule quadrature(int n_nodes) const
    {
        if (n_nodes < 1) throw domain_error("quadrature needs at least one node");
        Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
        for (int k = 1; k < n_nodes; ++k) {
            jacobi(k, k - 1) = coupling(k);
            jacobi(k - 1, k) = coupling(k);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
        if (eig.info() != Eigen::Success)
            throw numerical_error("Golub-Welsch eigen-decomposition failed");

        QuadratureRule rule;
        rule.nodes = eig.eigenvalues();
        rule.weights = eig.eigenvectors().row(0).transpose().array().square();
        // Symmetric measures: snap the middle node of odd rules to zero.
        if (n_nodes % 2 == 1) rule.nodes[n_nodes / 2] = 0.0;
        return rule;
    }

private:
    void check_degree(int degree) const
    {
        if (degree < 0 || degree > max_degree_)
            throw domain_error("degree " + std::to_string(degree) + " outside [0, " +
                               std::to_string(max_degree_) + "]");
    }

    // Off-diagonal entry b_k of the Jacobi matrix; b_0 multiplies psi_{-1} = 0.
    double coupling(int k) const
    {
        if (k == 0) return 0.0;
        const double kk = k;
        return kind_ == Family::hermite ? std::sqrt(kk) : kk / std::sqrt(4.0 * kk * kk - 1.0);
    }

    // Recurrence for values and, optionally, derivatives:
    //   b_{k+1} psi'_{k+1} = psi_k + x psi'_k - b_k psi'_{k-1}.
    void fill(double x, Eigen::VectorXd& v, Eigen::VectorXd* dv) const
    {
        const Eigen::Index n = v.size();
        v[0] = 1.0;
        if (dv) (*dv)[0] = 0.0;
        for (Eigen::Index k = 0; k + 1 < n; ++k) {
            const int kk = static_cast<int>(k);
            const double bk = coupling(kk);
            const double bn = coupling(kk + 1);
            const double vm = k > 0 ? v[k - 1] : 0.0;
            v[k + 1] = (x * v[k] - bk * vm) / bn;
            if (dv) {
                const double dm = k > 0 ? (*dv)[k - 1] : 0.0;
                (*dv)[k + 1] = (v[k] + x * (*dv)[k] - bk * dm) / bn;
            }
        }
    }

    Family kind_;
    int max_degree_;
};

/// Multi-index alpha of the full tensor-product index set {0 <= alpha_k <= p}.
class MultiIndex {
public:
    MultiIndex(std::vector<int> entries, int max_degree) : entries_(std::move(entries))
    {
        for (int a : entries_)
            if (a < 0 || a > max_degree) throw domain_error("multi-index entry out of range");
    }

    const std::vector<int>& entries() const noexcept { return entries_; }
    std::size_t dims() const noexcept { return entries_.size(); }
    int degree() const { return std::accumulate(entries_.begin(), entries_.end(), 0); }

    int operator[](std::size_t k) const { return entries_[k]; }

private:
    std::vector<int> entries_;
};

struct BasisCount {
    std::uint64_t full_count = 0;   ///< (p+1)^d, saturated at UINT64_MAX
    bool full_saturated = false;
    std::uint64_t total_degree_count = 0;   ///< C(d+p, p), saturated at UINT64_MAX
    bool total_degree_saturated = false;
    double log10_full_count = 0.0;
};

/// Sizes of the full tensor-product index set and the total-degree set |alpha| <= p.
inline BasisCount count_basis(int d, int p)
{
    if (d < 1 || p < 0) throw domain_error("count_basis requires d >= 1 and p >= 0");
    constexpr auto max = std::numeric_limits<std::uint64_t>::max();
    BasisCount c;

    c.full_count = 1;
    const std::uint64_t base = static_cast<std::uint64_t>(p) + 1;
    for (int k = 0; k < d; ++k) {
        if (c.full_count > max / base) {
            c.full_count = max;
            c.full_saturated = true;
            break;
        }
        c.full_count *= base;
    }
    c.log10_full_count = d * std::log10(static_cast<double>(base));

    // C(d+p, p) built incrementally as C(d+i, i); each intermediate is an integer.
    unsigned __int128 binom = 1;
    for (int i = 1; i <= p; ++i) {
        binom = binom * static_cast<unsigned __int128>(d + i) / static_cast<unsigned __int128>(i);
        if (binom > max) {
            c.total_degree_saturated = true;
            break;
        }
    }
    c.total_degree_count = c.total_degree_saturated ? max : static_cast<std::uint64_t>(binom);
    return c;
}

} // namespace tensoruq
