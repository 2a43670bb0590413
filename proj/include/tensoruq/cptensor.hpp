#pragma once

/**
 * @file cptensor.hpp
 * Coefficient tensor of a gPC expansion stored in CP (Kruskal) form:
 *
 *     X = sum_r u_r^(1) o u_r^(2) o ... o u_r^(d),
 *
 * kept as d factor matrices U^(k) of shape (p+1) x R. Column r of every
 * factor together forms the r-th rank-1 term ("group").
 *
 * Production code never expands X; to_full() is provided for test oracles.
 */

#include <tensoruq/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tensoruq {

class CPTensor {
public:
    /// Validates shapes: every factor has the same row count and rank >= 1, all entries finite.
    explicit CPTensor(std::vector<Eigen::MatrixXd> factors) : factors_(std::move(factors))
    {
        if (factors_.empty()) throw shape_error("CPTensor needs at least one factor");
        const auto rows = factors_.front().rows();
        const auto cols = factors_.front().cols();
        if (rows < 1 || cols < 1) throw shape_error("CPTensor factors must be non-empty");
        for (const auto& f : factors_) {
            if (f.rows() != rows || f.cols() != cols)
                throw shape_error("CPTensor factors must share shape (p+1) x R");
            if (!f.allFinite()) throw domain_error("CPTensor entries must be finite");
        }
    }

    static CPTensor zeros(int d, int basis_size, int rank)
    {
        return CPTensor(std::vector<Eigen::MatrixXd>(
            static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(basis_size, rank)));
    }

    /// Rank-1 tensor from one vector per dimension.
    static CPTensor rank1(std::span<const Eigen::VectorXd> vectors)
    {
        std::vector<Eigen::MatrixXd> f;
        f.reserve(vectors.size());
        for (const auto& v : vectors) f.emplace_back(v);
        return CPTensor(std::move(f));
    }

    int dims() const noexcept { return static_cast<int>(factors_.size()); }
    int basis_size() const noexcept { return static_cast<int>(factors_.front().rows()); }
    int rank() const noexcept { return static_cast<int>(factors_.front().cols()); }

    const Eigen::MatrixXd& factor(int k) const { return factors_.at(static_cast<std::size_t>(k)); }
    const std::vector<Eigen::MatrixXd>& factors() const noexcept { return factors_; }

    /// Copy of this tensor with factor k replaced.
    CPTensor with_factor(int k, Eigen::MatrixXd replacement) const
    {
        auto f = factors_;
        f.at(static_cast<std::size_t>(k)) = std::move(replacement);
        return CPTensor(std::move(f));
    }

private:
    std::vector<Eigen::MatrixXd> factors_;
};

/// Number of free parameters d (p+1) R.
inline long long parameter_count(const CPTensor& x)
{
    return static_cast<long long>(x.dims()) * x.basis_size() * x.rank();
}

/// Dense d-way array, row-major (last index fastest).
struct DenseTensor {
    std::vector<int> shape;
    std::vector<double> data;

    double at(std::span<const int> index) const
    {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < shape.size(); ++k)
            offset = offset * static_cast<std::size_t>(shape[k]) + static_cast<std::size_t>(index[k]);
        return data[offset];
    }
};

inline constexpr std::size_t kMaxDenseEntries = 10'000'000;

/// Expands X into its (p+1)^d entries. Oracle use only.
inline DenseTensor to_full(const CPTensor& x)
{
    const int d = x.dims();
    const int n = x.basis_size();
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) {
        total *= static_cast<std::size_t>(n);
        if (total > kMaxDenseEntries)
            throw capacity_error("dense tensor would exceed 1e7 entries");
    }

    DenseTensor out{std::vector<int>(static_cast<std::size_t>(d), n), std::vector<double>(total, 0.0)};
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        double sum = 0.0;
        for (int r = 0; r < x.rank(); ++r) {
            double prod = 1.0;
            for (int k = 0; k < d; ++k) prod *= x.factor(k)(idx[static_cast<std::size_t>(k)], r);
            sum += prod;
        }
        out.data[flat] = sum;
        for (int k = d - 1; k >= 0; --k) {
            if (++idx[static_cast<std::size_t>(k)] < n) break;
            idx[static_cast<std::size_t>(k)] = 0;
        }
    }
    return out;
}

/// <X, b^(1) o ... o b^(d)> = sum_r prod_k (u_r^(k) . b^(k)).
inline double inner_rank1(const CPTensor& x, std::span<const Eigen::VectorXd> b)
{
    if (static_cast<int>(b.size()) != x.dims())
        throw shape_error("inner_rank1: expected one vector per dimension");
    Eigen::ArrayXd acc = Eigen::ArrayXd::Ones(x.rank());
    for (int k = 0; k < x.dims(); ++k) {
        const auto& bk = b[static_cast<std::size_t>(k)];
        if (bk.size() != x.basis_size()) throw shape_error("inner_rank1: vector length != p+1");
        acc *= (x.factor(k).transpose() * bk).array();
    }
    return acc.sum();
}

/// <X, Y> = sum_{r,s} prod_k (u_r^(k) . w_s^(k)).
inline double inner_cp(const CPTensor& x, const CPTensor& y)
{
    if (x.dims() != y.dims() || x.basis_size() != y.basis_size())
        throw shape_error("inner_cp: tensors have different shapes");
    Eigen::MatrixXd gram = Eigen::MatrixXd::Ones(x.rank(), y.rank());
    for (int k = 0; k < x.dims(); ++k)
        gram.array() *= (x.factor(k).transpose() * y.factor(k)).array();
    return gram.sum();
}

inline double frobenius_norm(const CPTensor& x)
{
    return std::sqrt(std::max(0.0, inner_cp(x, x)));
}

/// z_r = (sum_k ||u_r^(k)||^2)^(1/2).
inline Eigen::VectorXd group_norms(const CPTensor& x)
{
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(x.rank());
    for (const auto& f : x.factors()) sq += f.colwise().squaredNorm().transpose();
    return sq.cwiseSqrt();
}

/// Indices of groups with z_r >= rel_threshold * max z; never empty.
inline std::vector<int> surviving_groups(const Eigen::VectorXd& z, double rel_threshold)
{
    Eigen::Index best = 0;
    const double zmax = z.maxCoeff(&best);
    std::vector<int> keep;
    for (Eigen::Index r = 0; r < z.size(); ++r)
        if (z[r] >= rel_threshold * zmax && z[r] > 0.0) keep.push_back(static_cast<int>(r));
    if (keep.empty()) keep.push_back(static_cast<int>(best));
    return keep;
}

/// Deletes every group whose norm falls below rel_threshold times the largest one.
inline CPTensor truncate_rank(const CPTensor& x, double rel_threshold)
{
    if (!(rel_threshold > 0.0 && rel_threshold < 1.0))
        throw domain_error("truncate_rank: threshold must lie in (0, 1)");
    const auto keep = surviving_groups(group_norms(x), rel_threshold);
    if (static_cast<int>(keep.size()) == x.rank()) return x;

    std::vector<Eigen::MatrixXd> f;
    f.reserve(x.factors().size());
    for (const auto& u : x.factors()) {
        Eigen::MatrixXd kept(u.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) kept.col(static_cast<Eigen::Index>(j)) = u.col(keep[j]);
        f.push_back(std::move(kept));
    }
    return CPTensor(std::move(f));
}

} // namespace tensoruq
