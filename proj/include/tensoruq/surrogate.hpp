#pragma once

/**
 * @file surrogate.hpp
 * A fitted gPC expansion used as a predictor.
 *
 * The model lives in standardized coordinates xi_k = (x_k - mean_k) / std_k;
 * SurrogateModel applies that map so callers work in raw parameter space.
 * Because the basis is orthonormal and the index set is the full tensor
 * product, the mean is the (0,...,0) coefficient and the variance is
 * ||X||_F^2 - mean^2.
 */

#include <tensoruq/cptensor.hpp>
#include <tensoruq/errors.hpp>
#include <tensoruq/polybasis.hpp>
#include <tensoruq/regression.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace tensoruq {

/// Basis vectors b^(k)(xi_k) for every dimension.
inline std::vector<Eigen::VectorXd> basis_vectors(const BasisFamily& basis, const Eigen::VectorXd& xi)
{
    std::vector<Eigen::VectorXd> b;
    b.reserve(static_cast<std::size_t>(xi.size()));
    for (Eigen::Index k = 0; k < xi.size(); ++k) b.push_back(basis.values(xi[k]));
    return b;
}

/// y_hat(xi) = <X, B(xi)> in standardized coordinates.
inline double evaluate(const CPTensor& x, const BasisFamily& basis, const Eigen::VectorXd& xi)
{
    if (xi.size() != x.dims()) throw shape_error("evaluate: point has wrong dimension");
    return inner_rank1(x, basis_vectors(basis, xi));
}

/// Gradient of y_hat with respect to standardized coordinates.
inline Eigen::VectorXd evaluate_gradient(const CPTensor& x, const BasisFamily& basis, const Eigen::VectorXd& xi)
{
    if (xi.size() != x.dims()) throw shape_error("gradient: point has wrong dimension");
    const int d = x.dims();
    Eigen::MatrixXd val(d, x.rank());
    Eigen::MatrixXd der(d, x.rank());
    for (int k = 0; k < d; ++k) {
        val.row(k) = basis.values(xi[k]).transpose() * x.factor(k);
        der.row(k) = basis.derivatives(xi[k]).transpose() * x.factor(k);
    }
    Eigen::VectorXd g(d);
    for (int j = 0; j < d; ++j) {
        Eigen::ArrayXd term = der.row(j).transpose().array();
        for (int k = 0; k < d; ++k)
            if (k != j) term *= val.row(k).transpose().array();
        g[j] = term.sum();
    }
    return g;
}

struct Standardization {
    double mean = 0.0;
    double std = 1.0;
};

class SurrogateModel {
public:
    SurrogateModel(CPTensor coeffs, BasisFamily basis, std::vector<Standardization> standardization)
        : coeffs_(std::move(coeffs)), basis_(basis), standardization_(std::move(standardization))
    {
        if (coeffs_.basis_size() != basis_.size())
            throw shape_error("SurrogateModel: coefficient rows != max_degree + 1");
        if (static_cast<int>(standardization_.size()) != coeffs_.dims())
            throw shape_error("SurrogateModel: one standardization pair per dimension required");
        for (const auto& s : standardization_)
            if (!(s.std > 0.0) || !std::isfinite(s.mean) || !std::isfinite(s.std))
                throw domain_error("SurrogateModel: standard deviations must be positive and finite");
    }

    /// Identity standardization.
    SurrogateModel(CPTensor coeffs, BasisFamily basis)
        : SurrogateModel(coeffs, basis, std::vector<Standardization>(static_cast<std::size_t>(coeffs.dims())))
    {
    }

    const CPTensor& coeffs() const noexcept { return coeffs_; }
    const BasisFamily& basis() const noexcept { return basis_; }
    const std::vector<Standardization>& standardization() const noexcept { return standardization_; }
    int dims() const noexcept { return coeffs_.dims(); }

    Eigen::VectorXd standardize(const Eigen::VectorXd& raw) const
    {
        if (raw.size() != dims()) throw shape_error("point has wrong dimension");
        if (!raw.allFinite()) throw domain_error("point has non-finite entries");
        Eigen::VectorXd xi(raw.size());
        for (Eigen::Index k = 0; k < raw.size(); ++k) {
            const auto& s = standardization_[static_cast<std::size_t>(k)];
            xi[k] = (raw[k] - s.mean) / s.std;
        }
        return xi;
    }

    /// Rows of `raw` mapped to standardized coordinates.
    Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& raw) const
    {
        if (raw.cols() != dims()) throw shape_error("points have wrong dimension");
        if (!raw.allFinite()) throw domain_error("points have non-finite entries");
        Eigen::MatrixXd xi(raw.rows(), raw.cols());
        for (Eigen::Index k = 0; k < raw.cols(); ++k) {
            const auto& s = standardization_[static_cast<std::size_t>(k)];
            xi.col(k) = (raw.col(k).array() - s.mean) / s.std;
        }
        return xi;
    }

private:
    CPTensor coeffs_;
    BasisFamily basis_;
    std::vector<Standardization> standardization_;
};

inline double predict(const SurrogateModel& m, const Eigen::VectorXd& raw)
{
    return evaluate(m.coeffs(), m.basis(), m.standardize(raw));
}

/// Predictions for every row of `raw` (N x d).
inline Eigen::VectorXd predict_rows(const SurrogateModel& m, const Eigen::MatrixXd& raw)
{
    return predict_all(m.coeffs(), BasisCache(m.standardize_rows(raw), m.basis()));
}

/// Gradient in raw coordinates (chain rule through 1/std_j).
inline Eigen::VectorXd gradient(const SurrogateModel& m, const Eigen::VectorXd& raw)
{
    Eigen::VectorXd g = evaluate_gradient(m.coeffs(), m.basis(), m.standardize(raw));
    for (Eigen::Index j = 0; j < g.size(); ++j) g[j] /= m.standardization()[static_cast<std::size_t>(j)].std;
    return g;
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
    double stddev() const { return std::sqrt(variance); }
};

/// Analytic mean and variance under the input measure.
inline Moments moments(const SurrogateModel& m)
{
    const auto& x = m.coeffs();
    std::vector<Eigen::VectorXd> e1(static_cast<std::size_t>(x.dims()), Eigen::VectorXd::Unit(x.basis_size(), 0));
    Moments out;
    out.mean = inner_rank1(x, e1);
    out.variance = inner_cp(x, x) - out.mean * out.mean;
    if (out.variance < 0.0) out.variance = 0.0;
    return out;
}

/// Monte-Carlo moments from n draws of the input measure (sample variance, n-1 denominator).
inline Moments sampled_moments(const SurrogateModel& m, Eigen::Index n, std::uint64_t seed)
{
    if (n < 2) throw domain_error("sampled_moments needs at least two draws");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    const bool gauss = m.basis().kind() == Family::hermite;
    Eigen::MatrixXd xi(n, m.dims());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < xi.cols(); ++k) xi(i, k) = gauss ? normal(rng) : uniform(rng);
    const Eigen::VectorXd y = predict_all(m.coeffs(), BasisCache(xi, m.basis()));
    Moments out;
    out.mean = y.mean();
    out.variance = (y.array() - out.mean).square().sum() / static_cast<double>(n - 1);
    return out;
}

/// ||y_hat - y||_2 / ||y||_2 over raw-space test points (N x d).
inline double relative_error(const SurrogateModel& m, const Eigen::MatrixXd& raw_points, const Eigen::VectorXd& y)
{
    if (raw_points.rows() != y.size()) throw shape_error("relative_error: point and value counts differ");
    if (y.size() == 0) throw domain_error("relative_error: empty test set");
    const double denom = y.norm();
    if (denom == 0.0) throw domain_error("relative_error: reference values are all zero");
    return (predict_rows(m, raw_points) - y).norm() / denom;
}

/// Test set given as a Dataset; its points are interpreted in the model's raw coordinates.
inline double relative_error(const SurrogateModel& m, const Dataset& test)
{
    return relative_error(m, test.points(), test.values());
}

} // namespace tensoruq
