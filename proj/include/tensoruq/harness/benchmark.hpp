#pragma once

// Built-in black-box functions of the standardized parameters, used in place
// of an external simulator.
//
//   planted-cp: <X*, B(xi)> for a seeded rank-2 CP tensor X* (Hermite basis)
//   quad-exp:   exp(-||xi||^2 / (2d)) + 0.1 xi_1 xi_2
//   affine:     1 + sum_k xi_k / d

#include <tensoruq/cptensor.hpp>
#include <tensoruq/errors.hpp>
#include <tensoruq/polybasis.hpp>
#include <tensoruq/surrogate.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tensoruq::harness {

using BlackBox = std::function<double(const Eigen::VectorXd&)>;

inline constexpr int kPlantedRank = 2;

/**
 * Seeded rank-2 coefficient tensor: Gaussian columns normalized to unit norm
 * in every factor, with group weights 2 and 1 carried by the first factor.
 */
inline CPTensor planted_tensor(int d, int order, std::uint64_t seed)
{
    if (d < 1 || order < 0) throw config_error("planted_tensor: need d >= 1 and order >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<Eigen::MatrixXd> f(static_cast<std::size_t>(d), Eigen::MatrixXd(order + 1, kPlantedRank));
    for (auto& u : f) {
        for (Eigen::Index c = 0; c < u.cols(); ++c)
            for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, c) = normal(rng);
        u.colwise().normalize();
    }
    f.front().col(0) *= 2.0;
    return CPTensor(std::move(f));
}

struct Benchmark {
    std::string name;
    BlackBox function;
    std::optional<CPTensor> truth;   ///< planted-cp only
};

inline Benchmark builtin_benchmark(std::string_view name, int d, std::uint64_t seed, int order = 2)
{
    if (d < 1) throw config_error("benchmark dimension must be >= 1");
    if (name == "planted-cp") {
        CPTensor truth = planted_tensor(d, order, seed);
        const BasisFamily basis(Family::hermite, order);
        BlackBox fn = [truth, basis](const Eigen::VectorXd& xi) { return evaluate(truth, basis, xi); };
        return {std::string(name), std::move(fn), std::move(truth)};
    }
    if (name == "quad-exp") {
        BlackBox fn = [d](const Eigen::VectorXd& xi) {
            const double cross = xi.size() >= 2 ? 0.1 * xi[0] * xi[1] : 0.0;
            return std::exp(-xi.squaredNorm() / (2.0 * d)) + cross;
        };
        return {std::string(name), std::move(fn), std::nullopt};
    }
    if (name == "affine") {
        BlackBox fn = [d](const Eigen::VectorXd& xi) { return 1.0 + xi.sum() / d; };
        return {std::string(name), std::move(fn), std::nullopt};
    }
    throw config_error("unknown benchmark: " + std::string(name));
}

} // namespace tensoruq::harness
