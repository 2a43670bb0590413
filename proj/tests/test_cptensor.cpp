#include <tensoruq/cptensor.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tensoruq;

namespace {

CPTensor rank1_2d(Eigen::Vector2d u, Eigen::Vector2d v)
{
    return CPTensor({Eigen::MatrixXd(u), Eigen::MatrixXd(v)});
}

Eigen::VectorXd vec(std::initializer_list<double> v)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

} // namespace

TEST(CPTensor, ConstructionValidatesShapes)
{
    EXPECT_THROW(CPTensor(std::vector<Eigen::MatrixXd>{}), shape_error);
    EXPECT_THROW(CPTensor({Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(3, 1)}), shape_error);
    EXPECT_THROW(CPTensor({Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(2, 2)}), shape_error);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 1);
    bad(0, 0) = std::nan("");
    EXPECT_THROW(CPTensor({bad}), domain_error);

    const auto z = CPTensor::zeros(4, 3, 2);
    EXPECT_EQ(z.dims(), 4);
    EXPECT_EQ(z.basis_size(), 3);
    EXPECT_EQ(z.rank(), 2);
    EXPECT_EQ(parameter_count(z), 24);
}

TEST(CPTensor, ToFullExamples)
{
    const auto full = to_full(rank1_2d({1, 2}, {3, 4}));
    ASSERT_EQ(full.data.size(), 4u);
    EXPECT_EQ(full.data, (std::vector<double>{3, 4, 6, 8}));

    std::mt19937_64 rng(1);
    auto x = oracle::random_cp(3, 3, 2, rng);
    const auto zeroed = x.with_factor(1, Eigen::MatrixXd::Zero(3, 2));
    for (double v : to_full(zeroed).data) EXPECT_EQ(v, 0.0);

    // Linearity: rank-2 full equals the sum of its two rank-1 fulls.
    std::vector<Eigen::MatrixXd> a, b;
    for (const auto& f : x.factors()) {
        a.emplace_back(f.col(0));
        b.emplace_back(f.col(1));
    }
    const auto fx = to_full(x), fa = to_full(CPTensor(a)), fb = to_full(CPTensor(b));
    for (std::size_t i = 0; i < fx.data.size(); ++i) EXPECT_NEAR(fx.data[i], fa.data[i] + fb.data[i], 1e-12);
}

TEST(CPTensor, ToFullCapacityGuard)
{
    EXPECT_THROW(to_full(CPTensor::zeros(15, 3, 1)), capacity_error);   // 3^15 > 1e7
    EXPECT_NO_THROW(to_full(CPTensor::zeros(14, 3, 1)));
}

TEST(CPTensor, InnerRank1Examples)
{
    const auto x = rank1_2d({1, 2}, {3, 4});
    const std::vector<Eigen::VectorXd> ones{vec({1, 1}), vec({1, 1})};
    EXPECT_DOUBLE_EQ(inner_rank1(x, ones), 21.0);

    std::mt19937_64 rng(2);
    const auto y = oracle::random_cp(3, 4, 3, rng);
    const std::vector<Eigen::VectorXd> e1(3, Eigen::VectorXd::Unit(4, 0));
    EXPECT_NEAR(inner_rank1(y, e1), to_full(y).data.front(), 1e-12);

    EXPECT_EQ(inner_rank1(CPTensor::zeros(3, 4, 2), e1), 0.0);
    EXPECT_THROW(inner_rank1(y, std::vector<Eigen::VectorXd>(2, Eigen::VectorXd::Ones(4))), shape_error);
    EXPECT_THROW(inner_rank1(y, std::vector<Eigen::VectorXd>(3, Eigen::VectorXd::Ones(3))), shape_error);
}

TEST(CPTensor, InnerCpExamples)
{
    const Eigen::Vector2d u{1, -2}, v{0.5, 3}, a{2, 1}, b{-1, 4};
    const auto x = rank1_2d(u, v);
    EXPECT_NEAR(inner_cp(x, x), u.squaredNorm() * v.squaredNorm(), 1e-12);
    EXPECT_NEAR(inner_cp(x, rank1_2d(a, b)), u.dot(a) * v.dot(b), 1e-12);
    EXPECT_EQ(inner_cp(x, CPTensor::zeros(2, 2, 3)), 0.0);
    EXPECT_THROW(inner_cp(x, CPTensor::zeros(3, 2, 1)), shape_error);
    EXPECT_THROW(inner_cp(x, CPTensor::zeros(2, 3, 1)), shape_error);
}

TEST(CPTensor, DenseOracleEquivalence)
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> dd(1, 4), pp(0, 3), rr(1, 4);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = dd(rng), n = pp(rng) + 1;
        const auto x = oracle::random_cp(d, n, rr(rng), rng);
        const auto y = oracle::random_cp(d, n, rr(rng), rng);
        const double dense = oracle::dense_inner(to_full(x), to_full(y));
        EXPECT_LE(std::abs(inner_cp(x, y) - dense), 1e-10 * std::max(1.0, std::abs(dense)));
        EXPECT_GE(inner_cp(x, x), -1e-12);

        std::vector<Eigen::VectorXd> b;
        for (int k = 0; k < d; ++k) b.push_back(Eigen::VectorXd::Random(n));
        EXPECT_NEAR(inner_rank1(x, b), inner_cp(x, CPTensor::rank1(b)), 1e-12 * std::max(1.0, std::abs(inner_rank1(x, b))));
    }
}

TEST(CPTensor, GroupNorms)
{
    const auto x = CPTensor({Eigen::MatrixXd(Eigen::Vector2d(3, 0)), Eigen::MatrixXd(Eigen::Vector2d(4, 0))});
    EXPECT_DOUBLE_EQ(group_norms(x)[0], 5.0);
    EXPECT_EQ(group_norms(CPTensor::zeros(3, 3, 4)), Eigen::VectorXd::Zero(4));

    std::mt19937_64 rng(4);
    const auto y = oracle::random_cp(3, 3, 3, rng);
    std::vector<Eigen::MatrixXd> scaled;
    for (const auto& f : y.factors()) scaled.push_back(-2.5 * f);
    EXPECT_LE((group_norms(CPTensor(scaled)) - 2.5 * group_norms(y)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CPTensor, TruncateRank)
{
    Eigen::MatrixXd u(2, 2), v(2, 2);
    u << 3, 3e-9, 0, 0;
    v << 4, 4e-9, 0, 0;
    const CPTensor planted({u, v});
    const auto t = truncate_rank(planted, 1e-3);
    EXPECT_EQ(t.rank(), 1);
    EXPECT_DOUBLE_EQ(t.factor(0)(0, 0), 3.0);

    const CPTensor equal({Eigen::MatrixXd::Ones(3, 3), Eigen::MatrixXd::Ones(3, 3)});
    EXPECT_EQ(truncate_rank(equal, 1e-3).rank(), 3);
    const CPTensor single({Eigen::MatrixXd::Ones(3, 1)});
    EXPECT_EQ(truncate_rank(single, 0.5).rank(), 1);

    EXPECT_EQ(truncate_rank(CPTensor::zeros(2, 2, 3), 1e-3).rank(), 1);   // never rank 0
    EXPECT_THROW(truncate_rank(single, 0.0), domain_error);
    EXPECT_THROW(truncate_rank(single, 1.0), domain_error);
}

TEST(CPTensor, TruncationChangeBoundedByDeletedGroups)
{
    // ||X - trunc(X)||_F <= sum over deleted groups of prod_k ||u_r^(k)||.
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = oracle::random_cp(3, 3, 4, rng);
        std::vector<Eigen::MatrixXd> f = x.factors();
        for (auto& m : f) m.col(2) *= 1e-3;
        x = CPTensor(f);
        const auto t = truncate_rank(x, 1e-2);
        ASSERT_EQ(t.rank(), 3);
        const auto fx = to_full(x), ft = to_full(t);
        double diff = 0.0;
        for (std::size_t i = 0; i < fx.data.size(); ++i) diff += std::pow(fx.data[i] - ft.data[i], 2);
        double bound = 1.0;
        for (const auto& m : f) bound *= m.col(2).norm();
        EXPECT_LE(std::sqrt(diff), bound * (1 + 1e-6));
    }
}
