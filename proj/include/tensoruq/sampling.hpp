#pragma once

/**
 * @file sampling.hpp
 * Experimental design for the active-learning loop.
 *
 * The Voronoi cells of the current design are estimated by assigning a
 * Monte-Carlo candidate pool (drawn from the input measure) to its nearest
 * design point. A cell that collects many candidates covers a lot of
 * probability mass with a single sample, so cells are ranked by descending
 * candidate count and new samples are drawn from the top-ranked cells:
 *
 *   explore: the candidate farthest from the cell center;
 *   exploit: the candidate with the largest first-order Taylor residual
 *            gamma(xi) = |y(xi) - y(a) - grad y(a)^T (xi - a)| around the
 *            cell center a.
 *
 * All ties resolve to the lowest index.
 */

#include <tensoruq/cptensor.hpp>
#include <tensoruq/errors.hpp>
#include <tensoruq/polybasis.hpp>
#include <tensoruq/surrogate.hpp>

#include <boost/math/distributions/normal.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace tensoruq {

/// n stratified points in [0,1)^d: every dimension has exactly one point per slice [i/n, (i+1)/n).
inline Eigen::MatrixXd latin_hypercube(int n, int d, std::uint64_t seed)
{
    if (n < 1 || d < 1) throw domain_error("latin_hypercube requires n >= 1 and d >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd out(n, d);
    std::vector<int> strata(static_cast<std::size_t>(n));
    for (int k = 0; k < d; ++k) {
        std::iota(strata.begin(), strata.end(), 0);
        std::shuffle(strata.begin(), strata.end(), rng);
        for (int i = 0; i < n; ++i) {
            const double lo = static_cast<double>(strata[static_cast<std::size_t>(i)]);
            double v = (lo + unif(rng)) / n;
            // Rounding can push v onto the upper edge of its slice.
            const double hi = (lo + 1.0) / n;
            if (v >= hi) v = std::nextafter(hi, 0.0);
            out(i, k) = v;
        }
    }
    return out;
}

inline constexpr double kQuantileClamp = 1e-12;

/// Inverse standard-normal CDF; arguments are clamped to [1e-12, 1 - 1e-12].
inline double standard_normal_quantile(double u)
{
    if (std::isnan(u)) throw domain_error("standard_normal_quantile: NaN input");
    u = std::clamp(u, kQuantileClamp, 1.0 - kQuantileClamp);
    static const boost::math::normal_distribution<double> normal;
    return boost::math::quantile(normal, u);
}

inline Eigen::MatrixXd to_standard_normal(const Eigen::MatrixXd& unit_points)
{
    return unit_points.unaryExpr([](double u) { return standard_normal_quantile(u); });
}

/// M x d draws from the standard normal input measure.
inline Eigen::MatrixXd draw_standard_normal(Eigen::Index m, int d, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd out(m, d);
    for (Eigen::Index i = 0; i < m; ++i)
        for (int k = 0; k < d; ++k) out(i, k) = normal(rng);
    return out;
}

/// Current design Omega: pairwise distinct finite points, one per row.
class Design {
public:
    explicit Design(Eigen::MatrixXd points) : points_(std::move(points))
    {
        if (points_.rows() < 1 || points_.cols() < 1) throw domain_error("Design: empty");
        if (!points_.allFinite()) throw domain_error("Design: non-finite entries");
        for (Eigen::Index i = 0; i < points_.rows(); ++i)
            for (Eigen::Index j = i + 1; j < points_.rows(); ++j)
                if (points_.row(i) == points_.row(j)) throw domain_error("Design: duplicate points");
    }

    const Eigen::MatrixXd& points() const noexcept { return points_; }
    Eigen::Index size() const noexcept { return points_.rows(); }
    int dims() const noexcept { return static_cast<int>(points_.cols()); }

private:
    Eigen::MatrixXd points_;
};

struct VoronoiEstimate {
    Eigen::MatrixXd centers;        ///< design points, one per row
    Eigen::MatrixXd pool;           ///< Monte-Carlo candidates, one per row
    std::vector<int> assignment;    ///< nearest center of each candidate
    std::vector<int> cell_counts;   ///< candidates per center
};

/// Nearest-center (Euclidean) assignment of every pool row.
inline VoronoiEstimate assign_to_cells(const Eigen::MatrixXd& centers, Eigen::MatrixXd pool)
{
    if (centers.rows() < 1) throw domain_error("assign_to_cells: no centers");
    if (pool.rows() < 1) throw domain_error("assign_to_cells: empty pool");
    if (centers.cols() != pool.cols()) throw shape_error("assign_to_cells: dimension mismatch");

    VoronoiEstimate est;
    est.centers = centers;
    est.assignment.assign(static_cast<std::size_t>(pool.rows()), 0);
    est.cell_counts.assign(static_cast<std::size_t>(centers.rows()), 0);
    for (Eigen::Index m = 0; m < pool.rows(); ++m) {
        int best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < centers.rows(); ++i) {
            const double d2 = (pool.row(m) - centers.row(i)).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best = static_cast<int>(i);
            }
        }
        est.assignment[static_cast<std::size_t>(m)] = best;
        ++est.cell_counts[static_cast<std::size_t>(best)];
    }
    est.pool = std::move(pool);
    return est;
}

/// Monte-Carlo Voronoi estimate with M standard-normal candidates.
inline VoronoiEstimate estimate_voronoi(const Design& design, Eigen::Index m, std::uint64_t seed)
{
    if (m < 1) throw domain_error("estimate_voronoi: pool size must be >= 1");
    return assign_to_cells(design.points(), draw_standard_normal(m, design.dims(), seed));
}

/// Non-empty cells ordered by descending candidate count, ties by lowest index.
inline std::vector<int> ranked_cells(const VoronoiEstimate& est)
{
    std::vector<int> cells;
    for (std::size_t i = 0; i < est.cell_counts.size(); ++i)
        if (est.cell_counts[i] > 0) cells.push_back(static_cast<int>(i));
    std::stable_sort(cells.begin(), cells.end(), [&](int a, int b) {
        return est.cell_counts[static_cast<std::size_t>(a)] > est.cell_counts[static_cast<std::size_t>(b)];
    });
    return cells;
}

struct Selection {
    Eigen::Index pool_index = -1;
    Eigen::VectorXd point;
};

enum class SelectionMode { explore, exploit };

inline std::string_view to_string(SelectionMode m)
{
    return m == SelectionMode::explore ? "explore" : "exploit";
}

/// |y(xi) - y(a) - grad y(a)^T (xi - a)| in standardized coordinates.
inline double nonlinearity_gamma(const CPTensor& model, const BasisFamily& basis, const Eigen::VectorXd& xi,
                                 const Eigen::VectorXd& a)
{
    if (xi.size() != a.size()) throw shape_error("nonlinearity_gamma: point dimensions differ");
    if (xi == a) return 0.0;
    const double ya = evaluate(model, basis, a);
    const Eigen::VectorXd ga = evaluate_gradient(model, basis, a);
    return std::abs(evaluate(model, basis, xi) - ya - ga.dot(xi - a));
}

namespace detail {

// Candidate of `cell` maximizing score(pool_row); ties go to the lowest pool index.
template <typename Score>
Selection best_in_cell(const VoronoiEstimate& est, int cell, Score&& score)
{
    Selection sel;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < est.assignment.size(); ++m) {
        if (est.assignment[m] != cell) continue;
        const auto idx = static_cast<Eigen::Index>(m);
        const double s = score(idx);
        if (sel.pool_index < 0 || s > best) {
            best = s;
            sel.pool_index = idx;
        }
    }
    if (sel.pool_index < 0) throw domain_error("best_in_cell: cell has no candidates");
    sel.point = est.pool.row(sel.pool_index).transpose();
    return sel;
}

inline Selection explore_cell(const VoronoiEstimate& est, int cell)
{
    return best_in_cell(est, cell, [&](Eigen::Index m) {
        return (est.pool.row(m) - est.centers.row(cell)).squaredNorm();
    });
}

inline Selection exploit_cell(const VoronoiEstimate& est, int cell, const CPTensor& model, const BasisFamily& basis)
{
    const Eigen::VectorXd a = est.centers.row(cell).transpose();
    const double ya = evaluate(model, basis, a);
    const Eigen::VectorXd ga = evaluate_gradient(model, basis, a);
    return best_in_cell(est, cell, [&](Eigen::Index m) {
        const Eigen::VectorXd xi = est.pool.row(m).transpose();
        return std::abs(evaluate(model, basis, xi) - ya - ga.dot(xi - a));
    });
}

} // namespace detail

/// Candidate farthest from its center within the cell holding the most candidates.
inline Selection select_explore(const VoronoiEstimate& est)
{
    const auto cells = ranked_cells(est);
    if (cells.empty()) throw domain_error("select_explore: empty pool");
    return detail::explore_cell(est, cells.front());
}

/// Candidate with the largest gamma within the cell holding the most candidates.
inline Selection select_exploit(const VoronoiEstimate& est, const CPTensor& model, const BasisFamily& basis)
{
    if (model.dims() != est.centers.cols()) throw shape_error("select_exploit: model dimension mismatch");
    const auto cells = ranked_cells(est);
    if (cells.empty()) throw domain_error("select_exploit: empty pool");
    return detail::exploit_cell(est, cells.front(), model, basis);
}

/**
 * One candidate from each of the K highest-ranked cells (fewer if fewer cells
 * are non-empty). Exploit mode requires a model.
 */
inline std::vector<Selection> select_batch(const VoronoiEstimate& est, const CPTensor* model,
                                           const BasisFamily& basis, int k, SelectionMode mode)
{
    if (k < 1) throw domain_error("select_batch: K must be >= 1");
    if (mode == SelectionMode::exploit && model == nullptr)
        throw domain_error("select_batch: exploit mode needs a fitted model");
    const auto cells = ranked_cells(est);
    const std::size_t take = std::min(cells.size(), static_cast<std::size_t>(k));
    std::vector<Selection> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        out.push_back(mode == SelectionMode::explore ? detail::explore_cell(est, cells[i])
                                                     : detail::exploit_cell(est, cells[i], *model, basis));
    return out;
}

inline std::vector<Selection> select_batch(const VoronoiEstimate& est, const std::optional<CPTensor>& model,
                                           const BasisFamily& basis, int k, SelectionMode mode)
{
    return select_batch(est, model ? &*model : nullptr, basis, k, mode);
}

} // namespace tensoruq
