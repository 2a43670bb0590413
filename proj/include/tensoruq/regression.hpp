#pragma once

/**
 * @file regression.hpp
 * Rank-adaptive low-rank tensor regression.
 *
 * Fits the CP coefficient tensor X of a gPC expansion to samples (xi_n, y_n)
 * by minimizing
 *
 *     f_hat(X, eta) = h(X) + lambda * g_hat(X, eta)
 *     h(X)          = 1/2 sum_n (y_n - <X, B(xi_n)>)^2
 *     g_hat(X, eta) = 1/2 sum_r z_r^2 / eta_r + 1/2 ||eta||_{q/(2-q)}
 *
 * where z_r is the l2 norm of group r (column r across all factors). For the
 * optimal eta, g_hat equals the group lq/l2 norm g(X) = ||z||_q, which drives
 * whole rank-1 terms to zero.
 *
 * The solver alternates an exact eta update with exact block updates of each
 * factor U^(k) (a ridge problem once eta is fixed), so f_hat never increases.
 * Groups that vanish are removed once after convergence.
 */

#include <tensoruq/cptensor.hpp>
#include <tensoruq/errors.hpp>
#include <tensoruq/polybasis.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace tensoruq {

/// Samples in standardized parameter space: points is N x d, values has length N.
class Dataset {
public:
    Dataset(Eigen::MatrixXd points, Eigen::VectorXd values)
        : points_(std::move(points)), values_(std::move(values))
    {
        if (points_.rows() != values_.size())
            throw shape_error("Dataset: point and value counts differ");
        if (points_.rows() < 1) throw domain_error("Dataset: no samples");
        if (!points_.allFinite() || !values_.allFinite())
            throw domain_error("Dataset: non-finite entries");
    }

    Eigen::Index size() const noexcept { return values_.size(); }
    int dims() const noexcept { return static_cast<int>(points_.cols()); }
    const Eigen::MatrixXd& points() const noexcept { return points_; }
    const Eigen::VectorXd& values() const noexcept { return values_; }

private:
    Eigen::MatrixXd points_;
    Eigen::VectorXd values_;
};

/// Per-dimension basis evaluations of a point set: entry k is N x (p+1).
class BasisCache {
public:
    BasisCache(const Eigen::MatrixXd& points, const BasisFamily& basis)
    {
        const Eigen::Index n = points.rows();
        per_dim_.reserve(static_cast<std::size_t>(points.cols()));
        for (Eigen::Index k = 0; k < points.cols(); ++k) {
            Eigen::MatrixXd bk(n, basis.size());
            for (Eigen::Index i = 0; i < n; ++i) bk.row(i) = basis.values(points(i, k)).transpose();
            per_dim_.push_back(std::move(bk));
        }
    }

    int dims() const noexcept { return static_cast<int>(per_dim_.size()); }
    Eigen::Index samples() const noexcept { return per_dim_.empty() ? 0 : per_dim_.front().rows(); }
    const Eigen::MatrixXd& dim(int k) const { return per_dim_.at(static_cast<std::size_t>(k)); }

private:
    std::vector<Eigen::MatrixXd> per_dim_;
};

namespace detail {

inline void check_shapes(const CPTensor& x, const BasisCache& cache)
{
    if (cache.dims() != x.dims()) throw shape_error("model and data dimensionality differ");
    if (cache.dim(0).cols() != x.basis_size())
        throw shape_error("model basis size differs from the basis family");
}

// l_s quasi-norm (sum |v|^s)^(1/s), scaled by the max entry to avoid under/overflow.
inline double lp_norm(const Eigen::VectorXd& v, double s)
{
    const double m = v.cwiseAbs().maxCoeff();
    if (m == 0.0) return 0.0;
    if (s == 1.0) return v.cwiseAbs().sum();
    return m * std::pow((v.cwiseAbs() / m).array().pow(s).sum(), 1.0 / s);
}

} // namespace detail

inline Eigen::VectorXd predict_all(const CPTensor& x, const BasisCache& cache)
{
    detail::check_shapes(x, cache);
    Eigen::ArrayXXd acc = Eigen::ArrayXXd::Ones(cache.samples(), x.rank());
    for (int k = 0; k < x.dims(); ++k) acc *= (cache.dim(k) * x.factor(k)).array();
    return acc.rowwise().sum().matrix();
}

inline double loss_h(const CPTensor& x, const BasisCache& cache, const Eigen::VectorXd& y)
{
    return 0.5 * (y - predict_all(x, cache)).squaredNorm();
}

/// 1/2 sum_n (y_n - <X, B(xi_n)>)^2.
inline double loss_h(const CPTensor& x, const Dataset& data, const BasisFamily& basis)
{
    if (data.dims() != x.dims()) throw shape_error("loss_h: model and data dimensionality differ");
    return loss_h(x, BasisCache(data.points(), basis), data.values());
}

inline void check_q(double q)
{
    if (!(q > 0.0 && q <= 1.0)) throw domain_error("q must lie in (0, 1]");
}

/// Group lq/l2 penalty ||z||_q.
inline double penalty_g(const CPTensor& x, double q)
{
    check_q(q);
    return detail::lp_norm(group_norms(x), q);
}

/// eta_r = max(floor, z_r^(2-q) ||z||_q^(q-1)); the minimizer of g_hat over eta.
inline Eigen::VectorXd eta_update(const Eigen::VectorXd& z, double q, double eta_floor)
{
    check_q(q);
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(z.size(), eta_floor);
    const double zq = detail::lp_norm(z, q);
    if (zq == 0.0) return eta;
    const double scale = std::pow(zq, q - 1.0);
    for (Eigen::Index r = 0; r < z.size(); ++r)
        eta[r] = std::max(eta_floor, std::pow(z[r], 2.0 - q) * scale);
    return eta;
}

/**
 * Minimizer of g_hat over eta subject to eta >= floor.
 *
 * Without active floors this is eta_update. Clamped entries add a constant
 * to the l_{q/(2-q)} term, and the free entries then take the form
 * eta_r = kappa z_r^(2-q) with one scalar kappa solving
 *
 *     kappa = (kappa^s S + c)^e,   s = q/(2-q),  e = (s-1)/(s(s+1)),
 *
 * where S sums z_r^q over free entries and c = (#clamped) floor^s. The
 * clamped set is refined until it is consistent with kappa.
 */
inline Eigen::VectorXd eta_minimizer(const Eigen::VectorXd& z, double q, double eta_floor)
{
    Eigen::VectorXd eta = eta_update(z, q, eta_floor);
    if (q == 1.0 || (eta.array() > eta_floor).all()) return eta;

    const double s = q / (2.0 - q);
    const double e = (s - 1.0) / (s * (s + 1.0));
    const Eigen::ArrayXd zp = z.array().pow(2.0 - q);
    std::vector<bool> clamped(static_cast<std::size_t>(z.size()));
    for (Eigen::Index r = 0; r < z.size(); ++r) clamped[static_cast<std::size_t>(r)] = !(eta[r] > eta_floor);

    double kappa = 0.0;
    for (int pass = 0; pass < 64; ++pass) {
        double sum_free = 0.0;
        int n_clamped = 0;
        for (Eigen::Index r = 0; r < z.size(); ++r) {
            if (clamped[static_cast<std::size_t>(r)]) ++n_clamped;
            else sum_free += std::pow(z[r], q);
        }
        if (sum_free == 0.0) return Eigen::VectorXd::Constant(z.size(), eta_floor);
        const double c = n_clamped * std::pow(eta_floor, s);

        // log kappa - e log(kappa^s S + c) is increasing in log kappa; the root
        // lies below the unclamped solution S^((q-1)/q).
        double hi = (q - 1.0) / q * std::log(sum_free);
        double lo = hi - 1400.0;
        const auto residual = [&](double lk) {
            return lk - e * std::log(std::exp(s * lk) * sum_free + c);
        };
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (residual(mid) > 0.0 ? hi : lo) = mid;
        }
        kappa = std::exp(0.5 * (lo + hi));

        bool changed = false;
        for (Eigen::Index r = 0; r < z.size(); ++r) {
            const bool now = !(kappa * zp[r] > eta_floor);
            if (now != clamped[static_cast<std::size_t>(r)]) {
                clamped[static_cast<std::size_t>(r)] = now;
                changed = true;
            }
        }
        if (!changed) break;
    }
    for (Eigen::Index r = 0; r < z.size(); ++r) eta[r] = std::max(eta_floor, kappa * zp[r]);
    return eta;
}

/// Variational surrogate 1/2 sum_r z_r^2/eta_r + 1/2 ||eta||_{q/(2-q)}.
inline double penalty_ghat(const CPTensor& x, const Eigen::VectorXd& eta, double q)
{
    check_q(q);
    if (eta.size() != x.rank()) throw shape_error("penalty_ghat: eta length != rank");
    if ((eta.array() <= 0.0).any()) throw domain_error("penalty_ghat: eta must be positive");
    const Eigen::VectorXd z = group_norms(x);
    return 0.5 * (z.array().square() / eta.array()).sum() + 0.5 * detail::lp_norm(eta, q / (2.0 - q));
}

struct SolverConfig {
    int initial_rank = 4;
    double q = 0.5;
    double lambda = 0.0;
    int max_sweeps = 200;
    double objective_rel_tol = 1e-6;
    double eta_floor = 1e-8;
    double truncation_rel_threshold = 1e-3;
    std::uint64_t seed = 0;
    /// Cold starts tried by fit(data, basis, cfg); the lowest final f_hat wins.
    int restarts = 3;
    /// Refit with lambda = 0 at the truncated rank when N >= debias_sample_ratio * d (p+1) R_hat.
    bool debias = true;
    double debias_sample_ratio = 2.0;

    void validate() const
    {
        if (initial_rank < 1) throw domain_error("initial_rank must be >= 1");
        check_q(q);
        if (!(lambda >= 0.0)) throw domain_error("lambda must be >= 0");
        if (max_sweeps < 1) throw domain_error("max_sweeps must be >= 1");
        if (restarts < 1) throw domain_error("restarts must be >= 1");
        if (!(eta_floor > 0.0)) throw domain_error("eta_floor must be > 0");
        if (!(objective_rel_tol >= 0.0)) throw domain_error("objective_rel_tol must be >= 0");
        if (!(truncation_rel_threshold > 0.0 && truncation_rel_threshold < 1.0))
            throw domain_error("truncation_rel_threshold must lie in (0, 1)");
        if (!(debias_sample_ratio >= 0.0)) throw domain_error("debias_sample_ratio must be >= 0");
    }
};

inline double objective_fhat(const CPTensor& x, const BasisCache& cache, const Eigen::VectorXd& y,
                             double lambda, double q, const Eigen::VectorXd& eta)
{
    const double h = loss_h(x, cache, y);
    return lambda == 0.0 ? h : h + lambda * penalty_ghat(x, eta, q);
}

/// h(X) + lambda g_hat(X, eta).
inline double objective_fhat(const CPTensor& x, const Dataset& data, const BasisFamily& basis,
                             const SolverConfig& cfg, const Eigen::VectorXd& eta)
{
    if (data.dims() != x.dims()) throw shape_error("objective_fhat: model and data dimensionality differ");
    return objective_fhat(x, BasisCache(data.points(), basis), data.values(), cfg.lambda, cfg.q, eta);
}

/**
 * Exact minimizer of f_hat over factor k with the other factors and eta held
 * fixed. The prediction is linear in vec(U^(k)):
 *
 *     y_hat_n = sum_r w_{n,r} (b_n^(k) . u_r^(k)),   w_{n,r} = prod_{j != k} (u_r^(j) . b_n^(j)),
 *
 * so the update solves (A^T A + lambda D) vec(U^(k)) = A^T y with
 * D = blockdiag(I / eta_r). The system is positive definite whenever
 * lambda > 0; with lambda == 0 a singular system raises numerical_error.
 */
inline CPTensor solve_factor(int k, const CPTensor& x, const BasisCache& cache, const Eigen::VectorXd& y,
                             double lambda, const Eigen::VectorXd& eta)
{
    detail::check_shapes(x, cache);
    if (k < 0 || k >= x.dims()) throw shape_error("solve_factor: dimension index out of range");
    if (eta.size() != x.rank()) throw shape_error("solve_factor: eta length != rank");
    if ((eta.array() <= 0.0).any()) throw domain_error("solve_factor: eta must be positive");

    const Eigen::Index n = cache.samples();
    const int nb = x.basis_size();
    const int rank = x.rank();

    Eigen::ArrayXXd w = Eigen::ArrayXXd::Ones(n, rank);
    for (int j = 0; j < x.dims(); ++j)
        if (j != k) w *= (cache.dim(j) * x.factor(j)).array();

    const Eigen::MatrixXd& bk = cache.dim(k);
    Eigen::MatrixXd a(n, static_cast<Eigen::Index>(nb) * rank);
    for (int r = 0; r < rank; ++r)
        a.middleCols(static_cast<Eigen::Index>(r) * nb, nb) = (bk.array().colwise() * w.col(r)).matrix();

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(a.cols(), a.cols());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
    gram = gram.selfadjointView<Eigen::Lower>();
    if (lambda > 0.0)
        for (int r = 0; r < rank; ++r)
            gram.diagonal().segment(static_cast<Eigen::Index>(r) * nb, nb).array() += lambda / eta[r];
    const Eigen::VectorXd rhs = a.transpose() * y;

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success || (lambda == 0.0 && llt.rcond() < 1e-14))
        throw numerical_error("solve_factor: normal equations are singular for dimension " + std::to_string(k));
    const Eigen::VectorXd sol = llt.solve(rhs);
    if (!sol.allFinite()) throw numerical_error("solve_factor: non-finite solution");

    return x.with_factor(k, Eigen::Map<const Eigen::MatrixXd>(sol.data(), nb, rank));
}

inline CPTensor solve_factor(int k, const CPTensor& x, const Dataset& data, const BasisFamily& basis,
                             double lambda, const Eigen::VectorXd& eta)
{
    if (data.dims() != x.dims()) throw shape_error("solve_factor: model and data dimensionality differ");
    return solve_factor(k, x, BasisCache(data.points(), basis), data.values(), lambda, eta);
}

inline constexpr double kInitSpread = 0.3;

/**
 * Random starting point near the constant polynomial: column entries e_1 +
 * 0.3 * U[-0.5, 0.5], every column scaled to unit norm, with the product of the
 * original column norms folded into the first factor.
 *
 * Fully random directions make each rank-1 term a product of d unrelated
 * one-dimensional polynomials. For d around 10 that term is heavy-tailed in
 * xi and its magnitude product is tiny, which starves the first eta update
 * and collapses every group. Starting close to e_1 keeps both under control.
 */
inline CPTensor initialize_factors(int d, int basis_size, int rank, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    std::vector<Eigen::MatrixXd> f(static_cast<std::size_t>(d), Eigen::MatrixXd(basis_size, rank));
    for (auto& u : f)
        for (Eigen::Index c = 0; c < u.cols(); ++c)
            for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, c) = (i == 0 ? 1.0 : 0.0) + kInitSpread * unif(rng);

    for (int r = 0; r < rank; ++r) {
        double magnitude = 1.0;
        for (auto& u : f) {
            const double nrm = u.col(r).norm();
            if (nrm > 0.0) u.col(r) /= nrm;
            magnitude *= nrm;
        }
        f.front().col(r) *= magnitude;
    }
    return CPTensor(std::move(f));
}

/**
 * Appends random columns until the tensor has `rank` groups. Each new group
 * has norm `scale` times the largest existing group norm, spread evenly over
 * the d factors.
 */
inline CPTensor pad_rank(const CPTensor& x, int rank, double scale, std::uint64_t seed)
{
    if (x.rank() >= rank) return x;
    const int extra = rank - x.rank();
    const CPTensor fresh = initialize_factors(x.dims(), x.basis_size(), extra, seed);
    const double zmax = std::max(group_norms(x).maxCoeff(), std::numeric_limits<double>::min());
    const double per_factor = scale * zmax / std::sqrt(static_cast<double>(x.dims()));

    std::vector<Eigen::MatrixXd> f;
    f.reserve(x.factors().size());
    for (int k = 0; k < x.dims(); ++k) {
        Eigen::MatrixXd u(x.basis_size(), rank);
        u.leftCols(x.rank()) = x.factor(k);
        u.rightCols(extra) = fresh.factor(k).colwise().normalized() * per_factor;
        f.push_back(std::move(u));
    }
    return CPTensor(std::move(f));
}

struct SweepRecord {
    int sweep = 0;
    double objective = 0.0;   ///< f_hat at the end of the sweep
    int active_rank = 0;      ///< groups above the truncation threshold
};

struct FitResult {
    CPTensor model;           ///< post-truncation (and post-debias, when applied)
    int estimated_rank = 0;
    std::vector<SweepRecord> history;
    std::vector<double> objective_trace;   ///< f_hat after every eta update and factor solve
    bool converged = false;
    double final_objective = 0.0;          ///< penalized f_hat at the end of the alternating phase
    Eigen::VectorXd eta;      ///< eta of the last sweep, before truncation
    bool debiased = false;
    int debias_sweeps = 0;
};

namespace detail {

// Unpenalized block sweeps at fixed rank; returns the number of sweeps run.
inline int refit_unpenalized(CPTensor& x, const BasisCache& cache, const Eigen::VectorXd& y,
                             const SolverConfig& cfg)
{
    const Eigen::VectorXd unit = Eigen::VectorXd::Ones(x.rank());
    double previous = loss_h(x, cache, y);
    for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
        for (int k = 0; k < x.dims(); ++k) x = solve_factor(k, x, cache, y, 0.0, unit);
        const double current = loss_h(x, cache, y);
        if (current == 0.0 || std::abs(previous - current) <= cfg.objective_rel_tol * std::abs(previous))
            return sweep;
        previous = current;
    }
    return cfg.max_sweeps;
}

} // namespace detail

/**
 * Alternating minimization of f_hat starting from `start`. One sweep updates
 * eta, then factors k = 0..d-1 in order. Stops when the relative change of
 * f_hat over a sweep drops below cfg.objective_rel_tol or after
 * cfg.max_sweeps sweeps, then truncates vanished groups once.
 *
 * The eta step uses eta_minimizer, and a candidate that would raise g_hat
 * (possible only through clamped entries) is rejected, so objective_trace
 * is non-increasing.
 *
 * With cfg.debias set and enough samples for the surviving parameters, the
 * truncated model is refit with lambda = 0 to remove the shrinkage bias of
 * the penalty. A singular unpenalized system leaves the penalized model.
 */
inline FitResult fit(const Dataset& data, const BasisFamily& basis, const SolverConfig& cfg, CPTensor start)
{
    cfg.validate();
    if (data.dims() != start.dims()) throw shape_error("fit: start model and data dimensionality differ");
    if (start.basis_size() != basis.size()) throw shape_error("fit: start model basis size mismatch");

    const BasisCache cache(data.points(), basis);
    const Eigen::VectorXd& y = data.values();
    const double lambda = cfg.lambda;

    CPTensor x = std::move(start);
    FitResult out{x, 0, {}, {}, false, 0.0, {}, false, 0};
    Eigen::VectorXd eta;
    double previous = std::numeric_limits<double>::infinity();

    for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
        Eigen::VectorXd candidate = eta_minimizer(group_norms(x), cfg.q, cfg.eta_floor);
        if (eta.size() == 0 || penalty_ghat(x, candidate, cfg.q) <= penalty_ghat(x, eta, cfg.q))
            eta = std::move(candidate);
        out.objective_trace.push_back(objective_fhat(x, cache, y, lambda, cfg.q, eta));
        for (int k = 0; k < x.dims(); ++k) {
            x = solve_factor(k, x, cache, y, lambda, eta);
            out.objective_trace.push_back(objective_fhat(x, cache, y, lambda, cfg.q, eta));
        }
        const double current = out.objective_trace.back();
        out.history.push_back({sweep, current,
                               static_cast<int>(surviving_groups(group_norms(x), cfg.truncation_rel_threshold).size())});

        const bool settled = std::isfinite(previous) &&
                             std::abs(previous - current) <= cfg.objective_rel_tol * std::abs(previous);
        if (current == 0.0 || settled) {
            out.converged = true;
            break;
        }
        previous = current;
    }

    out.eta = eta;
    out.final_objective = out.objective_trace.back();
    out.model = truncate_rank(x, cfg.truncation_rel_threshold);
    out.estimated_rank = out.model.rank();

    if (cfg.debias && lambda > 0.0 &&
        static_cast<double>(data.size()) >= cfg.debias_sample_ratio * static_cast<double>(parameter_count(out.model))) {
        CPTensor refit = out.model;
        try {
            out.debias_sweeps = detail::refit_unpenalized(refit, cache, y, cfg);
            out.model = std::move(refit);
            out.debiased = true;
        } catch (const numerical_error&) {
            out.debias_sweeps = 0;
        }
    }
    return out;
}

/// Seed of cold-start attempt `attempt`; attempt 0 uses cfg.seed itself.
inline std::uint64_t restart_seed(std::uint64_t seed, int attempt)
{
    return seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL;
}

/**
 * Cold start from initialize_factors, repeated cfg.restarts times with
 * different seeds. Some starts stall in a symmetric state where all groups
 * share the signal; keeping the lowest penalized objective avoids them.
 */
inline FitResult fit(const Dataset& data, const BasisFamily& basis, const SolverConfig& cfg)
{
    cfg.validate();
    std::optional<FitResult> best;
    for (int attempt = 0; attempt < cfg.restarts; ++attempt) {
        const auto start = initialize_factors(data.dims(), basis.size(), cfg.initial_rank, restart_seed(cfg.seed, attempt));
        FitResult r = fit(data, basis, cfg, start);
        if (!best || r.final_objective < best->final_objective) best = std::move(r);
    }
    return std::move(*best);
}

} // namespace tensoruq
