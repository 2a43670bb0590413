#pragma once

/**
 * @file active_loop.hpp
 * Active-learning driver: Latin-hypercube start, fit, then rounds of
 * Voronoi-guided batch selection, simulation and warm-started refits.
 */

#include <tensoruq/cptensor.hpp>
#include <tensoruq/errors.hpp>
#include <tensoruq/harness/benchmark.hpp>
#include <tensoruq/harness/history.hpp>
#include <tensoruq/harness/model_io.hpp>
#include <tensoruq/harness/simulator.hpp>
#include <tensoruq/polybasis.hpp>
#include <tensoruq/regression.hpp>
#include <tensoruq/sampling.hpp>
#include <tensoruq/surrogate.hpp>

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace tensoruq::harness {

enum class Mode { explore, exploit, random };

inline Mode mode_from_string(const std::string& s)
{
    if (s == "explore") return Mode::explore;
    if (s == "exploit") return Mode::exploit;
    if (s == "random") return Mode::random;
    throw config_error("unknown mode '" + s + "' (expected explore|exploit|random)");
}

inline std::string to_string(Mode m)
{
    switch (m) {
    case Mode::explore: return "explore";
    case Mode::exploit: return "exploit";
    case Mode::random: return "random";
    }
    return "?";
}

struct RunConfig {
    int d = 2;
    int p = 2;
    int initial_rank = 4;
    double q = 0.5;
    std::optional<double> lambda;       ///< unset: 1e-3 * N at every fit
    bool no_rank_penalty = false;       ///< lambda = 0, rank fixed at initial_rank
    int n_init = 20;
    int n_batches = 0;
    int batch_size = 10;
    std::optional<long long> pool_size; ///< unset: 100 * |design|
    Mode mode = Mode::explore;
    std::uint64_t seed = 0;
    std::string benchmark;              ///< builtin name, or empty when sim_command is used
    std::string sim_command;
    std::chrono::milliseconds sim_timeout = std::chrono::minutes(10);
    long long test_size = 100000;
    std::string test_file;              ///< raw "x_1,...,x_d,y" rows, for external simulators
    std::string out_dir;                ///< empty: nothing written
    std::vector<Standardization> standardization;   ///< empty: N(0,1) in every dimension
    bool record_wall_time = true;
    int max_sweeps = 200;

    void validate() const
    {
        if (d < 1) throw config_error("--dim must be >= 1");
        if (p < 0) throw config_error("--order must be >= 0");
        if (initial_rank < 1) throw config_error("--rank-init must be >= 1");
        if (!(q > 0.0 && q <= 1.0)) throw config_error("--q must lie in (0, 1]");
        if (lambda && !(*lambda >= 0.0)) throw config_error("--lambda must be >= 0");
        if (n_init < 1) throw config_error("--init-samples must be >= 1");
        if (n_batches < 0) throw config_error("--batches must be >= 0");
        if (batch_size < 1) throw config_error("--batch-size must be >= 1");
        if (pool_size && *pool_size < 1) throw config_error("--pool-size must be >= 1");
        if (test_size < 0) throw config_error("--test-size must be >= 0");
        if (max_sweeps < 1) throw config_error("--max-sweeps must be >= 1");
        if (benchmark.empty() == sim_command.empty())
            throw config_error("exactly one of --benchmark and --sim-cmd is required");
        if (!standardization.empty() && static_cast<int>(standardization.size()) != d)
            throw config_error("need one mean/std pair per dimension");
        for (const auto& s : standardization)
            if (!(s.std > 0.0)) throw config_error("standard deviations must be positive");
    }

    std::vector<Standardization> resolved_standardization() const
    {
        return standardization.empty() ? std::vector<Standardization>(static_cast<std::size_t>(d)) : standardization;
    }
};

/// Independent seed for a named stream (splitmix64 over seed, stream and index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0)
{
    std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (index * 0xD1B54A32D192ED03ULL);
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kLatinHypercube = 1, kSolverInit, kPool, kRandomBatch, kPadding, kTestSet, kMoments };

struct TestSet {
    Eigen::MatrixXd raw_points;
    Eigen::VectorXd values;
};

/// Raw-space rows "x_1,...,x_d,y".
inline TestSet load_test_file(const std::string& path, int d)
{
    std::ifstream in(path);
    if (!in) throw config_error("cannot open test file " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const auto comma = line.find(',', pos);
            const auto cell = std::string_view(line).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            double v = 0.0;
            if (!detail::parse_double(cell, v))
                throw config_error("test file line " + std::to_string(lineno) + ": malformed number");
            row.push_back(v);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (static_cast<int>(row.size()) != d + 1)
            throw config_error("test file line " + std::to_string(lineno) + ": expected d+1 fields");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw config_error("test file " + path + " has no rows");
    TestSet t{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), d),
              Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()))};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int k = 0; k < d; ++k) t.raw_points(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
        t.values[static_cast<Eigen::Index>(i)] = rows[i][static_cast<std::size_t>(d)];
    }
    return t;
}

struct RunResult {
    RunHistory history;
    SurrogateModel model;
    FitResult last_fit;
    Eigen::MatrixXd raw_points;   ///< every simulated point, in acquisition order
    Eigen::VectorXd values;
};

namespace detail {

inline Eigen::MatrixXd to_raw(const Eigen::MatrixXd& xi, const std::vector<Standardization>& st)
{
    Eigen::MatrixXd raw(xi.rows(), xi.cols());
    for (Eigen::Index k = 0; k < xi.cols(); ++k)
        raw.col(k) = xi.col(k).array() * st[static_cast<std::size_t>(k)].std + st[static_cast<std::size_t>(k)].mean;
    return raw;
}

inline Eigen::MatrixXd append_rows(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    Eigen::MatrixXd out(a.rows() + b.rows(), a.cols());
    out << a, b;
    return out;
}

inline Eigen::VectorXd append(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
}

// Batch of standardized points for one round. Selection modes take one
// candidate per top-ranked cell; if fewer cells are non-empty than the batch
// needs, the remainder comes from the unpicked candidates farthest from their
// cell centers.
inline Eigen::MatrixXd choose_batch(const RunConfig& cfg, const Eigen::MatrixXd& design_xi, const CPTensor& model,
                                    const BasisFamily& basis, int round)
{
    if (cfg.mode == Mode::random)
        return draw_standard_normal(cfg.batch_size, cfg.d, derive_seed(cfg.seed, kRandomBatch, static_cast<std::uint64_t>(round)));

    const Eigen::Index pool = cfg.pool_size ? static_cast<Eigen::Index>(*cfg.pool_size) : 100 * design_xi.rows();
    const auto est = estimate_voronoi(Design(design_xi), pool, derive_seed(cfg.seed, kPool, static_cast<std::uint64_t>(round)));
    const auto mode = cfg.mode == Mode::explore ? SelectionMode::explore : SelectionMode::exploit;
    auto picks = select_batch(est, &model, basis, cfg.batch_size, mode);

    if (static_cast<int>(picks.size()) < cfg.batch_size) {
        std::set<Eigen::Index> taken;
        for (const auto& s : picks) taken.insert(s.pool_index);
        std::vector<std::pair<double, Eigen::Index>> rest;
        for (Eigen::Index m = 0; m < est.pool.rows(); ++m)
            if (!taken.count(m))
                rest.emplace_back(-(est.pool.row(m) - est.centers.row(est.assignment[static_cast<std::size_t>(m)])).squaredNorm(), m);
        std::stable_sort(rest.begin(), rest.end());
        for (std::size_t i = 0; i < rest.size() && static_cast<int>(picks.size()) < cfg.batch_size; ++i)
            picks.push_back({rest[i].second, est.pool.row(rest[i].second).transpose()});
    }

    Eigen::MatrixXd out(static_cast<Eigen::Index>(picks.size()), cfg.d);
    for (std::size_t i = 0; i < picks.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = picks[i].point.transpose();
    return out;
}

} // namespace detail

/**
 * Runs the loop with an explicit simulator. `test` (raw space) feeds the
 * test_err column; without it test_err is NaN. When cfg.out_dir is set the
 * history (history.csv), model (model.json) and a summary (summary.json) are
 * written there; a simulator failure writes the partial history and rethrows.
 */
inline RunResult run_active_loop(const RunConfig& cfg, const Simulator& simulate, const std::optional<TestSet>& test)
{
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const auto st = cfg.resolved_standardization();
    const BasisFamily basis(Family::hermite, cfg.p);
    const std::filesystem::path out_dir = cfg.out_dir;
    if (!cfg.out_dir.empty()) std::filesystem::create_directories(out_dir);

    RunHistory history;
    auto flush = [&] {
        if (!cfg.out_dir.empty() && !history.empty()) emit_history(history, out_dir / "history.csv");
    };

    SolverConfig solver;
    solver.initial_rank = cfg.initial_rank;
    solver.q = cfg.q;
    solver.max_sweeps = cfg.max_sweeps;
    solver.seed = derive_seed(cfg.seed, kSolverInit);

    auto simulate_checked = [&](const Eigen::MatrixXd& raw) {
        try {
            Eigen::VectorXd y = simulate(raw);
            if (y.size() != raw.rows()) throw protocol_error("simulator returned wrong number of values");
            return y;
        } catch (...) {
            flush();
            throw;
        }
    };

    auto start = clock::now();
    Eigen::MatrixXd xi = to_standard_normal(latin_hypercube(cfg.n_init, cfg.d, derive_seed(cfg.seed, kLatinHypercube)));
    Eigen::MatrixXd raw = detail::to_raw(xi, st);
    Eigen::VectorXd y = simulate_checked(raw);

    std::optional<CPTensor> model;
    FitResult last{CPTensor::zeros(cfg.d, cfg.p + 1, 1), 0, {}, {}, false, 0.0, {}, false, 0};

    for (int round = 0; round <= cfg.n_batches; ++round) {
        if (round > 0) {
            const Eigen::MatrixXd batch = detail::choose_batch(cfg, xi, *model, basis, round);
            const Eigen::MatrixXd batch_raw = detail::to_raw(batch, st);
            const Eigen::VectorXd batch_y = simulate_checked(batch_raw);
            xi = detail::append_rows(xi, batch);
            raw = detail::append_rows(raw, batch_raw);
            y = detail::append(y, batch_y);
        }

        const Dataset data(xi, y);
        solver.lambda = cfg.no_rank_penalty ? 0.0 : cfg.lambda.value_or(1e-3 * static_cast<double>(data.size()));
        if (model)
            last = fit(data, basis, solver,
                       pad_rank(*model, cfg.initial_rank, 1e-2, derive_seed(cfg.seed, kPadding, static_cast<std::uint64_t>(round))));
        else
            last = fit(data, basis, solver);
        model = last.model;

        const SurrogateModel sm(*model, basis, st);
        const double train_err = y.norm() > 0.0 ? (predict_all(*model, BasisCache(xi, basis)) - y).norm() / y.norm() : 0.0;
        const double test_err = test ? relative_error(sm, test->raw_points, test->values) : std::nan("");
        const auto now = clock::now();
        const double wall = cfg.record_wall_time ? std::chrono::duration<double, std::milli>(now - start).count() : 0.0;
        start = now;
        history.push_back({round, static_cast<long long>(data.size()), train_err, test_err, last.estimated_rank,
                           last.final_objective, wall});
    }

    RunResult result{history, SurrogateModel(*model, basis, st), last, raw, y};
    if (!cfg.out_dir.empty()) {
        flush();
        persist_model(result.model, out_dir / "model.json");
        const Moments analytic = moments(result.model);
        const Moments sampled = sampled_moments(result.model, 100000, derive_seed(cfg.seed, kMoments));
        nlohmann::json summary = {
            {"samples", static_cast<long long>(y.size())},
            {"estimated_rank", last.estimated_rank},
            {"parameter_count", parameter_count(result.model.coeffs())},
            {"full_basis_log10", count_basis(cfg.d, cfg.p).log10_full_count},
            {"total_degree_terms", count_basis(cfg.d, cfg.p).total_degree_count},
            {"mean", analytic.mean},
            {"stddev", analytic.stddev()},
            {"sampled_mean", sampled.mean},
            {"sampled_stddev", sampled.stddev()},
            {"converged", last.converged},
            {"mode", to_string(cfg.mode)},
        };
        std::ofstream(out_dir / "summary.json") << summary.dump(2) << '\n';
    }
    return result;
}

/// Builds the simulator and test set named by cfg, then runs the loop.
inline RunResult run_active_loop(const RunConfig& cfg)
{
    cfg.validate();
    const auto st = cfg.resolved_standardization();
    std::optional<TestSet> test;
    Simulator sim;
    if (!cfg.benchmark.empty()) {
        const Benchmark bm = builtin_benchmark(cfg.benchmark, cfg.d, cfg.seed, cfg.p);
        sim = make_builtin_simulator(bm.function, st);
        if (cfg.test_size > 0) {
            const Eigen::MatrixXd test_xi = draw_standard_normal(cfg.test_size, cfg.d, derive_seed(cfg.seed, kTestSet));
            const Eigen::MatrixXd test_raw = detail::to_raw(test_xi, st);
            test = TestSet{test_raw, sim(test_raw)};
        }
    } else {
        sim = make_external_simulator(cfg.sim_command, cfg.sim_timeout);
        if (!cfg.test_file.empty()) test = load_test_file(cfg.test_file, cfg.d);
    }
    return run_active_loop(cfg, sim, test);
}

} // namespace tensoruq::harness
