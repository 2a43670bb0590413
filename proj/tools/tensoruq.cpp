// tensoruq: command-line harness for rank-adaptive tensor-regression UQ.
//
//   tensoruq run     active-learning loop on a builtin benchmark or external simulator
//   tensoruq predict evaluate a saved model on raw points (CSV on stdin or --points)
//   tensoruq info    moments, rank and parameter count of a saved model
//   tensoruq count   basis sizes for a dimension/order pair
//
// Exit codes: 0 success, 2 configuration error, 3 simulator/protocol error, 1 other failures.

#include <tensoruq/harness/active_loop.hpp>

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace th = tensoruq::harness;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSimulator = 3;

Eigen::MatrixXd read_points(std::istream& in, int d)
{
    std::vector<double> flat;
    std::string line;
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        if (th::detail::trim(line).empty()) continue;
        std::stringstream ss(line);
        int fields = 0;
        for (std::string cell; std::getline(ss, cell, ',');) {
            double v = 0.0;
            if (!th::detail::parse_double(cell, v))
                throw tensoruq::config_error("malformed number on point line " + std::to_string(rows + 1));
            flat.push_back(v);
            ++fields;
        }
        if (fields != d) throw tensoruq::config_error("point line " + std::to_string(rows + 1) + " needs " + std::to_string(d) + " fields");
        ++rows;
    }
    Eigen::MatrixXd pts(rows, d);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (int k = 0; k < d; ++k) pts(i, k) = flat[static_cast<std::size_t>(i * d + k)];
    return pts;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Rank-adaptive tensor regression for high-dimensional uncertainty quantification"};
    app.require_subcommand(1);

    // run
    th::RunConfig cfg;
    std::string mode = "explore";
    double lambda = -1.0;
    long long pool = 0;
    double timeout_s = 600.0;
    bool no_timing = false;
    std::vector<double> means, stds;
    auto* run = app.add_subcommand("run", "Run the active-learning loop");
    run->set_config("--config", "", "Flat key=value config file; command-line flags take precedence");
    run->add_option("--dim", cfg.d, "Number of random parameters d")->required();
    run->add_option("--order", cfg.p, "Polynomial order p per dimension")->capture_default_str();
    run->add_option("--rank-init", cfg.initial_rank, "Initial CP rank R")->capture_default_str();
    run->add_option("--q", cfg.q, "Exponent of the group lq/l2 penalty, in (0, 1]")->capture_default_str();
    run->add_option("--lambda", lambda, "Penalty weight (default 1e-3 * N)");
    run->add_flag("--no-rank-penalty", cfg.no_rank_penalty, "Fixed-rank baseline: lambda = 0");
    run->add_option("--init-samples", cfg.n_init, "Latin-hypercube samples before the first fit")->capture_default_str();
    run->add_option("--batches", cfg.n_batches, "Adaptive rounds")->capture_default_str();
    run->add_option("--batch-size", cfg.batch_size, "Samples per round (K)")->capture_default_str();
    run->add_option("--pool-size", pool, "Monte-Carlo candidates per round (default 100 x design size)");
    run->add_option("--mode", mode, "explore | exploit | random")->capture_default_str();
    run->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    auto* bench = run->add_option("--benchmark", cfg.benchmark, "Builtin simulator: planted-cp | quad-exp | affine");
    auto* cmd = run->add_option("--sim-cmd", cfg.sim_command, "External simulator command (line protocol on stdin/stdout)");
    bench->excludes(cmd);
    run->add_option("--sim-timeout", timeout_s, "Seconds allowed per simulator batch")->capture_default_str();
    run->add_option("--test-size", cfg.test_size, "Monte-Carlo test points for builtin benchmarks")->capture_default_str();
    run->add_option("--test-file", cfg.test_file, "Test set for external simulators: rows x_1,...,x_d,y");
    run->add_option("--means", means, "Per-dimension means (comma separated)")->delimiter(',');
    run->add_option("--stds", stds, "Per-dimension standard deviations (comma separated)")->delimiter(',');
    run->add_option("--max-sweeps", cfg.max_sweeps, "Solver sweep limit")->capture_default_str();
    run->add_flag("--no-timing", no_timing, "Write 0 in the wall_ms column (byte-reproducible histories)");
    run->add_option("--out", cfg.out_dir, "Output directory for history.csv, model.json, summary.json");

    // predict
    std::string model_path, points_path;
    auto* pred = app.add_subcommand("predict", "Evaluate a saved model");
    pred->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
    pred->add_option("--points", points_path, "CSV of raw points (default: stdin)");
    bool with_grad = false;
    pred->add_flag("--gradient", with_grad, "Also print the gradient");

    // info
    auto* info = app.add_subcommand("info", "Summarize a saved model");
    info->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);

    // count
    int cd = 1, cp = 2;
    auto* count = app.add_subcommand("count", "Basis sizes of the full and total-degree index sets");
    count->add_option("--dim", cd, "Dimension d")->required();
    count->add_option("--order", cp, "Order p")->capture_default_str();
    int count_rank = 0;
    count->add_option("--rank", count_rank, "Also report d (p+1) R for this CP rank");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) {
            cfg.mode = th::mode_from_string(mode);
            if (lambda >= 0.0) cfg.lambda = lambda;
            if (pool > 0) cfg.pool_size = pool;
            cfg.sim_timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
            cfg.record_wall_time = !no_timing;
            if (!means.empty() || !stds.empty()) {
                if (means.size() != stds.size() || static_cast<int>(means.size()) != cfg.d)
                    throw tensoruq::config_error("--means and --stds need d entries each");
                for (std::size_t k = 0; k < means.size(); ++k) cfg.standardization.push_back({means[k], stds[k]});
            }
            const auto result = th::run_active_loop(cfg);
            std::cout << th::history_csv(result.history);
            const auto m = tensoruq::moments(result.model);
            std::cout << "# estimated_rank=" << result.last_fit.estimated_rank
                      << " parameters=" << tensoruq::parameter_count(result.model.coeffs())
                      << " mean=" << th::format_decimal(m.mean) << " stddev=" << th::format_decimal(m.stddev()) << '\n';
        } else if (*pred) {
            const auto m = th::load_model(model_path);
            Eigen::MatrixXd pts;
            if (points_path.empty()) {
                pts = read_points(std::cin, m.dims());
            } else {
                std::ifstream in(points_path);
                if (!in) throw tensoruq::config_error("cannot open " + points_path);
                pts = read_points(in, m.dims());
            }
            for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                const Eigen::VectorXd x = pts.row(i).transpose();
                std::cout << th::format_decimal(tensoruq::predict(m, x));
                if (with_grad)
                    for (double g : tensoruq::gradient(m, x)) std::cout << ',' << th::format_decimal(g);
                std::cout << '\n';
            }
        } else if (*info) {
            const auto m = th::load_model(model_path);
            const auto mom = tensoruq::moments(m);
            nlohmann::json j = {{"d", m.dims()},
                                {"p", m.basis().max_degree()},
                                {"rank", m.coeffs().rank()},
                                {"family", std::string(tensoruq::to_string(m.basis().kind()))},
                                {"parameter_count", tensoruq::parameter_count(m.coeffs())},
                                {"mean", mom.mean},
                                {"variance", mom.variance},
                                {"stddev", mom.stddev()}};
            std::cout << j.dump(2) << '\n';
        } else if (*count) {
            const auto c = tensoruq::count_basis(cd, cp);
            nlohmann::json j = {{"d", cd},
                                {"p", cp},
                                {"full_count", c.full_count},
                                {"full_saturated", c.full_saturated},
                                {"log10_full_count", c.log10_full_count},
                                {"total_degree_count", c.total_degree_count}};
            if (count_rank > 0) j["cp_parameter_count"] = static_cast<long long>(cd) * (cp + 1) * count_rank;
            std::cout << j.dump(2) << '\n';
        }
    } catch (const tensoruq::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const tensoruq::protocol_error& e) {
        std::cerr << "simulator error: " << e.what() << '\n';
        return kExitSimulator;
    } catch (const tensoruq::load_error& e) {
        std::cerr << "load error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
