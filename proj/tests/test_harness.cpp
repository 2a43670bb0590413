#include <tensoruq/harness/active_loop.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

using namespace tensoruq;
using namespace tensoruq::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("tensoruq_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args)
{
    const int status = std::system((std::string(TENSORUQ_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig small_config()
{
    RunConfig cfg;
    cfg.d = 3;
    cfg.p = 2;
    cfg.initial_rank = 2;
    cfg.n_init = 20;
    cfg.n_batches = 2;
    cfg.batch_size = 5;
    cfg.benchmark = "quad-exp";
    cfg.test_size = 500;
    cfg.record_wall_time = false;
    cfg.max_sweeps = 50;
    return cfg;
}

std::string message_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Protocol, FormatPoints)
{
    Eigen::MatrixXd pts(2, 2);
    pts << 0.5, -1.25, 3.0, 0.0;
    EXPECT_EQ(format_points(pts), "0.5,-1.25\n3.0,0.0\n");
    for (double v : {0.1, -1e-300, 123456789.123, 1.0 / 3.0, 6.02e23}) {
        double back = 0.0;
        ASSERT_TRUE(tensoruq::harness::detail::parse_double(format_decimal(v), back));
        EXPECT_EQ(back, v);
    }
}

TEST(Protocol, ParseValues)
{
    const auto v = parse_values("1.5\n-2\n3e2\n", 3);
    EXPECT_EQ(v, Eigen::Vector3d(1.5, -2, 300));
    EXPECT_EQ(parse_values(" 4 \r\n5", 2), Eigen::Vector2d(4, 5));

    EXPECT_NE(message_of([] { parse_values("1\n2\n", 3); }).find("line 3"), std::string::npos);
    EXPECT_NE(message_of([] { parse_values("1\nabc\n3\n", 3); }).find("line 2"), std::string::npos);
    EXPECT_NE(message_of([] { parse_values("1\n2\n3\n", 2); }).find("line 3"), std::string::npos);
    EXPECT_THROW(parse_values("1\nnan\n", 2), protocol_error);
}

TEST(Protocol, EchoChildReturnsFirstCoordinate)
{
    Eigen::MatrixXd pts(3, 2);
    pts << 0.5, -1.25, 3.0, 0.0, -7.125, 2.0;
    EXPECT_EQ(external_simulator("cut -d, -f1", pts), pts.col(0));
}

TEST(Protocol, ShortOutputNamesLine)
{
    Eigen::MatrixXd pts = Eigen::MatrixXd::Ones(4, 2);
    const std::string msg = message_of([&] { external_simulator("head -n 2 | cut -d, -f1", pts); });
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_THROW(external_simulator("head -n 2 | cut -d, -f1", pts), protocol_error);
}

TEST(Protocol, ChildFailures)
{
    const Eigen::MatrixXd pts = Eigen::MatrixXd::Ones(2, 1);
    EXPECT_THROW(external_simulator("exit 4", pts), protocol_error);
    EXPECT_THROW(external_simulator("/nonexistent/simulator", pts), protocol_error);
    // Child ignores a large stdin and exits: no SIGPIPE death, just a protocol error.
    EXPECT_THROW(external_simulator("echo 1", Eigen::MatrixXd::Ones(20000, 5)), protocol_error);
}

TEST(Protocol, Timeout)
{
    const auto t0 = std::chrono::steady_clock::now();
    const std::string msg = message_of([] {
        external_simulator("sleep 5", Eigen::MatrixXd::Ones(1, 1), std::chrono::milliseconds(300));
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_NE(msg.find("timed out"), std::string::npos) << msg;
    EXPECT_LT(secs, 3.0);
}

TEST(Benchmarks, Builtins)
{
    EXPECT_DOUBLE_EQ(builtin_benchmark("affine", 4, 1).function(Eigen::VectorXd::Zero(4)), 1.0);
    EXPECT_DOUBLE_EQ(builtin_benchmark("affine", 4, 1).function(Eigen::VectorXd::Ones(4)), 2.0);
    EXPECT_DOUBLE_EQ(builtin_benchmark("quad-exp", 5, 1).function(Eigen::VectorXd::Zero(5)), 1.0);
    const Eigen::Vector2d xi(1.0, 2.0);
    EXPECT_NEAR(builtin_benchmark("quad-exp", 2, 1).function(xi), std::exp(-5.0 / 4.0) + 0.2, 1e-15);
    EXPECT_THROW(builtin_benchmark("rosenbrock", 2, 1), config_error);
    EXPECT_FALSE(builtin_benchmark("affine", 2, 1).truth.has_value());
}

TEST(Benchmarks, PlantedMatchesDenseOracle)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    const auto bm = builtin_benchmark("planted-cp", 4, 17);
    ASSERT_TRUE(bm.truth.has_value());
    EXPECT_EQ(bm.truth->rank(), kPlantedRank);
    const auto full = to_full(*bm.truth);
    for (int i = 0; i < 30; ++i) {
        std::vector<double> xi(4);
        for (auto& v : xi) v = normal(rng);
        const double dense = oracle::dense_gpc(full, xi, oracle::hermite_normalized);
        EXPECT_NEAR(bm.function(Eigen::Map<Eigen::VectorXd>(xi.data(), 4)), dense, 1e-12 * std::max(1.0, std::abs(dense)));
    }
    // Same seed, same tensor.
    EXPECT_EQ(builtin_benchmark("planted-cp", 4, 17).truth->factor(2), bm.truth->factor(2));
}

TEST(ModelIO, RoundTripIsBitExact)
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    const fs::path dir = scratch_dir("model");
    for (Family fam : {Family::hermite, Family::legendre}) {
        const SurrogateModel m(oracle::random_cp(4, 3, 3, rng), BasisFamily(fam, 2),
                               {{1.0 / 3.0, 0.1}, {-2.5, 7.0}, {0.0, 1.0}, {1e-7, 3e5}});
        persist_model(m, dir / "m.json");
        const auto back = load_model(dir / "m.json");
        EXPECT_EQ(back.basis().kind(), fam);
        for (int k = 0; k < 4; ++k) EXPECT_EQ(back.coeffs().factor(k), m.coeffs().factor(k));
        for (int i = 0; i < 100; ++i) {
            Eigen::Vector4d x(normal(rng), normal(rng), normal(rng), normal(rng));
            EXPECT_EQ(predict(back, x), predict(m, x));
        }
    }
    fs::remove_all(dir);
}

TEST(ModelIO, RejectsBrokenFiles)
{
    const fs::path dir = scratch_dir("broken");
    std::mt19937_64 rng(6);
    const SurrogateModel m(oracle::random_cp(2, 3, 2, rng), BasisFamily(Family::hermite, 2));
    persist_model(m, dir / "m.json");
    const std::string text = slurp(dir / "m.json");

    std::ofstream(dir / "truncated.json") << text.substr(0, text.size() / 2);
    EXPECT_THROW(load_model(dir / "truncated.json"), load_error);

    auto j = model_to_json(m);
    j.erase("schema_version");
    std::ofstream(dir / "noversion.json") << j.dump();
    EXPECT_THROW(load_model(dir / "noversion.json"), load_error);

    j = model_to_json(m);
    j["schema_version"] = 99;
    std::ofstream(dir / "future.json") << j.dump();
    EXPECT_NE(message_of([&] { load_model(dir / "future.json"); }).find("99"), std::string::npos);

    j = model_to_json(m);
    j["factors"][1].erase(0);
    EXPECT_THROW(model_from_json(j), load_error);
    j = model_to_json(m);
    j["standardization"][0][1] = -1.0;
    EXPECT_THROW(model_from_json(j), load_error);
    EXPECT_THROW(load_model(dir / "missing.json"), load_error);
    fs::remove_all(dir);
}

TEST(History, CsvShapeAndRoundTrip)
{
    const fs::path dir = scratch_dir("history");
    RunHistory one{{0, 60, 0.012345678901234567, 0.1 / 3.0, 4, 12.5, 31.0}};
    emit_history(one, dir / "h.csv");
    EXPECT_EQ(slurp(dir / "h.csv"),
              std::string(kHistoryHeader) + "\n0,60,0.012345678901234567,0.033333333333333333,4,12.5,31\n");
    EXPECT_EQ(parse_history(dir / "h.csv"), one);

    RunHistory many;
    for (int r = 0; r < 7; ++r) many.push_back({r, 60 + 10 * r, 1.0 / (r + 3), std::exp(-r), 4 - r / 3, r * 1.1, 0.0});
    emit_history(many, dir / "h.csv");
    EXPECT_EQ(parse_history(dir / "h.csv"), many);
    EXPECT_THROW(emit_history({}, dir / "e.csv"), std::invalid_argument);
    EXPECT_THROW(emit_history(one, dir / "no" / "such" / "dir.csv"), std::runtime_error);
    fs::remove_all(dir);
}

TEST(ActiveLoop, SeedsAreIndependentStreams)
{
    std::set<std::uint64_t> seen;
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL})
        for (std::uint64_t stream = 1; stream <= kMoments; ++stream)
            for (std::uint64_t i = 0; i < 10; ++i) seen.insert(derive_seed(seed, stream, i));
    EXPECT_EQ(seen.size(), 3u * kMoments * 10u);
    EXPECT_EQ(derive_seed(7, kPool, 3), derive_seed(7, kPool, 3));
}

TEST(ActiveLoop, ConfigValidation)
{
    auto cfg = small_config();
    EXPECT_NO_THROW(cfg.validate());
    cfg.q = 1.5;
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = small_config();
    cfg.sim_command = "cat";
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = small_config();
    cfg.benchmark.clear();
    EXPECT_THROW(cfg.validate(), config_error);
    cfg = small_config();
    cfg.batch_size = 0;
    EXPECT_THROW(run_active_loop(cfg), config_error);
    cfg = small_config();
    cfg.standardization = {{0.0, 1.0}};
    EXPECT_THROW(cfg.validate(), config_error);
    EXPECT_THROW(mode_from_string("greedy"), config_error);
    EXPECT_EQ(mode_from_string(to_string(Mode::exploit)), Mode::exploit);
}

TEST(ActiveLoop, BaselineRunIsSingleFit)
{
    auto cfg = small_config();
    cfg.n_batches = 0;
    const auto r = run_active_loop(cfg);
    ASSERT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.history[0].samples, 20);
    EXPECT_EQ(r.values.size(), 20);
    EXPECT_TRUE(std::isfinite(r.history[0].test_err));
    EXPECT_EQ(r.history[0].rank, r.model.coeffs().rank());
}

TEST(ActiveLoop, SampleBookkeeping)
{
    auto cfg = small_config();
    cfg.n_init = 60;
    cfg.n_batches = 6;
    cfg.batch_size = 10;
    for (Mode mode : {Mode::explore, Mode::exploit, Mode::random}) {
        cfg.mode = mode;
        const auto r = run_active_loop(cfg);
        ASSERT_EQ(r.history.size(), 7u);
        for (int i = 0; i < 7; ++i) {
            EXPECT_EQ(r.history[static_cast<std::size_t>(i)].round, i);
            EXPECT_EQ(r.history[static_cast<std::size_t>(i)].samples, 60 + 10 * i);
        }
        EXPECT_EQ(r.raw_points.rows(), 120);
        EXPECT_TRUE(Design(r.raw_points).size() == 120);   // no duplicated sample
    }
}

TEST(ActiveLoop, HistoryIsByteIdenticalAcrossRuns)
{
    const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
    auto cfg = small_config();
    cfg.mode = Mode::exploit;
    cfg.out_dir = a.string();
    run_active_loop(cfg);
    cfg.out_dir = b.string();
    run_active_loop(cfg);
    EXPECT_EQ(slurp(a / "history.csv"), slurp(b / "history.csv"));
    EXPECT_EQ(slurp(a / "model.json"), slurp(b / "model.json"));
    EXPECT_TRUE(fs::exists(a / "summary.json"));
    const auto m = load_model(a / "model.json");
    EXPECT_EQ(parse_history(a / "history.csv").size(), 3u);
    EXPECT_EQ(m.dims(), 3);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(ActiveLoop, SeedChangesTheRun)
{
    auto cfg = small_config();
    const auto r1 = run_active_loop(cfg);
    cfg.seed = 1;
    const auto r2 = run_active_loop(cfg);
    EXPECT_NE(r1.raw_points, r2.raw_points);
}

TEST(ActiveLoop, SimulatorFailureFlushesPartialHistory)
{
    const fs::path dir = scratch_dir("fail");
    auto cfg = small_config();
    cfg.out_dir = dir.string();
    int calls = 0;
    const auto bm = builtin_benchmark("affine", cfg.d, 0);
    const Simulator sim = [&](const Eigen::MatrixXd& raw) {
        if (++calls == 2) throw protocol_error("simulator protocol error at line 1: boom");
        Eigen::VectorXd y(raw.rows());
        for (Eigen::Index i = 0; i < raw.rows(); ++i) y[i] = bm.function(raw.row(i).transpose());
        return y;
    };
    EXPECT_THROW(run_active_loop(cfg, sim, std::nullopt), protocol_error);
    const auto h = parse_history(dir / "history.csv");
    ASSERT_EQ(h.size(), 1u);
    EXPECT_EQ(h[0].samples, 20);
    EXPECT_TRUE(std::isnan(h[0].test_err));
    EXPECT_FALSE(fs::exists(dir / "model.json"));
    fs::remove_all(dir);
}

TEST(ActiveLoop, ExternalSimulatorWithTestFile)
{
    const fs::path dir = scratch_dir("external");
    {
        std::ofstream t(dir / "test.csv");
        t << "0.5,1.0,0.5\n-1.0,2.0,-1.0\n3.0,0.0,3.0\n";
    }
    auto cfg = small_config();
    cfg.d = 2;
    cfg.n_batches = 1;
    cfg.benchmark.clear();
    cfg.sim_command = "cut -d, -f1";
    cfg.test_file = (dir / "test.csv").string();
    cfg.standardization = {{1.0, 2.0}, {-3.0, 0.5}};
    const auto r = run_active_loop(cfg);
    // y = x_1 is affine, so the fit is exact in raw coordinates.
    EXPECT_LT(r.history.back().test_err, 1e-8);
    EXPECT_LT(r.history.back().train_err, 1e-8);
    EXPECT_NEAR(moments(r.model).mean, 1.0, 1e-8);
    EXPECT_NEAR(moments(r.model).stddev(), 2.0, 1e-8);
    EXPECT_THROW(load_test_file((dir / "test.csv").string(), 3), config_error);
    fs::remove_all(dir);
}

TEST(ActiveLoop, PlantedBenchmarkRecoversRank)
{
    RunConfig cfg;
    cfg.d = 6;
    cfg.p = 2;
    cfg.initial_rank = 5;
    cfg.q = 0.5;
    cfg.n_init = 300;
    cfg.benchmark = "planted-cp";
    cfg.test_size = 2000;
    cfg.seed = 3;
    const auto r = run_active_loop(cfg);
    EXPECT_EQ(r.history.back().rank, 2);
    EXPECT_LT(r.history.back().test_err, 1e-2);
}

TEST(Cli, ExitCodesAndOutputs)
{
    const fs::path dir = scratch_dir("cli");
    EXPECT_EQ(run_cli("count --dim 57 --order 2 --rank 5"), 0);
    EXPECT_EQ(run_cli("count"), 2);
    EXPECT_EQ(run_cli("run --dim 2"), 2);                                          // no simulator
    EXPECT_EQ(run_cli("run --dim 2 --benchmark nope --test-size 0"), 2);
    EXPECT_EQ(run_cli("run --dim 2 --benchmark affine --mode sideways"), 2);
    EXPECT_EQ(run_cli("run --dim 2 --init-samples 5 --sim-cmd 'exit 1'"), 3);
    EXPECT_EQ(run_cli("run --dim 2 --init-samples 5 --sim-cmd 'echo 1'"), 3);
    EXPECT_EQ(run_cli("run --dim 2 --init-samples 12 --batches 1 --batch-size 3 --benchmark affine --test-size 100 "
                      "--no-timing --out " + (dir / "run").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "run" / "history.csv"));
    const std::string model = (dir / "run" / "model.json").string();
    EXPECT_EQ(run_cli("info --model " + model), 0);

    std::ofstream(dir / "pts.csv") << "0,0\n1,-1\n";
    const std::string out = (dir / "pred.txt").string();
    EXPECT_EQ(std::system((std::string(TENSORUQ_CLI) + " predict --gradient --model " + model + " --points " +
                           (dir / "pts.csv").string() + " > " + out).c_str()),
              0);
    std::ifstream in(out);
    std::string line;
    std::getline(in, line);
    double v = 0.0;
    ASSERT_TRUE(tensoruq::harness::detail::parse_double(line.substr(0, line.find(',')), v));
    EXPECT_NEAR(v, 1.0, 0.05);   // affine benchmark at the origin, penalized fit on 15 samples

    std::ofstream(dir / "bad.csv") << "0,zero\n";
    EXPECT_EQ(run_cli("predict --model " + model + " --points " + (dir / "bad.csv").string()), 2);
    std::ofstream(dir / "broken.json") << "{";
    EXPECT_EQ(run_cli("info --model " + (dir / "broken.json").string()), 1);
    fs::remove_all(dir);
}
