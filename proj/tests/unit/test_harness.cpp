#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "anq/errors.hpp"
#include "anq/harness.hpp"

using namespace anq;
using namespace anq::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("anq_harness_" + std::to_string(::getpid())) / name;
    fs::create_directories(p);
    return p;
}

ExperimentConfig tiny(ExperimentKind kind) {
    auto c = ExperimentConfig::defaults(kind, env::EnvName::reacher_1d);
    c.variant.base.iterations = 60;
    c.variant.base.hidden = {8, 8};
    c.variant.base.batch_size = 16;
    c.data.size = 400;
    c.eval.every = 60;
    c.eval.episodes = 2;
    c.eval.log_every = 20;
    return c;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(ANQLAB_PATH) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = parse_config(
        "[experiment]\nkind = sweep_lambda\nenv = point_maze_2d\nseeds = 3, 4\n"
        "[train]\nlambda = 2.5\nhidden = 32,32\n[sweep]\nlambdas = 0, 1, 10\n");
    CHECK(c.experiment == ExperimentKind::sweep_lambda);
    CHECK(c.env == env::EnvName::point_maze_2d);
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK(c.variant.base.lambda == 2.5);
    CHECK(c.variant.base.hidden == std::vector<int>{32, 32});
    CHECK(c.lambdas == std::vector<double>{0.0, 1.0, 10.0});
    // untouched fields take the env defaults
    CHECK(c.variant.base.tau == ExperimentConfig::defaults(ExperimentKind::sweep_lambda, env::EnvName::point_maze_2d)
                                    .variant.base.tau);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("[train]\nlamda = 1\n"), InputError);
    CHECK_THROWS_AS(parse_config("[bogus]\nx = 1\n"), InputError);
    CHECK_THROWS_AS(parse_config("[train]\nlambda = abc\n"), InputError);
    CHECK_THROWS_AS(parse_config("[train]\ntau = 1.5\n"), InputError);
    CHECK_THROWS_AS(parse_config("[experiment]\nenv = hopper\n"), InputError);
    try {
        parse_config("[train]\nlambda = 1\n[broken\n");
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.position() == 3);
    }
    CHECK_THROWS_AS(load_config("/nonexistent/missing.cfg"), InputError);
}

TEST_CASE("config hash tracks every field") {
    const auto a = parse_config("[train]\nlambda = 1\n");
    const auto b = parse_config("[train]\nlambda = 1\n");
    const auto c = parse_config("[train]\nlambda = 1.0001\n");
    const auto d = parse_config("[train]\nlambda = 1\n[eval]\nepisodes = 11\n");
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
    CHECK(a.hash() != d.hash());
}

TEST_CASE("limited data: discard 0 is the base run, discard 0.9 keeps 10 percent") {
    const auto cfg = tiny(ExperimentKind::limited_data);
    const auto rep = run_limited_data(cfg, {0.0, 0.9}, {0}, std::nullopt, Exec::serial);
    REQUIRE(rep.cells.size() == 2);
    CHECK(rep.cells[0].dataset_size == cfg.data.size);
    CHECK(rep.cells[1].dataset_size == 40);

    auto train_cfg = cfg;
    train_cfg.experiment = ExperimentKind::train;
    const auto rec = run_train(train_cfg, scratch("base"), Exec::serial);
    REQUIRE(rec.seeds.size() == 1);
    CHECK(rep.rows[0].final_score == rec.seeds[0].final_score);
    CHECK(rep.rows[0].mean_q == rec.seeds[0].final_mean_q);
    CHECK_THROWS_AS(run_limited_data(cfg, {}, {0}, std::nullopt), InputError);
    CHECK_THROWS_AS(run_limited_data(cfg, {1.0}, {0}, std::nullopt), InputError);
}

TEST_CASE("protocol input errors") {
    const auto cfg = tiny(ExperimentKind::noisy_mixture);
    CHECK_THROWS_AS(run_noisy_mixture(cfg, {}, {0}, std::nullopt), InputError);
    CHECK_THROWS_AS(run_noisy_mixture(cfg, {1.2}, {0}, std::nullopt), InputError);
    CHECK_THROWS_AS(run_sweep(cfg, false, {}, {0}, std::nullopt), InputError);
}

TEST_CASE("metrics csv parsing") {
    const auto t = parse_metrics_csv("iteration,v_loss,eval_score\n0,1.5,\n100,0.5,42\n");
    CHECK(t.columns == std::vector<std::string>{"iteration", "v_loss", "eval_score"});
    REQUIRE(t.rows.size() == 2);
    CHECK_FALSE(t.rows[0][2].has_value());
    CHECK(*t.rows[1][2] == 42.0);
    CHECK_THROWS_AS(parse_metrics_csv(""), FormatError);
    try {
        parse_metrics_csv("iteration,v_loss\n0,1\n10,x\n");
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.position() == 3);
    }
    try {
        parse_metrics_csv("iteration,v_loss\n0,1,2\n");
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.position() == 2);
    }
}

TEST_CASE("plot bundles") {
    const auto dir = scratch("plot");
    const auto a = dir / "a.csv", b = dir / "b.csv";
    std::ofstream(a) << "iteration,v_loss,mean_q\n0,1,2\n10,0.5,3\n";
    std::ofstream(b) << "iteration,v_loss,mean_q\n0,3,2\n10,1.5,5\n";

    const auto one = emit_plots({a}, dir / "one");
    CHECK(fs::exists(one.script));
    CHECK(one.curves == std::vector<std::string>{"v_loss", "mean_q"});

    const auto two = emit_plots({a, b}, dir / "two");
    const auto agg = read_metrics_csv(dir / "two" / "data" / "aggregate.csv");
    const auto col = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(agg.columns.begin(), agg.columns.end(), name) - agg.columns.begin());
    };
    REQUIRE(agg.rows.size() == 2);
    CHECK(*agg.rows[1][col("v_loss_mean")] == doctest::Approx(1.0));
    CHECK(*agg.rows[1][col("v_loss_std")] == doctest::Approx(0.5));
    CHECK(*agg.rows[1][col("mean_q_mean")] == doctest::Approx(4.0));

    const auto empty = dir / "empty.csv";
    std::ofstream(empty).flush();
    CHECK_THROWS_AS(emit_plots({empty}, dir / "bad"), FormatError);
}

TEST_CASE("command line exit codes") {
    const auto out = scratch("cli");
    CHECK(run_cli("train --config /nonexistent/missing.cfg --out-dir " + out.string()) == 1);
    CHECK(run_cli("verify-theory --instances 50 --seed 7 --out-dir " + out.string()) == 0);
    const auto csv = out / "m.csv";
    std::ofstream(csv) << "iteration,v_loss\n0,1\n10,0.5\n";
    CHECK(run_cli("plot --metrics " + csv.string() + " --out-dir " + (out / "plot").string()) == 0);
    CHECK(fs::exists(out / "plot" / "plots" / "plot.py"));
    CHECK(run_cli("no-such-command") != 0);
}
