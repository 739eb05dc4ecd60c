// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance                 all criteria
//   acceptance --criterion N   just one

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "anq/constrained_target.hpp"
#include "anq/errors.hpp"
#include "anq/geometry.hpp"
#include "anq/harness.hpp"
#include "anq/learner.hpp"
#include "anq/rng.hpp"
#include "anq/tabular.hpp"
#include "anq/variants.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace anq;
using learn::Matrix;
using learn::RowVector;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Desk-scale training budget shared by the learning criteria.
constexpr std::int64_t kIterations = 3000;
constexpr int kBatch = 128;
constexpr int kEvalEpisodes = 10;
constexpr int kSparseEvalEpisodes = 100;

harness::ExperimentConfig desk_config(harness::ExperimentKind kind, env::EnvName env) {
    auto cfg = harness::ExperimentConfig::defaults(kind, env);
    cfg.variant.base.iterations = kIterations;
    cfg.variant.base.batch_size = kBatch;
    cfg.eval.every = kIterations;
    cfg.eval.episodes = env::make_env(env)->spec().sparse_reward ? kSparseEvalEpisodes : kEvalEpisodes;
    cfg.eval.log_every = 100;
    return cfg;
}

// ------------------------------------------------------------------ 1

Outcome gradients() {
    double worst = 0.0;
    int kinks = 0, bad = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto g = testing::check_gradients(seed);
        worst = std::max(worst, g.worst());
        kinks += g.kinks;
        if (g.worst() > 1e-4) ++bad;
    }
    return {bad == 0, fmt("100 seeds, worst rel err %.3g, failing seeds %d, kink coords %d", worst, bad, kinks)};
}

// ------------------------------------------------------------------ 2

// Root of sum_i |tau - 1(x_i < v)| (x_i - v) = 0 by bisection; the sum is
// strictly decreasing in v.
double expectile_by_bisection(const std::vector<double>& xs, double tau) {
    auto foc = [&](double v) {
        double s = 0.0;
        for (double x : xs) s += (x < v ? 1.0 - tau : tau) * (x - v);
        return s;
    };
    double lo = *std::min_element(xs.begin(), xs.end());
    double hi = *std::max_element(xs.begin(), xs.end());
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (foc(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Outcome expectile() {
    // Targets are the actions of the batch under an identity critic with zero perturbation.
    constexpr int n = 512;
    constexpr double bound = 6.0;
    auto rng = make_rng(2024, 0);
    std::normal_distribution<double> gauss(0.5, 1.0);
    std::vector<double> xs(n);
    for (auto& x : xs) x = std::clamp(gauss(rng), -bound, bound);

    learn::Batch b;
    b.s = Matrix::Zero(1, n);
    b.s_next = Matrix::Zero(1, n);
    b.a = Eigen::Map<const Matrix>(xs.data(), 1, n);
    b.r = RowVector::Zero(n);
    b.done = RowVector::Zero(n);

    double worst = 0.0;
    std::string detail;
    for (double tau : {0.5, 0.7, 0.9, 0.99}) {
        learn::TrainConfig cfg;
        cfg.tau = tau;
        cfg.mu_mode = learn::MuMode::zero;
        cfg.hidden = {16, 16};
        cfg.n_critics = 1;
        auto st = learn::init_learner(cfg, 1, 1, bound);
        st.frozen_critic = std::make_shared<learn::FunctionCritic>([](auto, std::span<const double> a, double* g) {
            if (g) g[0] = 1.0;
            return a[0];
        });
        constexpr std::int64_t steps = 4000;
        st.v_opt = nn::OptimState(st.v.size(), nn::AdamConfig{1e-2, 0.9, 0.999, 1e-8, steps});
        for (std::int64_t i = 0; i < steps; ++i) {
            const auto vl = learn::v_loss(st, b);
            nn::adam_step(st.v, vl.grad, st.v_opt);
        }
        const double v = nn::forward(st.v, nn::Vector::Zero(1))(0);
        const double want = expectile_by_bisection(xs, tau);
        worst = std::max(worst, std::abs(v - want));
        detail += fmt("tau %.2f: V %.5f oracle %.5f; ", tau, v, want);
    }
    return {worst <= 1e-3, detail + fmt("max err %.2e", worst)};
}

// ------------------------------------------------------------------ 3

struct SyntheticInstance {
    int action_dim = 1;
    double bound = 1.0;
    double lambda = 1.0;
    bool adaptive = false;
    // Two states (s = -1, +1); per state a concave bump max_b - ||a - c||^2.
    std::array<std::vector<double>, 2> centers;
    std::array<double, 2> peak{};
    std::array<std::vector<std::vector<double>>, 2> actions;  // 3 per state
};

SyntheticInstance make_instance(std::uint64_t seed) {
    auto rng = make_rng(seed, 77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SyntheticInstance in;
    in.action_dim = seed % 2 == 0 ? 1 : 2;
    in.bound = 1.0;
    in.lambda = 0.3 + 0.7 * u(rng);
    in.adaptive = seed % 4 >= 2;
    for (int k = 0; k < 2; ++k) {
        in.peak[k] = 1.5 + u(rng);
        in.centers[k].resize(in.action_dim);
        for (auto& c : in.centers[k]) c = -0.6 + 1.2 * u(rng);
        for (int j = 0; j < 3; ++j) {
            std::vector<double> a(in.action_dim);
            for (auto& x : a) x = -0.9 + 1.8 * u(rng);
            in.actions[k].push_back(a);
        }
    }
    return in;
}

double bump(const SyntheticInstance& in, int k, std::span<const double> a, double* grad) {
    double q = in.peak[k];
    for (int i = 0; i < in.action_dim; ++i) {
        const double d = a[i] - in.centers[k][i];
        q -= d * d;
        if (grad) grad[i] = -2.0 * d;
    }
    return q;
}

Outcome constrained_target() {
    constexpr int instances = 24;
    constexpr std::int64_t steps = 6000;
    int ok = 0;
    double worst_action = 0.0, worst_value = 0.0;
    for (int i = 0; i < instances; ++i) {
        const auto in = make_instance(static_cast<std::uint64_t>(i));
        learn::TrainConfig cfg;
        cfg.tau = 0.99;
        cfg.lambda = in.lambda;
        cfg.alpha = in.adaptive ? 1.0 : 0.0;
        cfg.radius_mode = in.adaptive ? learn::RadiusMode::adaptive_exp_advantage : learn::RadiusMode::uniform;
        cfg.hidden = {32, 32};
        cfg.n_critics = 1;
        cfg.seed = static_cast<std::uint64_t>(i);
        auto st = learn::init_learner(cfg, 1, in.action_dim, in.bound);
        st.frozen_critic = std::make_shared<learn::FunctionCritic>(
            [in](std::span<const double> s, std::span<const double> a, double* g) { return bump(in, s[0] > 0 ? 1 : 0, a, g); });
        st.v_opt = nn::OptimState(st.v.size(), nn::AdamConfig{3e-3, 0.9, 0.999, 1e-8, steps});
        st.mu_opt = nn::OptimState(st.mu.size(), nn::AdamConfig{3e-3, 0.9, 0.999, 1e-8, steps});
        st.cfg.xi = 0.02;

        learn::Batch b;
        const int n = 6;
        b.s = Matrix(1, n);
        b.a = Matrix(in.action_dim, n);
        for (int k = 0; k < 2; ++k) {
            for (int j = 0; j < 3; ++j) {
                const int col = 3 * k + j;
                b.s(0, col) = k == 0 ? -1.0 : 1.0;
                for (int d = 0; d < in.action_dim; ++d) b.a(d, col) = in.actions[k][j][d];
            }
        }
        b.s_next = b.s;
        b.r = RowVector::Zero(n);
        b.done = RowVector::Ones(n);
        for (std::int64_t t = 0; t < steps; ++t) learn::train_step(st, b);

        // Penalised optimum per dataset action at the final weights gives the
        // radius; the radius-constrained brute force then gives the argmax.
        const RowVector w = learn::penalty_weights(st, b);
        Matrix delta;
        const Matrix moved = learn::perturbed_actions(st, b, false, nullptr, &delta);
        bool pass = true;
        for (int k = 0; k < 2; ++k) {
            auto q = [&](std::span<const double> a) { return bump(in, k, a, nullptr); };
            std::vector<double> radii;
            for (int j = 0; j < 3; ++j) {
                const int col = 3 * k + j;
                const double pen = cfg.lambda * w(col);
                const auto pm = oracle::brute_force_penalized(q, in.actions[k][j], pen, in.bound,
                                                              in.action_dim == 1 ? 4001 : 401);
                radii.push_back(pm.delta_norm);
            }
            const auto ct = oracle::brute_force_constrained_target(q, in.actions[k], radii,
                                                                   in.action_dim == 1 ? 4000 : 1000, in.bound);
            for (int j = 0; j < 3; ++j) {
                const int col = 3 * k + j;
                double d2 = 0.0;
                for (int d = 0; d < in.action_dim; ++d) {
                    const double e = moved(d, col) - ct.per_action[j].argmax[d];
                    d2 += e * e;
                }
                const double err = std::sqrt(d2) / in.bound;
                worst_action = std::max(worst_action, err);
                if (err > 0.02) pass = false;
            }
            const double v = nn::forward(st.v, nn::Vector::Constant(1, k == 0 ? -1.0 : 1.0))(0);
            const double rel = std::abs(v - ct.value) / std::abs(ct.value);
            worst_value = std::max(worst_value, rel);
            if (rel > 0.03) pass = false;
        }
        if (pass) ++ok;
    }
    return {ok == instances, fmt("%d/%d instances, worst action err %.4f bound, worst V rel err %.4f", ok, instances,
                                 worst_action, worst_value)};
}

// ------------------------------------------------------------------ 4

struct LimitRun {
    double score = 0.0;
    double mu_online = 0.0;
    double mu_target = 0.0;
    bool diverged = false;
};

LimitRun train_once(const variants::VariantSpec& spec, const data::Dataset& dataset, env::EnvName env_name,
                    std::uint64_t seed) {
    const auto e = env::make_env(env_name);
    const auto& es = e->spec();
    auto sp = spec;
    sp.base.seed = seed;
    const auto cfg = sp.config(es.action_bound);
    const auto data = learn::TrainingData::from(dataset, cfg.reward_shift);
    auto st = variants::build_learner(sp, es.state_dim, es.action_dim, es.action_bound, data.stats);
    learn::RunOptions ro;
    ro.eval_every = cfg.iterations;
    ro.eval_episodes = es.sparse_reward ? kSparseEvalEpisodes : kEvalEpisodes;
    const auto res = learn::run_training(st, data, *e, ro);
    return {res.final_score, learn::eval_batch_mean_mu_norm(st, data),
            learn::eval_batch_mean_mu_norm(st, data, true), res.diverged};
}

// The Bellman target uses the Polyak-averaged auxiliary net, so that is the
// perturbation held to the limit; the online net keeps Adam-sized jitter
// around zero and is reported alongside.
Outcome sample_constraint_limit() {
    constexpr std::int64_t iterations = 8000;
    const std::vector<std::uint64_t> seeds{0, 1};
    bool pass = true;
    std::string detail;
    for (auto env_name : env::all_envs()) {
        auto cfg = desk_config(harness::ExperimentKind::sweep_lambda, env_name);
        cfg.data.policy = env::BehaviorPolicy::medium;
        cfg.variant.base.iterations = iterations;
        const auto dataset = harness::base_dataset(cfg);
        const double bound = env::make_env(env_name)->spec().action_bound;

        auto big = cfg.variant;
        big.base.lambda = 1e3;
        auto zero = cfg.variant;
        zero.variant = variants::Variant::mu_zero;
        double score_big = 0.0, score_zero = 0.0, mu_on = 0.0, mu_tgt = 0.0;
        bool diverged = false;
        for (auto seed : seeds) {
            const auto a = train_once(big, dataset, env_name, seed);
            const auto z = train_once(zero, dataset, env_name, seed);
            score_big += a.score / seeds.size();
            score_zero += z.score / seeds.size();
            mu_on += a.mu_online / seeds.size();
            mu_tgt += a.mu_target / seeds.size();
            diverged = diverged || a.diverged || z.diverged;
        }
        const bool env_ok = !diverged && mu_tgt <= 1e-3 * bound && std::abs(score_big - score_zero) <= 5.0;
        pass = pass && env_ok;
        detail += fmt("%s: |mu'| %.2e (limit %.2e, online %.2e) score %.1f vs mu_zero %.1f; ",
                      env::to_string(env_name).c_str(), mu_tgt, 1e-3 * bound, mu_on, score_big, score_zero);
    }
    return {pass, detail};
}

// ------------------------------------------------------------------ 5

Outcome coverage() {
    harness::VerifySettings s;
    s.epsilons = {0.1, 0.2};
    s.trials = 200;
    s.delta = 0.1;
    const auto rep = harness::verify_geometry(7, s);
    std::string detail;
    for (const auto& c : rep.report["coverage"]) {
        detail += fmt("eps %.2f: n %lld freq %.3f ci_low %.3f; ", c["epsilon"].get<double>(),
                      c["required_n"].get<long long>(), c["frequency"].get<double>(),
                      c["ci"][0].get<double>());
    }
    return {rep.passed, detail};
}

// ------------------------------------------------------------------ 6, 7

Outcome performance_bound() {
    const auto s = oracle::run_performance_bound_suite(11, 1000, true);
    return {s.instances == 1000 && s.violations == 0,
            fmt("%lld instances, %lld violations, min slack %.3g", static_cast<long long>(s.instances),
                static_cast<long long>(s.violations), s.min_slack)};
}

Outcome distribution_shift() {
    const auto s = oracle::run_distribution_shift_suite(13, 500, {0.05, 0.2}, true);
    return {s.instances >= 500 && s.violations == 0,
            fmt("%lld checks, %lld violations, min slack %.3g", static_cast<long long>(s.instances),
                static_cast<long long>(s.violations), s.min_slack)};
}

// ------------------------------------------------------------------ 8

Outcome noisy_mixture() {
    auto cfg = desk_config(harness::ExperimentKind::noisy_mixture, env::EnvName::reacher_1d);
    const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    const auto rep = harness::run_noisy_mixture(cfg, {0.1, 0.9}, seeds, std::nullopt);
    const auto a1 = *rep.find(0.1, "anq_default"), z1 = *rep.find(0.1, "mu_zero");
    const auto a9 = *rep.find(0.9, "anq_default"), z9 = *rep.find(0.9, "mu_zero");
    const double gap1 = a1.score_mean - z1.score_mean, gap9 = a9.score_mean - z9.score_mean;
    return {gap1 >= 0.0 && gap1 >= gap9,
            fmt("ratio 0.1: anq %.1f+-%.1f mu_zero %.1f+-%.1f gap %.1f; ratio 0.9: anq %.1f mu_zero %.1f gap %.1f",
                a1.score_mean, a1.score_std, z1.score_mean, z1.score_std, gap1, a9.score_mean, z9.score_mean, gap9)};
}

// ------------------------------------------------------------------ 9

Outcome lambda_sweep() {
    auto cfg = desk_config(harness::ExperimentKind::sweep_lambda, env::EnvName::point_maze_2d);
    cfg.data.policy = env::BehaviorPolicy::expert;
    // Mean Q of the lambda=1e3 run settles after about 7000 iterations here.
    cfg.variant.base.iterations = 8000;
    cfg.eval.every = 8000;
    const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    const std::vector<double> lambdas{0.0, 0.1, 1.0, 10.0, 1000.0};
    const auto rep = harness::run_sweep(cfg, false, lambdas, seeds, std::nullopt);
    std::vector<double> q;
    std::string detail;
    for (double l : lambdas) {
        const auto c = *rep.find(l, l == 0.0 ? "lambda_0" : "lambda_" + fmt("%g", l));
        q.push_back(c.q_mean);
        detail += fmt("lambda %g: Q %.2f div %d; ", l, c.q_mean, c.diverged);
    }
    int inversions = 0;
    for (std::size_t i = 2; i < q.size(); ++i) {
        if (q[i] > q[i - 1]) ++inversions;
    }
    const auto zero = *rep.find(0.0, "lambda_0");
    // Overestimation relative to the lambda=1e3 run: Q0 - Q1000 > 9 |Q1000|,
    // which is Q0 > 10 Q1000 whenever Q1000 > 0.
    const bool blowup = zero.diverged >= 1 || q[0] - q.back() > 9.0 * std::abs(q.back());
    return {inversions <= 1 && blowup, detail + fmt("inversions %d", inversions)};
}

// ------------------------------------------------------------------ 10

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> csv_files(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") {
            out[fs::relative(e.path(), root).string()] = slurp(e.path());
        }
    }
    return out;
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / fmt("anq_acceptance_%d", static_cast<int>(::getpid()));
    fs::remove_all(root);
    auto cfg = desk_config(harness::ExperimentKind::train, env::EnvName::reacher_1d);
    cfg.variant.base.iterations = 400;
    cfg.eval.every = 200;
    cfg.eval.episodes = 2;
    cfg.eval.log_every = 50;
    cfg.seeds = {0, 1, 2};
    cfg.data.size = 4000;

    auto sweep = desk_config(harness::ExperimentKind::sweep_lambda, env::EnvName::point_maze_2d);
    sweep.variant.base.iterations = 300;
    sweep.eval.every = 300;
    sweep.eval.episodes = 2;
    sweep.eval.log_every = 50;
    sweep.data.size = 4000;

    for (const char* run : {"a", "b"}) {
        harness::run_train(cfg, root / run / "train");
        harness::run_sweep(sweep, false, {0.0, 1.0}, {0, 1}, root / run / "sweep");
    }
    const auto a = csv_files(root / "a"), b = csv_files(root / "b");
    const bool same = !a.empty() && a == b;
    fs::remove_all(root);
    return {same, fmt("%zu metrics files compared, %s", a.size(), same ? "bit-identical" : "differ")};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "gradient suite", 60, gradients},
        {2, "expectile oracle", 60, expectile},
        {3, "constrained-target oracle", 600, constrained_target},
        {4, "sample-constraint limit", 900, sample_constraint_limit},
        {5, "coverage monte carlo", 600, coverage},
        {6, "performance bound verifier", 120, performance_bound},
        {7, "distribution shift verifier", 300, distribution_shift},
        {8, "noisy-mixture trend", 2400, noisy_mixture},
        {9, "lambda-sweep trend", 2400, lambda_sweep},
        {10, "determinism", 600, determinism},
    };
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    bool ok = true;
    for (const auto& c : all) {
        if (only != 0 && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs <= c.budget_s;
        ok = ok && pass;
        std::printf("[%2d] %-28s %s  (%.1fs / %.0fs)  %s\n", c.id, c.name, pass ? "PASS" : "FAIL", secs, c.budget_s,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return ok ? 0 : 1;
}
