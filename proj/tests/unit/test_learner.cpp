#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include <unistd.h>

#include "anq/constrained_target.hpp"
#include "anq/errors.hpp"
#include "anq/learner.hpp"
#include "support.hpp"

using namespace anq;
using namespace anq::learn;
namespace fs = std::filesystem;

namespace {

/// Net whose output is the constant c for every input.
void make_constant(nn::NetParams& net, double c) {
    net.flat().setZero();
    net.bias(net.spec().num_layers() - 1).setConstant(c);
}

Batch one_sample(double s, double a, double r, double done) {
    Batch b;
    b.s = Matrix::Constant(1, 1, s);
    b.s_next = Matrix::Constant(1, 1, s);
    b.a = Matrix::Constant(1, 1, a);
    b.r = RowVector::Constant(1, r);
    b.done = RowVector::Constant(1, done);
    return b;
}

std::shared_ptr<const ActionValue> quadratic_critic(double center) {
    return std::make_shared<FunctionCritic>([center](auto, std::span<const double> a, double* g) {
        if (g) g[0] = -2.0 * (a[0] - center);
        return -(a[0] - center) * (a[0] - center);
    });
}

/// Frozen Q = -(a - 0.3)^2 at the dataset action 0; returns V after training.
double frozen_quadratic_v(double lambda, MuMode mode, std::int64_t steps = 3000) {
    TrainConfig cfg;
    cfg.lambda = lambda;
    cfg.tau = 0.9;
    cfg.radius_mode = RadiusMode::uniform;
    cfg.mu_mode = mode;
    cfg.n_critics = 1;
    cfg.hidden = {16, 16};
    cfg.xi = 0.02;
    auto st = init_learner(cfg, 1, 1, 1.0);
    st.frozen_critic = quadratic_critic(0.3);
    st.v_opt = nn::OptimState(st.v.size(), nn::AdamConfig{3e-3, 0.9, 0.999, 1e-8, steps});
    if (st.has_mu()) st.mu_opt = nn::OptimState(st.mu.size(), nn::AdamConfig{3e-3, 0.9, 0.999, 1e-8, steps});
    const auto b = one_sample(0.0, 0.0, 0.0, 1.0);
    for (std::int64_t i = 0; i < steps; ++i) train_step(st, b);
    return nn::forward(st.v, Vector::Zero(1))(0);
}

}  // namespace

TEST_CASE("expectile loss examples") {
    CHECK(expectile_loss(2.0, 0.7) == doctest::Approx(2.8));
    CHECK(expectile_loss(-1.0, 0.7) == doctest::Approx(0.3));
    CHECK(expectile_grad(2.0, 0.7) == doctest::Approx(2.8));
    CHECK(expectile_grad(-1.0, 0.7) == doctest::Approx(-0.6));
    for (double x : {-3.0, -0.1, 0.0, 0.4, 7.0}) CHECK(expectile_loss(x, 0.5) == doctest::Approx(0.5 * x * x));
}

TEST_CASE("expectile loss mirror identity") {
    auto rng = make_rng(5, 0);
    std::uniform_real_distribution<double> u(-5.0, 5.0), t(0.01, 0.99);
    for (int i = 0; i < 1000; ++i) {
        const double x = u(rng), tau = t(rng);
        CHECK(expectile_loss(x, tau) == doctest::Approx(expectile_loss(-x, 1.0 - tau)).epsilon(1e-12));
    }
}

TEST_CASE("penalty and policy weights") {
    const std::array<double, 2> clip{0.01, 30.0};
    CHECK(adaptive_radius_weight(5.0, -2.0, 0.0, clip) == 1.0);
    CHECK(adaptive_radius_weight(1.5, 1.5, 3.0, clip) == 1.0);
    CHECK(adaptive_radius_weight(std::log(4.0), 0.0, 1.0, clip) == doctest::Approx(4.0));
    CHECK(adaptive_radius_weight(1e6, 0.0, 1.0, clip) == 30.0);
    CHECK(adaptive_radius_weight(-1e6, 0.0, 1.0, clip) == 0.01);
    CHECK(policy_weight(0.0, 10.0, {0.0, 3.0}) == 1.0);
    CHECK(policy_weight(1e9, 10.0, {0.0, 100.0}) == 100.0);
    double prev = 0.0;
    for (double adv = -3.0; adv <= 3.0; adv += 0.25) {
        const double w = adaptive_radius_weight(adv, 0.0, 1.0, {1e-9, 1e9});
        CHECK(w > prev);
        prev = w;
    }
}

TEST_CASE("custom multiplier exp(-alpha A) reproduces the adaptive weights bit for bit") {
    auto p = testing::random_problem(3);
    p.state.cfg.radius_mode = RadiusMode::adaptive_exp_advantage;
    p.state.cfg.alpha = 0.8;
    const RowVector adaptive = penalty_weights(p.state, p.batch);
    p.state.cfg.radius_mode = RadiusMode::custom;
    p.state.cfg.custom_f = [](auto, auto, double adv) { return std::exp(-(0.8 * adv)); };
    const RowVector custom = penalty_weights(p.state, p.batch);
    for (Eigen::Index j = 0; j < adaptive.size(); ++j) CHECK(adaptive(j) == custom(j));
    p.state.cfg.radius_mode = RadiusMode::uniform;
    CHECK(penalty_weights(p.state, p.batch) == RowVector::Ones(adaptive.size()));
}

TEST_CASE("q loss arithmetic") {
    TrainConfig cfg;
    cfg.n_critics = 1;
    cfg.hidden = {4};
    cfg.gamma = 0.99;
    auto st = init_learner(cfg, 1, 1, 1.0);
    make_constant(st.q[0], 5.0);
    make_constant(st.v, 10.0);
    CHECK(q_loss(st, one_sample(0.2, 0.1, 1.0, 0.0)).loss == doctest::Approx(34.81));
    CHECK(q_loss(st, one_sample(0.2, 0.1, 1.0, 1.0)).loss == doctest::Approx(16.0));
    make_constant(st.v, 0.0);
    CHECK(q_loss(st, one_sample(0.2, 0.1, 1.0, 0.0)).loss == doctest::Approx(16.0));

    // each critic regressed to the shared target, losses summed
    cfg.n_critics = 3;
    auto ens = init_learner(cfg, 1, 1, 1.0);
    make_constant(ens.v, 10.0);
    for (auto& q : ens.q) make_constant(q, 5.0);
    CHECK(q_loss(ens, one_sample(0.2, 0.1, 1.0, 0.0)).loss == doctest::Approx(3 * 34.81));
}

TEST_CASE("v loss is zero with zero residual") {
    TrainConfig cfg;
    cfg.n_critics = 1;
    cfg.mu_mode = MuMode::zero;
    auto st = init_learner(cfg, 1, 1, 1.0);
    st.frozen_critic = std::make_shared<FunctionCritic>([](auto, auto, double* g) {
        if (g) g[0] = 0.0;
        return 0.25;
    });
    make_constant(st.v, 0.25);
    const auto vl = v_loss(st, one_sample(0.3, -0.2, 0.0, 0.0));
    CHECK(vl.loss == 0.0);
    CHECK(vl.grad.isZero());
}

TEST_CASE("v regression converges to the upper expectile of {0, 1}") {
    TrainConfig cfg;
    cfg.n_critics = 1;
    cfg.mu_mode = MuMode::zero;
    cfg.hidden = {8};
    Batch b;
    b.s = Matrix::Zero(1, 2);
    b.s_next = b.s;
    b.a = Matrix(1, 2);
    b.a << 0.0, 1.0;
    b.r = RowVector::Zero(2);
    b.done = RowVector::Ones(2);
    // tau (1 - v) = (1 - tau) v at tau = 0.99 gives v = 0.99; tau = 0.5 gives the mean
    for (auto [tau, want] : {std::pair{0.99, 0.99}, std::pair{0.5, 0.5}}) {
        cfg.tau = tau;
        auto st = init_learner(cfg, 1, 1, 1.0);
        st.frozen_critic = std::make_shared<FunctionCritic>([](auto, std::span<const double> a, double* g) {
            if (g) g[0] = 1.0;
            return a[0];
        });
        st.v_opt = nn::OptimState(st.v.size(), nn::AdamConfig{1e-2, 0.9, 0.999, 1e-8, 3000});
        for (int i = 0; i < 3000; ++i) nn::adam_step(st.v, v_loss(st, b).grad, st.v_opt);
        CHECK(nn::forward(st.v, Vector::Zero(1))(0) == doctest::Approx(want).epsilon(1e-3));
    }
}

TEST_CASE("mu loss with lambda 0 is the negated mean Q at the moved action") {
    auto p = testing::random_problem(11);
    p.state.cfg.lambda = 0.0;
    const Matrix moved = perturbed_actions(p.state, p.batch, false, nullptr);
    const RowVector q = online_critic(p.state)->evaluate(p.batch.s, moved, nullptr);
    CHECK(mu_loss(p.state, p.batch).loss == doctest::Approx(-q.mean()).epsilon(1e-12));
}

TEST_CASE("linear Q below the penalty keeps mu at zero") {
    TrainConfig cfg;
    cfg.n_critics = 1;
    cfg.lambda = 1.0;
    cfg.radius_mode = RadiusMode::uniform;
    cfg.hidden = {16};
    auto st = init_learner(cfg, 1, 1, 1.0);
    st.frozen_critic = std::make_shared<FunctionCritic>([](auto, std::span<const double> a, double* g) {
        if (g) g[0] = 0.5;
        return 0.5 * a[0];
    });
    st.mu_opt = nn::OptimState(st.mu.size(), nn::AdamConfig{3e-3, 0.9, 0.999, 1e-8, 2000});
    const auto b = one_sample(0.0, 0.0, 0.0, 0.0);
    for (int i = 0; i < 2000; ++i) nn::adam_step(st.mu, mu_loss(st, b).grad, st.mu_opt);
    CHECK(mu_loss(st, b).mean_mu_norm < 0.01);
}

TEST_CASE("mu on a quadratic Q reaches the penalized grid maximizer") {
    for (double lambda : {0.0, 0.2, 0.4}) {
        TrainConfig cfg;
        cfg.n_critics = 1;
        cfg.lambda = lambda;
        cfg.radius_mode = RadiusMode::uniform;
        cfg.hidden = {16};
        auto st = init_learner(cfg, 1, 1, 1.0);
        st.frozen_critic = quadratic_critic(0.3);
        st.mu_opt = nn::OptimState(st.mu.size(), nn::AdamConfig{3e-3, 0.9, 0.999, 1e-8, 3000});
        const auto b = one_sample(0.0, 0.0, 0.0, 0.0);
        for (int i = 0; i < 3000; ++i) nn::adam_step(st.mu, mu_loss(st, b).grad, st.mu_opt);
        const double a0 = 0.0;
        const auto pm = oracle::brute_force_penalized(
            [](std::span<const double> a) { return -(a[0] - 0.3) * (a[0] - 0.3); }, std::span<const double>(&a0, 1),
            lambda, 1.0, 10000);
        Matrix delta;
        perturbed_actions(st, b, false, nullptr, &delta);
        CHECK(std::abs(delta(0, 0) - pm.argmax[0]) <= 0.02);
    }
}

TEST_CASE("pi loss weights and single-sample regression") {
    TrainConfig cfg;
    cfg.n_critics = 1;
    cfg.mu_mode = MuMode::zero;
    cfg.hidden = {16};
    auto st = init_learner(cfg, 1, 1, 1.0);
    st.frozen_critic = std::make_shared<FunctionCritic>([](auto, auto, double* g) {
        if (g) g[0] = 0.0;
        return 0.0;
    });
    make_constant(st.v, 0.0);
    const auto b = one_sample(0.5, 0.35, 0.0, 0.0);
    CHECK(pi_loss(st, b).weights(0) == 1.0);
    st.pi_opt = nn::OptimState(st.pi.size(), nn::AdamConfig{3e-3, 0.9, 0.999, 1e-8, 3000});
    for (int i = 0; i < 3000; ++i) nn::adam_step(st.pi, pi_loss(st, b).grad, st.pi_opt);
    CHECK(nn::forward(st.pi, Vector::Constant(1, 0.5))(0) == doctest::Approx(0.35).epsilon(1e-3));
}

TEST_CASE("gradients match finite differences in the zero and noise modes") {
    for (auto mode : {MuMode::zero, MuMode::gaussian_noise}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto p = testing::random_problem(seed, mode);
            auto& st = p.state;
            const auto& b = p.batch;
            const auto v_fd = testing::fd_gradient([&] { return v_loss(st, b).loss; }, st.v.flat());
            CHECK(testing::rel_error(v_loss(st, b).grad, v_fd) <= 1e-4);
            const auto pi_fd = testing::fd_gradient([&] { return pi_loss(st, b).loss; }, st.pi.flat());
            CHECK(testing::rel_error(pi_loss(st, b).grad, pi_fd) <= 1e-4);
        }
    }
}

TEST_CASE("train step schedule, frozen targets and determinism") {
    const auto d = data::generate_dataset(env::EnvName::reacher_1d, env::BehaviorPolicy::medium, 500, 3);
    const auto td = TrainingData::from(d, 0.0);
    TrainConfig cfg;
    cfg.hidden = {8, 8};
    cfg.batch_size = 16;
    cfg.xi = 0.0;
    auto a = init_learner(cfg, d.state_dim, d.action_dim, 1.0, td.stats);
    auto b = init_learner(cfg, d.state_dim, d.action_dim, 1.0, td.stats);
    const auto q_target0 = a.q_target;
    const auto mu_target0 = a.mu_target;
    for (int i = 0; i < 12; ++i) {
        const auto ma = train_step(a, td);
        const auto mb = train_step(b, td);
        CHECK(ma.iteration == i);
        CHECK(ma.pi_updated == (i % 2 == 0));
        CHECK(ma.pi_updated == !std::isnan(ma.pi_loss));
        CHECK(ma.v_loss == mb.v_loss);
        CHECK(ma.q_loss == mb.q_loss);
        CHECK(ma.mu_loss == mb.mu_loss);
        CHECK(ma.mean_mu_norm == mb.mean_mu_norm);
    }
    CHECK(a.iteration == 12);
    for (std::size_t k = 0; k < a.q.size(); ++k) CHECK(a.q_target[k].flat() == q_target0[k].flat());
    CHECK(a.mu_target.flat() == mu_target0.flat());
    CHECK(a.pi.flat() == b.pi.flat());
}

TEST_CASE("losses leave the other networks untouched") {
    auto p = testing::random_problem(21);
    const auto before = p.state;
    (void)pi_loss(p.state, p.batch);
    (void)v_loss(p.state, p.batch);
    (void)q_loss(p.state, p.batch);
    (void)mu_loss(p.state, p.batch);
    CHECK(p.state.v.flat() == before.v.flat());
    CHECK(p.state.mu.flat() == before.mu.flat());
    CHECK(p.state.pi.flat() == before.pi.flat());
    for (std::size_t k = 0; k < p.state.q.size(); ++k) CHECK(p.state.q[k].flat() == before.q[k].flat());
}

TEST_CASE("larger lambda never raises V on the frozen quadratic critic") {
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 0.1, 1.0, 10.0, 1000.0}) {
        const double v = frozen_quadratic_v(lambda, MuMode::learned);
        CHECK(v <= prev + 1e-3);
        prev = v;
    }
}

TEST_CASE("lambda 1e3 V matches the zero-perturbation V within 2 percent") {
    const double big = frozen_quadratic_v(1000.0, MuMode::learned);
    const double zero = frozen_quadratic_v(0.0, MuMode::zero);
    CHECK(zero == doctest::Approx(-0.09).epsilon(1e-2));
    CHECK(std::abs(big - zero) <= 0.02 * std::abs(zero));
}

TEST_CASE("checkpoint round trip") {
    TrainConfig cfg;
    cfg.hidden = {6};
    auto st = init_learner(cfg, 2, 1, 1.0);
    st.iteration = 42;
    const auto dir = fs::temp_directory_path() / ("anq_ckpt_" + std::to_string(::getpid()));
    save_checkpoint(st, dir, {{"note", "x"}});
    TrainConfig other = cfg;
    other.seed = 99;
    auto back = init_learner(other, 2, 1, 1.0);
    load_checkpoint(back, dir);
    CHECK(back.iteration == 42);
    const auto as_float = [](const nn::NetParams& n) { return n.flat().cast<float>().eval(); };
    CHECK(as_float(back.v) == as_float(st.v));
    CHECK(as_float(back.mu) == as_float(st.mu));
    CHECK(as_float(back.pi) == as_float(st.pi));
    for (std::size_t k = 0; k < st.q.size(); ++k) CHECK(as_float(back.q_target[k]) == as_float(st.q_target[k]));
    auto wrong = init_learner(cfg, 3, 1, 1.0);
    CHECK_THROWS(load_checkpoint(wrong, dir));
    fs::remove_all(dir);
}

TEST_CASE("runaway Q values are flagged as divergence") {
    auto e = env::make_env(env::EnvName::reacher_1d);
    const auto d = data::generate_dataset(env::EnvName::reacher_1d, env::BehaviorPolicy::medium, 500, 3);
    TrainConfig cfg;
    cfg.hidden = {8, 8};
    cfg.batch_size = 32;
    cfg.iterations = 400;
    cfg.reward_shift = 50.0;
    cfg.reward_max = 0.01;
    cfg.lr = 1e-2;
    const auto td = TrainingData::from(d, cfg.reward_shift);
    auto st = init_learner(cfg, d.state_dim, d.action_dim, 1.0, td.stats);
    RunOptions opts;
    opts.eval_every = 50;
    opts.eval_episodes = 1;
    const auto res = run_training(st, td, *e, opts);
    CHECK(res.diverged);
    CHECK(res.iterations_done < cfg.iterations);
    CHECK_FALSE(res.divergence_reason.empty());
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.tau = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = TrainConfig{};
    cfg.radius_mode = RadiusMode::custom;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    CHECK(TrainConfig::defaults_for(env::EnvName::point_maze_2d).reward_shift == -1.0);
}
