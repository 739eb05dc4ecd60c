#pragma once

// Shared oracles for unit and acceptance tests.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "anq/learner.hpp"
#include "anq/rng.hpp"

namespace anq::testing {

using learn::Batch;
using learn::LearnerState;
using nn::Matrix;
using nn::Vector;

/// Central differences of f around p with step h, one coordinate at a time.
/// A coordinate whose h-step difference disagrees with the h/10 one beyond
/// smooth-function accuracy straddles a kink (ReLU, min over critics, clip);
/// it takes the h/10 value and is counted in *kinks.
inline Vector fd_gradient(const std::function<double()>& f, Vector& p, double h = 1e-5, int* kinks = nullptr) {
    auto central = [&](Eigen::Index i, double step) {
        const double keep = p(i);
        p(i) = keep + step;
        const double up = f();
        p(i) = keep - step;
        const double down = f();
        p(i) = keep;
        return (up - down) / (2.0 * step);
    };
    Vector g(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        g(i) = central(i, h);
        const double fine = central(i, h / 10.0);
        if (std::abs(g(i) - fine) > 1e-6 * std::max(1.0, std::abs(fine))) {
            g(i) = fine;
            if (kinks) ++*kinks;
        }
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double rel_error(const Vector& a, const Vector& b) {
    const double scale = std::max(a.norm(), b.norm());
    if (scale < 1e-12) return 0.0;
    return (a - b).norm() / scale;
}

struct RandomProblem {
    LearnerState state;
    Batch batch;
};

/// Small random learner and batch for gradient checks. Networks get their
/// weights perturbed away from initialization so targets differ from online nets.
inline RandomProblem random_problem(std::uint64_t seed, learn::MuMode mu_mode = learn::MuMode::learned) {
    auto rng = make_rng(seed, 1000);
    std::uniform_int_distribution<int> dims(1, 3);
    std::uniform_int_distribution<int> width(3, 8);
    std::uniform_int_distribution<int> critics(1, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    learn::TrainConfig cfg;
    cfg.seed = seed;
    cfg.hidden = {width(rng), width(rng)};
    cfg.n_critics = critics(rng);
    cfg.batch_size = 4;
    cfg.lambda = 2.0 * unit(rng);
    cfg.alpha = 2.0 * unit(rng);
    cfg.tau = 0.5 + 0.49 * unit(rng);
    cfg.beta = 0.5 + 3.0 * unit(rng);
    cfg.gamma = 0.9 + 0.09 * unit(rng);
    cfg.mu_mode = mu_mode;
    const double r = unit(rng);
    cfg.radius_mode = r < 0.6 ? learn::RadiusMode::adaptive_exp_advantage : learn::RadiusMode::uniform;
    cfg.noise_sigma = 0.2;
    cfg.noise_clip = 0.5;
    const int sd = dims(rng);
    const int ad = dims(rng);
    const double bound = 1.0 + unit(rng);

    RandomProblem p{learn::init_learner(cfg, sd, ad, bound), {}};
    auto jiggle = [&](nn::NetParams& net) {
        for (Eigen::Index i = 0; i < net.flat().size(); ++i) net.flat()(i) += 0.1 * gauss(rng);
    };
    for (auto& q : p.state.q_target) jiggle(q);
    if (p.state.has_mu()) jiggle(p.state.mu_target);

    const int b = cfg.batch_size;
    Batch& bt = p.batch;
    bt.s = Matrix::NullaryExpr(sd, b, [&]() { return gauss(rng); });
    bt.s_next = Matrix::NullaryExpr(sd, b, [&]() { return gauss(rng); });
    bt.a = Matrix::NullaryExpr(ad, b, [&]() { return 0.8 * bound * (2.0 * unit(rng) - 1.0); });
    bt.r = nn::RowVector::NullaryExpr(b, [&]() { return gauss(rng); });
    bt.done = nn::RowVector::NullaryExpr(b, [&]() { return unit(rng) < 0.25 ? 1.0 : 0.0; });
    if (mu_mode == learn::MuMode::gaussian_noise) {
        bt.noise_v = Matrix::NullaryExpr(ad, b, [&]() { return std::clamp(0.2 * gauss(rng), -0.5, 0.5); });
        bt.noise_pi = Matrix::NullaryExpr(ad, b, [&]() { return std::clamp(0.2 * gauss(rng), -0.5, 0.5); });
    }
    return p;
}

struct GradientCheck {
    double mu = 0.0;
    double v = 0.0;
    double q = 0.0;
    double pi = 0.0;
    int kinks = 0;
    double worst() const { return std::max({mu, v, q, pi}); }
};

/// Analytic vs central-difference gradients of every loss for one seed.
inline GradientCheck check_gradients(std::uint64_t seed, double h = 1e-5) {
    auto p = random_problem(seed);
    auto& st = p.state;
    const auto& b = p.batch;
    GradientCheck out;

    const auto mu_an = learn::mu_loss(st, b).grad;
    const auto mu_fd = fd_gradient([&] { return learn::mu_loss(st, b).loss; }, st.mu.flat(), h, &out.kinks);
    out.mu = rel_error(mu_an, mu_fd);

    const auto v_an = learn::v_loss(st, b).grad;
    const auto v_fd = fd_gradient([&] { return learn::v_loss(st, b).loss; }, st.v.flat(), h, &out.kinks);
    out.v = rel_error(v_an, v_fd);

    const auto q_an = learn::q_loss(st, b).grads;
    for (std::size_t k = 0; k < st.q.size(); ++k) {
        const auto q_fd = fd_gradient([&] { return learn::q_loss(st, b).loss; }, st.q[k].flat(), h, &out.kinks);
        out.q = std::max(out.q, rel_error(q_an[k], q_fd));
    }

    const auto pi_an = learn::pi_loss(st, b).grad;
    const auto pi_fd = fd_gradient([&] { return learn::pi_loss(st, b).loss; }, st.pi.flat(), h, &out.kinks);
    out.pi = rel_error(pi_an, pi_fd);
    return out;
}

}  // namespace anq::testing
