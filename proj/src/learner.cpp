#include "anq/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "anq/errors.hpp"
#include "anq/rng.hpp"

namespace anq::learn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams; every network and sampler owns one so variants share inits.
constexpr std::uint64_t kCriticStream = 10;
constexpr std::uint64_t kValueStream = 20;
constexpr std::uint64_t kMuStream = 21;
constexpr std::uint64_t kPolicyStream = 22;
constexpr std::uint64_t kBatchStream = 30;
constexpr std::uint64_t kNoiseStream = 31;

Matrix concat(const Matrix& s, const Matrix& a) {
    Matrix x(s.rows() + a.rows(), s.cols());
    x.topRows(s.rows()) = s;
    x.bottomRows(a.rows()) = a;
    return x;
}

Matrix clip_box(const Matrix& a, double bound) { return a.cwiseMax(-bound).cwiseMin(bound); }

double checked(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite");
    return v;
}

double clip(double v, const std::array<double, 2>& c) {
    if (std::isnan(v)) throw NumericError("weight is NaN");
    return std::clamp(v, c[0], c[1]);
}

double exp_cap(double hi) { return hi > 0.0 ? std::log(hi) + 1.0 : 0.0; }

void check_clip(const std::array<double, 2>& c, const char* what) {
    if (!(c[0] >= 0.0) || !(c[1] >= c[0]) || !std::isfinite(c[1])) {
        throw InputError(std::string(what) + ": need 0 <= lo <= hi");
    }
}

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string to_string(RadiusMode m) {
    switch (m) {
        case RadiusMode::adaptive_exp_advantage: return "adaptive_exp_advantage";
        case RadiusMode::uniform: return "uniform";
        case RadiusMode::custom: return "custom";
    }
    return "unknown";
}

std::string to_string(MuMode m) {
    switch (m) {
        case MuMode::learned: return "learned";
        case MuMode::zero: return "zero";
        case MuMode::gaussian_noise: return "gaussian_noise";
    }
    return "unknown";
}

// ---------------------------------------------------------------- config

TrainConfig TrainConfig::defaults_for(env::EnvName name) {
    TrainConfig c;
    const auto envptr = env::make_env(name);
    const auto& spec = envptr->spec();
    c.reward_max = spec.reward_max;
    c.noise_sigma = 0.2 * spec.action_bound;
    c.noise_clip = 0.5 * spec.action_bound;
    if (spec.sparse_reward) {
        c.tau = 0.9;
        c.beta = 10.0;
        c.gamma = 0.995;
        c.adv_weight_clip = {0.01, 10.0};
        c.policy_weight_clip = {0.0, 100.0};
        c.reward_shift = -1.0;
    } else {
        c.tau = 0.7;
        c.beta = 3.0;
        c.gamma = 0.99;
        c.adv_weight_clip = {0.01, 30.0};
        c.policy_weight_clip = {0.0, 3.0};
    }
    return c;
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be >= 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InputError("alpha must be >= 0");
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("tau must lie in (0, 1)");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InputError("beta must be > 0");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("gamma must lie in [0, 1)");
    if (!(xi >= 0.0 && xi <= 1.0)) throw InputError("xi must lie in [0, 1]");
    if (!(lr > 0.0)) throw InputError("lr must be > 0");
    if (batch_size < 1) throw InputError("batch_size must be >= 1");
    if (iterations < 0) throw InputError("iterations must be >= 0");
    if (policy_update_freq < 1) throw InputError("policy_update_freq must be >= 1");
    if (n_critics < 1) throw InputError("n_critics must be >= 1");
    check_clip(adv_weight_clip, "adv_weight_clip");
    check_clip(policy_weight_clip, "policy_weight_clip");
    if (radius_mode == RadiusMode::custom && !custom_f) throw InputError("custom radius mode needs a function");
    if (mu_mode == MuMode::gaussian_noise && (!(noise_sigma >= 0.0) || !(noise_clip >= 0.0))) {
        throw InputError("noise sigma and clip must be >= 0");
    }
    for (int h : hidden) {
        if (h < 1) throw InputError("hidden widths must be >= 1");
    }
    if (!(reward_max > 0.0)) throw InputError("reward_max must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lambda", lambda},
            {"alpha", alpha},
            {"tau", tau},
            {"beta", beta},
            {"gamma", gamma},
            {"xi", xi},
            {"lr", lr},
            {"batch_size", batch_size},
            {"iterations", iterations},
            {"policy_update_freq", policy_update_freq},
            {"n_critics", n_critics},
            {"adv_weight_clip", adv_weight_clip},
            {"policy_weight_clip", policy_weight_clip},
            {"seed", seed},
            {"radius_mode", to_string(radius_mode)},
            {"mu_mode", to_string(mu_mode)},
            {"noise_sigma", noise_sigma},
            {"noise_clip", noise_clip},
            {"hidden", hidden},
            {"reward_shift", reward_shift},
            {"reward_max", reward_max},
            {"cosine_policy_lr", cosine_policy_lr}};
}

// ---------------------------------------------------------------- scalar pieces

double expectile_loss(double x, double tau) {
    const double w = x < 0.0 ? 1.0 - tau : tau;
    return w * x * x;
}

double expectile_grad(double x, double tau) {
    const double w = x < 0.0 ? 1.0 - tau : tau;
    return 2.0 * w * x;
}

double adaptive_radius_weight(double q_target, double v, double alpha, std::array<double, 2> c) {
    const double x = std::min(alpha * (q_target - v), exp_cap(c[1]));
    return clip(1.0 / std::exp(-x), c);
}

double policy_weight(double advantage, double beta, std::array<double, 2> c) {
    return clip(std::exp(std::min(beta * advantage, exp_cap(c[1]))), c);
}

// ---------------------------------------------------------------- critics

RowVector EnsembleCritic::evaluate(const Matrix& states, const Matrix& actions, Matrix* action_grad) const {
    const Matrix x = concat(states, actions);
    const auto n = static_cast<int>(nets_.size());
    const auto cols = x.cols();
    std::vector<nn::ForwardCache> caches(static_cast<std::size_t>(n));
    RowVector best = RowVector::Constant(cols, std::numeric_limits<double>::infinity());
    std::vector<int> arg(static_cast<std::size_t>(cols), 0);
    for (int k = 0; k < n; ++k) {
        const Matrix out = nn::forward_batch(nets_[static_cast<std::size_t>(k)], x,
                                             action_grad ? &caches[static_cast<std::size_t>(k)] : nullptr);
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (out(0, j) < best(j)) {
                best(j) = out(0, j);
                arg[static_cast<std::size_t>(j)] = k;
            }
        }
    }
    if (action_grad != nullptr) {
        action_grad->setZero(actions.rows(), cols);
        for (int k = 0; k < n; ++k) {
            Matrix up = Matrix::Zero(1, cols);
            bool any = false;
            for (Eigen::Index j = 0; j < cols; ++j) {
                if (arg[static_cast<std::size_t>(j)] == k) {
                    up(0, j) = 1.0;
                    any = true;
                }
            }
            if (!any) continue;
            const auto g = nn::backward(nets_[static_cast<std::size_t>(k)], caches[static_cast<std::size_t>(k)], up, false);
            *action_grad += g.input.bottomRows(actions.rows());
        }
    }
    return best;
}

RowVector FunctionCritic::evaluate(const Matrix& states, const Matrix& actions, Matrix* action_grad) const {
    const auto cols = actions.cols();
    RowVector out(cols);
    if (action_grad) action_grad->setZero(actions.rows(), cols);
    std::vector<double> s(static_cast<std::size_t>(states.rows()));
    std::vector<double> a(static_cast<std::size_t>(actions.rows()));
    std::vector<double> g(static_cast<std::size_t>(actions.rows()));
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < states.rows(); ++i) s[static_cast<std::size_t>(i)] = states(i, j);
        for (Eigen::Index i = 0; i < actions.rows(); ++i) a[static_cast<std::size_t>(i)] = actions(i, j);
        out(j) = fn_(s, a, action_grad ? g.data() : nullptr);
        if (action_grad) {
            for (Eigen::Index i = 0; i < actions.rows(); ++i) (*action_grad)(i, j) = g[static_cast<std::size_t>(i)];
        }
    }
    return out;
}

// ---------------------------------------------------------------- data

TrainingData TrainingData::from(const data::Dataset& d, double reward_shift) {
    if (d.size() == 0) throw InputError("TrainingData: empty dataset");
    const auto n = static_cast<Eigen::Index>(d.size());
    TrainingData t;
    t.stats = d.stats;
    t.states.resize(d.state_dim, n);
    t.next_states.resize(d.state_dim, n);
    t.actions.resize(d.action_dim, n);
    t.rewards.resize(n);
    t.dones.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (int i = 0; i < d.state_dim; ++i) {
            const auto k = static_cast<std::size_t>(j) * d.state_dim + i;
            const double m = d.stats.mean[static_cast<std::size_t>(i)];
            const double sd = d.stats.std[static_cast<std::size_t>(i)];
            t.states(i, j) = (static_cast<double>(d.states[k]) - m) / sd;
            t.next_states(i, j) = (static_cast<double>(d.next_states[k]) - m) / sd;
        }
        for (int i = 0; i < d.action_dim; ++i) {
            t.actions(i, j) = d.actions[static_cast<std::size_t>(j) * d.action_dim + i];
        }
        t.rewards(j) = static_cast<double>(d.rewards[static_cast<std::size_t>(j)]) + reward_shift;
        t.dones(j) = d.dones[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
    }
    return t;
}

LearnerState init_learner(const TrainConfig& cfg, int state_dim, int action_dim, double action_bound,
                          data::NormStats stats) {
    cfg.validate();
    if (state_dim < 1 || action_dim < 1) throw InputError("init_learner: dims must be >= 1");
    if (!(action_bound > 0.0)) throw InputError("init_learner: action_bound must be > 0");
    LearnerState st;
    st.cfg = cfg;
    st.state_dim = state_dim;
    st.action_dim = action_dim;
    st.action_bound = action_bound;
    if (stats.mean.empty()) {
        stats.mean.assign(static_cast<std::size_t>(state_dim), 0.0);
        stats.std.assign(static_cast<std::size_t>(state_dim), 1.0);
    }
    st.stats = std::move(stats);

    const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, std::nullopt};
    const auto critic_spec = nn::NetSpec::mlp(state_dim + action_dim, cfg.hidden, 1);
    for (int k = 0; k < cfg.n_critics; ++k) {
        auto rng = make_rng(cfg.seed, kCriticStream + static_cast<std::uint64_t>(k));
        st.q.push_back(nn::init_uniform_fan_in(critic_spec, rng));
        st.q_opt.emplace_back(st.q.back().size(), adam);
    }
    st.q_target = st.q;
    {
        auto rng = make_rng(cfg.seed, kValueStream);
        st.v = nn::init_uniform_fan_in(nn::NetSpec::mlp(state_dim, cfg.hidden, 1), rng);
        st.v_opt = nn::OptimState(st.v.size(), adam);
    }
    if (st.has_mu()) {
        auto rng = make_rng(cfg.seed, kMuStream);
        st.mu = nn::init_uniform_fan_in(
            nn::NetSpec::bounded_mlp(state_dim + action_dim, cfg.hidden, action_dim, 2.0 * action_bound), rng);
        st.mu_target = st.mu;
        st.mu_opt = nn::OptimState(st.mu.size(), adam);
    }
    {
        auto rng = make_rng(cfg.seed, kPolicyStream);
        st.pi = nn::init_uniform_fan_in(nn::NetSpec::bounded_mlp(state_dim, cfg.hidden, action_dim, action_bound), rng);
        nn::AdamConfig pi_adam = adam;
        if (cfg.cosine_policy_lr && cfg.iterations > 0) {
            pi_adam.cosine_horizon = (cfg.iterations + cfg.policy_update_freq - 1) / cfg.policy_update_freq;
        }
        st.pi_opt = nn::OptimState(st.pi.size(), pi_adam);
    }
    st.batch_rng = make_rng(cfg.seed, kBatchStream);
    st.noise_rng = make_rng(cfg.seed, kNoiseStream);
    return st;
}

Batch slice_batch(const TrainingData& data, std::size_t first, std::size_t count) {
    if (first + count > data.size() || count == 0) throw InputError("slice_batch: range out of bounds");
    const auto f = static_cast<Eigen::Index>(first);
    const auto c = static_cast<Eigen::Index>(count);
    Batch b;
    b.s = data.states.middleCols(f, c);
    b.a = data.actions.middleCols(f, c);
    b.s_next = data.next_states.middleCols(f, c);
    b.r = data.rewards.segment(f, c);
    b.done = data.dones.segment(f, c);
    return b;
}

Batch sample_batch(LearnerState& state, const TrainingData& data) {
    if (data.size() == 0) throw InputError("sample_batch: empty data");
    if (data.states.rows() != state.state_dim || data.actions.rows() != state.action_dim) {
        throw InputError("sample_batch: data dimensions do not match the learner");
    }
    const int bsz = state.cfg.batch_size;
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    Batch b;
    b.s.resize(state.state_dim, bsz);
    b.s_next.resize(state.state_dim, bsz);
    b.a.resize(state.action_dim, bsz);
    b.r.resize(bsz);
    b.done.resize(bsz);
    for (int j = 0; j < bsz; ++j) {
        const auto i = static_cast<Eigen::Index>(pick(state.batch_rng));
        b.s.col(j) = data.states.col(i);
        b.s_next.col(j) = data.next_states.col(i);
        b.a.col(j) = data.actions.col(i);
        b.r(j) = data.rewards(i);
        b.done(j) = data.dones(i);
    }
    if (state.cfg.mu_mode == MuMode::gaussian_noise) {
        std::normal_distribution<double> gauss(0.0, state.cfg.noise_sigma);
        const double c = state.cfg.noise_clip;
        auto draw = [&](Matrix& m) {
            m.resize(state.action_dim, bsz);
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = std::clamp(gauss(state.noise_rng), -c, c);
            }
        };
        draw(b.noise_v);
        draw(b.noise_pi);
    }
    return b;
}

std::shared_ptr<const ActionValue> online_critic(const LearnerState& state) {
    if (state.frozen_critic) return state.frozen_critic;
    return std::make_shared<EnsembleCritic>(state.q);
}

std::shared_ptr<const ActionValue> target_critic(const LearnerState& state) {
    if (state.frozen_critic) return state.frozen_critic;
    return std::make_shared<EnsembleCritic>(state.q_target);
}

Matrix perturbed_actions(const LearnerState& state, const Batch& b, bool use_target, const Matrix* noise,
                         Matrix* raw_delta) {
    Matrix delta;
    switch (state.cfg.mu_mode) {
        case MuMode::learned:
            delta = nn::forward_batch(use_target ? state.mu_target : state.mu, concat(b.s, b.a));
            break;
        case MuMode::zero: delta = Matrix::Zero(b.a.rows(), b.a.cols()); break;
        case MuMode::gaussian_noise:
            if (noise == nullptr || noise->cols() != b.a.cols()) throw InputError("gaussian mu needs batch noise");
            delta = *noise;
            break;
    }
    Matrix out = clip_box(b.a + delta, state.action_bound);
    if (raw_delta) *raw_delta = std::move(delta);
    return out;
}

// ---------------------------------------------------------------- losses

RowVector penalty_weights(const LearnerState& state, const Batch& b) {
    const auto& cfg = state.cfg;
    const auto n = b.a.cols();
    if (cfg.radius_mode == RadiusMode::uniform) return RowVector::Ones(n);
    const RowVector qt = target_critic(state)->evaluate(b.s, b.a, nullptr);
    const Matrix vv = nn::forward_batch(state.v, b.s);
    RowVector w(n);
    if (cfg.radius_mode == RadiusMode::adaptive_exp_advantage) {
        for (Eigen::Index j = 0; j < n; ++j) w(j) = adaptive_radius_weight(qt(j), vv(0, j), cfg.alpha, cfg.adv_weight_clip);
        return w;
    }
    std::vector<double> s(static_cast<std::size_t>(b.s.rows()));
    std::vector<double> a(static_cast<std::size_t>(b.a.rows()));
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < b.s.rows(); ++i) s[static_cast<std::size_t>(i)] = b.s(i, j);
        for (Eigen::Index i = 0; i < b.a.rows(); ++i) a[static_cast<std::size_t>(i)] = b.a(i, j);
        const double f = cfg.custom_f(s, a, qt(j) - vv(0, j));
        if (!(f >= 0.0)) throw NumericError("custom radius multiplier must be >= 0");
        w(j) = clip(1.0 / f, cfg.adv_weight_clip);
    }
    return w;
}

MuLoss mu_loss(const LearnerState& state, const Batch& b) {
    if (!state.has_mu()) throw StateError("mu_loss: this learner has no auxiliary network");
    const auto& cfg = state.cfg;
    const auto n = b.a.cols();
    nn::ForwardCache cache;
    const Matrix delta = nn::forward_batch(state.mu, concat(b.s, b.a), &cache);
    const Matrix moved = b.a + delta;
    const Matrix acts = clip_box(moved, state.action_bound);
    Matrix dq;
    const RowVector q = online_critic(state)->evaluate(b.s, acts, &dq);

    MuLoss out;
    out.weights = cfg.lambda > 0.0 ? penalty_weights(state, b) : RowVector::Ones(n);
    const RowVector norms = delta.colwise().norm();
    Matrix up(delta.rows(), n);
    double obj = 0.0;
    const double inv = 1.0 / static_cast<double>(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double pen = cfg.lambda * out.weights(j);
        obj += q(j) - pen * norms(j);
        for (Eigen::Index i = 0; i < delta.rows(); ++i) {
            const double pass = std::abs(moved(i, j)) < state.action_bound ? 1.0 : 0.0;
            const double dnorm = norms(j) > 0.0 ? delta(i, j) / norms(j) : 0.0;
            up(i, j) = -inv * (pass * dq(i, j) - pen * dnorm);
        }
    }
    out.loss = checked(-obj * inv, "mu loss");
    out.mean_mu_norm = norms.mean();
    out.grad = nn::backward(state.mu, cache, up).params;
    return out;
}

VLoss v_loss(const LearnerState& state, const Batch& b) {
    const Matrix acts = perturbed_actions(state, b, true, &b.noise_v);
    const RowVector target = target_critic(state)->evaluate(b.s, acts, nullptr);
    nn::ForwardCache cache;
    const Matrix vv = nn::forward_batch(state.v, b.s, &cache);
    const auto n = b.s.cols();
    const double inv = 1.0 / static_cast<double>(n);
    Matrix up(1, n);
    VLoss out;
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double u = target(j) - vv(0, j);
        total += expectile_loss(u, state.cfg.tau);
        up(0, j) = -inv * expectile_grad(u, state.cfg.tau);
    }
    out.loss = checked(total * inv, "value loss");
    out.mean_v = vv.mean();
    out.grad = nn::backward(state.v, cache, up).params;
    return out;
}

QLoss q_loss(const LearnerState& state, const Batch& b) {
    QLoss out;
    if (state.frozen_critic) {
        out.mean_q = state.frozen_critic->evaluate(b.s, b.a, nullptr).mean();
        return out;
    }
    const auto n = b.s.cols();
    const double inv = 1.0 / static_cast<double>(n);
    const Matrix vnext = nn::forward_batch(state.v, b.s_next);
    RowVector y(n);
    for (Eigen::Index j = 0; j < n; ++j) y(j) = b.r(j) + state.cfg.gamma * (1.0 - b.done(j)) * vnext(0, j);
    for (Eigen::Index j = 0; j < n; ++j) checked(y(j), "critic target");
    const Matrix x = concat(b.s, b.a);
    RowVector qmin = RowVector::Constant(n, std::numeric_limits<double>::infinity());
    for (const auto& net : state.q) {
        nn::ForwardCache cache;
        const Matrix qk = nn::forward_batch(net, x, &cache);
        const RowVector diff = qk.row(0) - y;
        out.loss += diff.squaredNorm() * inv;
        qmin = qmin.cwiseMin(qk.row(0));
        out.grads.push_back(nn::backward(net, cache, 2.0 * inv * Matrix(diff)).params);
    }
    checked(out.loss, "critic loss");
    out.mean_q = qmin.mean();
    return out;
}

PiLoss pi_loss(const LearnerState& state, const Batch& b) {
    const auto& cfg = state.cfg;
    const Matrix acts = perturbed_actions(state, b, false, &b.noise_pi);
    const RowVector qt = target_critic(state)->evaluate(b.s, acts, nullptr);
    const Matrix vv = nn::forward_batch(state.v, b.s);
    nn::ForwardCache cache;
    const Matrix p = nn::forward_batch(state.pi, b.s, &cache);
    const auto n = b.s.cols();
    const double inv = 1.0 / static_cast<double>(n);
    PiLoss out;
    out.weights.resize(n);
    Matrix up(p.rows(), n);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double w = policy_weight(qt(j) - vv(0, j), cfg.beta, cfg.policy_weight_clip);
        out.weights(j) = w;
        const Vector diff = acts.col(j) - p.col(j);
        total += w * diff.squaredNorm();
        up.col(j) = -2.0 * inv * w * diff;
    }
    out.loss = checked(total * inv, "policy loss");
    out.grad = nn::backward(state.pi, cache, up).params;
    return out;
}

// ---------------------------------------------------------------- training

StepMetrics train_step(LearnerState& state, const Batch& batch) {
    StepMetrics m;
    m.iteration = state.iteration;
    m.pi_loss = kNaN;
    try {
        const auto vl = v_loss(state, batch);
        nn::adam_step(state.v, vl.grad, state.v_opt);
        m.v_loss = vl.loss;
        m.mean_v = vl.mean_v;

        const auto ql = q_loss(state, batch);
        for (std::size_t k = 0; k < ql.grads.size(); ++k) nn::adam_step(state.q[k], ql.grads[k], state.q_opt[k]);
        m.q_loss = ql.loss;
        m.mean_q = ql.mean_q;

        if (state.has_mu()) {
            const auto ml = mu_loss(state, batch);
            nn::adam_step(state.mu, ml.grad, state.mu_opt);
            m.mu_loss = ml.loss;
            m.mean_mu_norm = ml.mean_mu_norm;
        } else if (state.cfg.mu_mode == MuMode::gaussian_noise) {
            m.mean_mu_norm = batch.noise_pi.colwise().norm().mean();
        }

        if (state.iteration % state.cfg.policy_update_freq == 0) {
            const auto pl = pi_loss(state, batch);
            nn::adam_step(state.pi, pl.grad, state.pi_opt);
            m.pi_loss = pl.loss;
            m.pi_updated = true;
        }

        if (!state.frozen_critic) {
            for (std::size_t k = 0; k < state.q.size(); ++k) nn::polyak_update(state.q_target[k], state.q[k], state.cfg.xi);
        }
        if (state.has_mu()) nn::polyak_update(state.mu_target, state.mu, state.cfg.xi);
    } catch (const NumericError& e) {
        throw NumericError("iteration " + std::to_string(state.iteration) + ": " + e.what());
    }
    ++state.iteration;
    return m;
}

StepMetrics train_step(LearnerState& state, const TrainingData& data) {
    const Batch b = sample_batch(state, data);
    return train_step(state, b);
}

std::vector<double> policy_action(const LearnerState& state, std::span<const double> raw_state) {
    const auto s = data::normalize_state(state.stats, raw_state);
    const Vector out = nn::forward(state.pi, Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
    return {out.data(), out.data() + out.size()};
}

EvalResult evaluate_policy(const LearnerState& state, const env::Environment& env, int episodes, std::uint64_t seed) {
    if (episodes < 1) throw InputError("evaluate_policy: episodes must be >= 1");
    EvalResult r;
    r.mean_return = env::average_return(
        env, [&](std::span<const double> s) { return policy_action(state, s); }, episodes, seed);
    const auto& ref = env::reference_returns(env.name());
    r.normalized_score = env::normalized_score(r.mean_return, ref.random_return, ref.expert_return);
    return r;
}

namespace {

RowVector eval_q(const LearnerState& state, const TrainingData& data) {
    const std::size_t n = std::min<std::size_t>(data.size(), 1024);
    const Batch b = slice_batch(data, 0, n);
    return online_critic(state)->evaluate(b.s, b.a, nullptr);
}

}  // namespace

double eval_batch_mean_abs_q(const LearnerState& state, const TrainingData& data) {
    return eval_q(state, data).cwiseAbs().mean();
}

double eval_batch_mean_q(const LearnerState& state, const TrainingData& data) { return eval_q(state, data).mean(); }

double eval_batch_mean_mu_norm(const LearnerState& state, const TrainingData& data, bool use_target) {
    if (!state.has_mu()) return 0.0;
    const Batch b = slice_batch(data, 0, std::min<std::size_t>(data.size(), 1024));
    return nn::forward_batch(use_target ? state.mu_target : state.mu, concat(b.s, b.a)).colwise().norm().mean();
}

std::string metrics_csv_header() {
    return "iteration,v_loss,q_loss,mu_loss,pi_loss,mean_q,mean_v,mean_mu_norm,eval_score";
}

std::string metrics_csv_row(const StepMetrics& m, std::optional<double> eval_score) {
    std::string row = std::to_string(m.iteration);
    for (double v : {m.v_loss, m.q_loss, m.mu_loss, m.pi_loss, m.mean_q, m.mean_v, m.mean_mu_norm}) {
        row += ',';
        row += fmt(v);
    }
    row += ',';
    if (eval_score) row += fmt(*eval_score);
    return row;
}

RunResult run_training(LearnerState& state, const TrainingData& data, const env::Environment& env,
                       const RunOptions& opts) {
    if (opts.eval_every < 1 || opts.log_every < 1) throw InputError("run_training: eval/log periods must be >= 1");
    std::ofstream csv;
    if (opts.metrics_csv) {
        if (opts.metrics_csv->has_parent_path()) std::filesystem::create_directories(opts.metrics_csv->parent_path());
        csv.open(*opts.metrics_csv, std::ios::trunc);
        if (!csv) throw InputError("cannot open metrics file " + opts.metrics_csv->string());
        csv << metrics_csv_header() << '\n';
    }
    RunResult res;
    const double bound = state.cfg.divergence_bound();
    const std::int64_t total = state.cfg.iterations;
    auto evaluate = [&](std::int64_t iter) {
        const auto e = evaluate_policy(state, env, opts.eval_episodes, opts.eval_seed);
        res.evals.push_back({iter, e.mean_return, e.normalized_score});
        return e;
    };
    StepMetrics last;
    while (state.iteration < total) {
        try {
            last = train_step(state, data);
        } catch (const NumericError& e) {
            res.diverged = true;
            res.divergence_reason = e.what();
            break;
        }
        const std::int64_t done = state.iteration;
        const bool eval_now = done % opts.eval_every == 0 || done == total;
        const bool log_now = eval_now || last.iteration % opts.log_every == 0;
        std::optional<double> score;
        if (log_now) {
            const double mq = eval_batch_mean_abs_q(state, data);
            if (!(mq <= bound)) {
                res.diverged = true;
                res.divergence_reason = "mean |Q| " + fmt(mq) + " exceeds " + fmt(bound);
            }
        }
        if (eval_now && !res.diverged) score = evaluate(done).normalized_score;
        if (log_now) {
            res.logged.push_back(last);
            if (csv) csv << metrics_csv_row(last, score) << '\n';
        }
        if (res.diverged) break;
    }
    res.iterations_done = state.iteration;
    res.final_mean_q = state.iteration > 0 || !state.q.empty() ? eval_batch_mean_q(state, data) : 0.0;
    res.final_mean_mu_norm = state.has_mu() ? eval_batch_mean_mu_norm(state, data) : last.mean_mu_norm;
    if (!res.evals.empty() && !res.diverged) {
        res.final_score = res.evals.back().normalized_score;
        res.final_return = res.evals.back().mean_return;
    } else if (res.diverged) {
        if (state.pi.all_finite()) {
            const auto e = evaluate_policy(state, env, opts.eval_episodes, opts.eval_seed);
            res.final_score = e.normalized_score;
            res.final_return = e.mean_return;
        } else {
            res.final_score = kNaN;
            res.final_return = kNaN;
        }
    } else {
        const auto e = evaluate(state.iteration);
        res.final_score = e.normalized_score;
        res.final_return = e.mean_return;
    }
    return res;
}

// ---------------------------------------------------------------- checkpoints

namespace {

template <typename State>
auto named_nets(State& st) {
    std::vector<std::pair<std::string, decltype(&st.v)>> out;
    for (std::size_t k = 0; k < st.q.size(); ++k) {
        out.emplace_back("q" + std::to_string(k), &st.q[k]);
        out.emplace_back("q_target" + std::to_string(k), &st.q_target[k]);
    }
    out.emplace_back("v", &st.v);
    if (st.has_mu()) {
        out.emplace_back("mu", &st.mu);
        out.emplace_back("mu_target", &st.mu_target);
    }
    out.emplace_back("pi", &st.pi);
    return out;
}

}  // namespace

void save_checkpoint(const LearnerState& state, const std::filesystem::path& dir, const nlohmann::json& summary) {
    std::filesystem::create_directories(dir);
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [name, net] : named_nets(state)) {
        const std::string file = name + ".anqp";
        nn::save_params(dir / file, *net);
        files[name] = file;
    }
    const nlohmann::json manifest{{"config", state.cfg.to_json()},
                                  {"iteration", state.iteration},
                                  {"state_dim", state.state_dim},
                                  {"action_dim", state.action_dim},
                                  {"action_bound", state.action_bound},
                                  {"state_mean", state.stats.mean},
                                  {"state_std", state.stats.std},
                                  {"files", files},
                                  {"summary", summary}};
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw InputError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

void load_checkpoint(LearnerState& state, const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw InputError("missing manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("manifest.json: ") + e.what(), e.byte);
    }
    for (const auto& [name, net] : named_nets(state)) {
        if (!manifest["files"].contains(name)) throw InputError("checkpoint lacks network " + name);
        auto loaded = nn::load_params(dir / manifest["files"][name].get<std::string>());
        if (!(loaded.spec() == net->spec())) throw InputError("checkpoint network " + name + " has a different shape");
        *net = std::move(loaded);
    }
    state.iteration = manifest.at("iteration").get<std::int64_t>();
    state.stats.mean = manifest.at("state_mean").get<std::vector<double>>();
    state.stats.std = manifest.at("state_std").get<std::vector<double>>();
}

}  // namespace anq::learn
