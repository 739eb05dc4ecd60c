#include "anq/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>

#include "anq/errors.hpp"
#include "anq/rng.hpp"

namespace anq::env {

namespace {

// ---------------------------------------------------------------- point maze

struct Rect {
    double x0, y0, x1, y1;
    bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

class PointMaze2D final : public Environment {
public:
    static constexpr double kStep = 0.05;
    static constexpr double kGoalX = 0.9;
    static constexpr double kGoalY = 0.1;
    static constexpr double kGoalRadius = 0.1;
    static constexpr Rect kWall{0.45, 0.0, 0.55, 0.7};

    EnvName name() const override { return EnvName::point_maze_2d; }
    const EnvSpec& spec() const override { return spec_; }

    std::vector<double> reset(std::mt19937_64& rng) override {
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        x_ = 0.1 + jitter(rng);
        y_ = 0.1 + jitter(rng);
        return {x_, y_};
    }

    StepResult step(std::span<const double> action) override {
        const auto a = clip_action(action);
        const double nx = std::clamp(x_ + kStep * a[0], 0.0, 1.0);
        const double ny = std::clamp(y_ + kStep * a[1], 0.0, 1.0);
        if (!kWall.contains(nx, ny)) {
            x_ = nx;
            y_ = ny;
        }
        const bool reached = std::hypot(x_ - kGoalX, y_ - kGoalY) <= kGoalRadius;
        return {{x_, y_}, reached ? 1.0 : 0.0, reached};
    }

    // Waypoints route over the wall: climb the left corridor, cross above the
    // wall, then descend to the goal.
    std::vector<double> expert_action(std::span<const double> s) const override {
        const double x = s[0];
        const double y = s[1];
        double tx = kGoalX;
        double ty = kGoalY;
        if (x < kWall.x0 && y < 0.8) {
            tx = 0.35;
            ty = 0.85;
        } else if (x < 0.65) {
            tx = 0.7;
            ty = 0.85;
        }
        return {std::clamp((tx - x) / kStep, -1.0, 1.0), std::clamp((ty - y) / kStep, -1.0, 1.0)};
    }

    std::unique_ptr<Environment> clone() const override { return std::make_unique<PointMaze2D>(*this); }

private:
    EnvSpec spec_{2, 2, 1.0, 80, 0.99, 1.0, true};
    double x_ = 0.1;
    double y_ = 0.1;
};

// ---------------------------------------------------------------- reacher

class Reacher1D final : public Environment {
public:
    static constexpr double kStep = 0.1;
    static constexpr double kLimit = 1.2;

    EnvName name() const override { return EnvName::reacher_1d; }
    const EnvSpec& spec() const override { return spec_; }

    std::vector<double> reset(std::mt19937_64& rng) override {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        x_ = u(rng);
        target_ = u(rng);
        return {x_, target_};
    }

    StepResult step(std::span<const double> action) override {
        const auto a = clip_action(action);
        x_ = std::clamp(x_ + kStep * a[0], -kLimit, kLimit);
        const double r = std::max(0.0, 1.0 - std::abs(x_ - target_));
        return {{x_, target_}, r, false};
    }

    std::vector<double> expert_action(std::span<const double> s) const override {
        return {std::clamp((s[1] - s[0]) / kStep, -1.0, 1.0)};
    }

    std::unique_ptr<Environment> clone() const override { return std::make_unique<Reacher1D>(*this); }

private:
    EnvSpec spec_{2, 1, 1.0, 30, 0.9, 1.0, false};
    double x_ = 0.0;
    double target_ = 0.0;
};

// ---------------------------------------------------------------- chain

constexpr int kChainStates = 8;
constexpr double kChainEndReward = 1.0;
constexpr double kChainLeftReward = 0.05;

class ChainTabular final : public Environment {
public:
    EnvName name() const override { return EnvName::chain_tabular; }
    const EnvSpec& spec() const override { return spec_; }

    std::vector<double> reset(std::mt19937_64&) override {
        pos_ = 0;
        return one_hot();
    }

    StepResult step(std::span<const double> action) override {
        const auto a = clip_action(action);
        double r = 0.0;
        if (chain_action_index(a[0]) == 1) {
            if (pos_ == kChainStates - 1) {
                r = kChainEndReward;
                pos_ = 0;
            } else {
                ++pos_;
            }
        } else {
            if (pos_ == 0) r = kChainLeftReward;
            pos_ = std::max(pos_ - 1, 0);
        }
        return {one_hot(), r, false};
    }

    std::vector<double> expert_action(std::span<const double>) const override { return {1.0}; }

    std::unique_ptr<Environment> clone() const override { return std::make_unique<ChainTabular>(*this); }

private:
    std::vector<double> one_hot() const {
        std::vector<double> s(kChainStates, 0.0);
        s[static_cast<std::size_t>(pos_)] = 1.0;
        return s;
    }

    EnvSpec spec_{kChainStates, 1, 1.0, 40, 0.99, 1.0, false};
    int pos_ = 0;
};

std::vector<double> behavior_action(const Environment& env, BehaviorPolicy policy, std::span<const double> s,
                                    std::mt19937_64& rng) {
    const EnvSpec& spec = env.spec();
    const double bound = spec.action_bound;
    switch (policy) {
        case BehaviorPolicy::expert:
            return env.expert_action(s);
        case BehaviorPolicy::medium: {
            auto a = env.expert_action(s);
            std::normal_distribution<double> noise(0.0, kMediumNoiseFraction * bound);
            for (double& x : a) x = std::clamp(x + noise(rng), -bound, bound);
            return a;
        }
        case BehaviorPolicy::random: {
            std::uniform_real_distribution<double> u(-bound, bound);
            std::vector<double> a(static_cast<std::size_t>(spec.action_dim));
            for (double& x : a) x = u(rng);
            return a;
        }
    }
    throw InputError("unknown behavior policy");
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

std::string to_string(EnvName name) {
    switch (name) {
        case EnvName::point_maze_2d: return "point_maze_2d";
        case EnvName::reacher_1d: return "reacher_1d";
        case EnvName::chain_tabular: return "chain_tabular";
    }
    return "unknown";
}

EnvName parse_env_name(std::string_view name) {
    for (EnvName e : all_envs()) {
        if (to_string(e) == name) return e;
    }
    throw InputError("unknown environment: " + std::string(name));
}

const std::vector<EnvName>& all_envs() {
    static const std::vector<EnvName> envs{EnvName::point_maze_2d, EnvName::reacher_1d, EnvName::chain_tabular};
    return envs;
}

std::vector<double> Environment::clip_action(std::span<const double> action) const {
    const EnvSpec& s = spec();
    if (static_cast<int>(action.size()) != s.action_dim) {
        throw InputError("action has " + std::to_string(action.size()) + " components, expected " +
                         std::to_string(s.action_dim));
    }
    std::vector<double> a(action.begin(), action.end());
    for (double& x : a) x = std::clamp(x, -s.action_bound, s.action_bound);
    return a;
}

std::unique_ptr<Environment> make_env(EnvName name) {
    switch (name) {
        case EnvName::point_maze_2d: return std::make_unique<PointMaze2D>();
        case EnvName::reacher_1d: return std::make_unique<Reacher1D>();
        case EnvName::chain_tabular: return std::make_unique<ChainTabular>();
    }
    throw InputError("unknown environment");
}

int chain_action_index(double action) { return action >= 0.0 ? 1 : 0; }

oracle::TabularMDP chain_tabular_mdp() {
    oracle::TabularMDP mdp;
    mdp.n_states = kChainStates;
    mdp.n_actions = 2;
    mdp.gamma = make_env(EnvName::chain_tabular)->spec().gamma;
    mdp.r_max = 1.0;
    mdp.R = oracle::MatrixXd::Zero(kChainStates, 2);
    mdp.P.assign(static_cast<std::size_t>(kChainStates * 2), oracle::VectorXd::Zero(kChainStates));
    for (int s = 0; s < kChainStates; ++s) {
        mdp.next(s, 0)[std::max(s - 1, 0)] = 1.0;
        if (s == 0) mdp.R(s, 0) = kChainLeftReward;
        if (s == kChainStates - 1) {
            mdp.next(s, 1)[0] = 1.0;
            mdp.R(s, 1) = kChainEndReward;
        } else {
            mdp.next(s, 1)[s + 1] = 1.0;
        }
    }
    mdp.d0 = oracle::VectorXd::Zero(kChainStates);
    mdp.d0[0] = 1.0;
    return mdp;
}

std::string to_string(BehaviorPolicy policy) {
    switch (policy) {
        case BehaviorPolicy::expert: return "expert";
        case BehaviorPolicy::medium: return "medium";
        case BehaviorPolicy::random: return "random";
    }
    return "unknown";
}

BehaviorPolicy parse_behavior_policy(std::string_view name) {
    if (name == "expert") return BehaviorPolicy::expert;
    if (name == "medium") return BehaviorPolicy::medium;
    if (name == "random") return BehaviorPolicy::random;
    throw InputError("unknown behavior policy: " + std::string(name));
}

std::vector<Transition> rollout_behavior(const Environment& proto, BehaviorPolicy policy, std::int64_t steps,
                                         std::uint64_t seed) {
    if (steps < 1) throw InputError("rollout_behavior: steps must be >= 1");
    auto env = proto.clone();
    auto reset_rng = make_rng(seed, 0);
    auto action_rng = make_rng(seed, 1);
    const int horizon = env->spec().horizon;

    std::vector<Transition> out;
    out.reserve(static_cast<std::size_t>(steps));
    auto s = env->reset(reset_rng);
    int t = 0;
    while (static_cast<std::int64_t>(out.size()) < steps) {
        auto a = behavior_action(*env, policy, s, action_rng);
        auto a_clipped = a;
        for (double& x : a_clipped) x = std::clamp(x, -env->spec().action_bound, env->spec().action_bound);
        StepResult res = env->step(a_clipped);
        out.push_back({to_float(s), to_float(a_clipped), static_cast<float>(res.reward), to_float(res.state), res.done});
        ++t;
        if (res.done || t >= horizon) {
            s = env->reset(reset_rng);
            t = 0;
        } else {
            s = std::move(res.state);
        }
    }
    return out;
}

double average_return(const Environment& proto, const PolicyFn& policy, int episodes, std::uint64_t seed) {
    if (episodes < 1) throw InputError("average_return: episodes must be >= 1");
    auto env = proto.clone();
    auto reset_rng = make_rng(seed, 0);
    double total = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        auto s = env->reset(reset_rng);
        for (int t = 0; t < env->spec().horizon; ++t) {
            StepResult res = env->step(policy(s));
            total += res.reward;
            if (res.done) break;
            s = std::move(res.state);
        }
    }
    return total / episodes;
}

double average_behavior_return(const Environment& env, BehaviorPolicy policy, int episodes, std::uint64_t seed) {
    auto action_rng = make_rng(seed, 1);
    const Environment& e = env;
    return average_return(
        env, [&](std::span<const double> s) { return behavior_action(e, policy, s, action_rng); }, episodes, seed);
}

const ReferenceReturns& reference_returns(EnvName name) {
    static std::mutex mu;
    static std::map<EnvName, ReferenceReturns> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(name);
    if (it == cache.end()) {
        constexpr std::uint64_t kReferenceSeed = 20240601;
        constexpr int kReferenceEpisodes = 200;
        auto env = make_env(name);
        ReferenceReturns ref;
        ref.random_return = average_behavior_return(*env, BehaviorPolicy::random, kReferenceEpisodes, kReferenceSeed);
        ref.expert_return = average_behavior_return(*env, BehaviorPolicy::expert, kReferenceEpisodes, kReferenceSeed);
        it = cache.emplace(name, ref).first;
    }
    return it->second;
}

double normalized_score(double mean_return, double random_return, double expert_return) {
    if (!(expert_return > random_return)) {
        throw InputError("normalized_score: expert return must exceed random return");
    }
    return 100.0 * (mean_return - random_return) / (expert_return - random_return);
}

}  // namespace anq::env
