#pragma once

// Desk-scale environments and scripted behavior policies.
//
//   point_maze_2d  2-D point in the unit square with a wall; reward 1 once on
//                  entering the goal disk, which also ends the episode.
//   reacher_1d     1-D position tracking a random target; dense reward
//                  1 - |x' - target| clipped at 0.
//   chain_tabular  8-state chain; continuous action thresholded at 0 into
//                  left/right. Also exported as an exact TabularMDP.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anq/tabular.hpp"

namespace anq::env {

enum class EnvName { point_maze_2d, reacher_1d, chain_tabular };

std::string to_string(EnvName name);
EnvName parse_env_name(std::string_view name);
const std::vector<EnvName>& all_envs();

struct EnvSpec {
    int state_dim = 1;
    int action_dim = 1;
    double action_bound = 1.0;
    int horizon = 1;
    double gamma = 0.99;
    double reward_max = 1.0;
    bool sparse_reward = false;
};

struct StepResult {
    std::vector<double> state;
    double reward = 0.0;
    bool done = false;
};

class Environment {
public:
    virtual ~Environment() = default;

    virtual EnvName name() const = 0;
    virtual const EnvSpec& spec() const = 0;
    virtual std::vector<double> reset(std::mt19937_64& rng) = 0;
    /// Actions are clipped to [-bound, bound] before they reach the dynamics.
    virtual StepResult step(std::span<const double> action) = 0;
    virtual std::vector<double> expert_action(std::span<const double> state) const = 0;
    virtual std::unique_ptr<Environment> clone() const = 0;

protected:
    std::vector<double> clip_action(std::span<const double> action) const;
};

std::unique_ptr<Environment> make_env(EnvName name);

/// The chain as an exact MDP (two actions: 0 = left, 1 = right).
oracle::TabularMDP chain_tabular_mdp();
/// Index of the discrete chain action a continuous action maps to.
int chain_action_index(double action);

enum class BehaviorPolicy { expert, medium, random };

std::string to_string(BehaviorPolicy policy);
BehaviorPolicy parse_behavior_policy(std::string_view name);

/// Gaussian noise scale of the medium behavior policy, as a fraction of the bound.
inline constexpr double kMediumNoiseFraction = 0.3;

struct Transition {
    std::vector<float> s;
    std::vector<float> a;
    float r = 0.0f;
    std::vector<float> s_next;
    bool done = false;
};

/// Exactly `steps` transitions from repeated episodes, each truncated at the
/// horizon. Truncation is not a terminal (done stays false).
std::vector<Transition> rollout_behavior(const Environment& env, BehaviorPolicy policy, std::int64_t steps,
                                         std::uint64_t seed);

using PolicyFn = std::function<std::vector<double>(std::span<const double> state)>;

/// Mean undiscounted episode return of a deterministic policy.
double average_return(const Environment& env, const PolicyFn& policy, int episodes, std::uint64_t seed);

/// Mean return of a scripted behavior policy (random draws from the same seed).
double average_behavior_return(const Environment& env, BehaviorPolicy policy, int episodes, std::uint64_t seed);

struct ReferenceReturns {
    double random_return = 0.0;
    double expert_return = 0.0;
};

/// Computed once per environment (fixed seed, 200 episodes) and cached.
const ReferenceReturns& reference_returns(EnvName name);

/// 100 * (ret - random) / (expert - random). Throws InputError unless expert > random.
double normalized_score(double mean_return, double random_return, double expert_return);

}  // namespace anq::env
