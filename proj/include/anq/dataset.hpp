#pragma once

// Offline datasets: columnar float storage, state-normalization statistics,
// expert/random mixtures, random discarding, and the "ANQD" file format.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "anq/env.hpp"

namespace anq::data {

using env::Transition;

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;  // dimensions with std < 1e-6 store 1.0

    bool operator==(const NormStats&) const = default;
};

/// Immutable after construction. Row i of each block is transition i.
struct Dataset {
    std::string env_tag;
    int state_dim = 0;
    int action_dim = 0;
    std::vector<float> states;       // n x state_dim
    std::vector<float> actions;      // n x action_dim
    std::vector<float> rewards;      // n
    std::vector<float> next_states;  // n x state_dim
    std::vector<std::uint8_t> dones; // n
    NormStats stats;
    nlohmann::json provenance = nlohmann::json::object();

    std::size_t size() const { return rewards.size(); }
    Transition transition(std::size_t i) const;
    std::span<const float> state(std::size_t i) const;
    std::span<const float> action(std::size_t i) const;

    bool operator==(const Dataset&) const = default;
};

/// Builds a dataset and computes its normalization stats over the stored
/// states. Throws InputError on an empty list or inconsistent dimensions.
Dataset make_dataset(std::string env_tag, std::span<const Transition> transitions,
                     nlohmann::json provenance = nlohmann::json::object());

NormStats compute_stats(const std::vector<float>& states, int state_dim);

std::vector<double> normalize_state(const NormStats& stats, std::span<const double> s);

/// Generate `steps` transitions of a scripted behavior policy.
Dataset generate_dataset(env::EnvName name, env::BehaviorPolicy policy, std::int64_t steps, std::uint64_t seed);

struct MixtureRecipe {
    double expert_ratio = 0.5;
    std::int64_t total_size = 1000;
    double discard_ratio = 0.0;

    /// Throws InputError when ratios leave their ranges or the result is empty.
    void validate() const;
    std::int64_t expert_count() const;
    std::int64_t result_size() const;
};

/// round(rho n) expert and n - round(rho n) random transitions, drawn without
/// replacement when the pool is large enough (with replacement otherwise),
/// shuffled, then thinned by discard_ratio.
Dataset mix_datasets(const Dataset& expert, const Dataset& random, const MixtureRecipe& recipe, std::uint64_t seed);

/// Keeps round(n (1 - ratio)) transitions chosen uniformly at random, in
/// their original order. ratio == 0 returns an identical copy.
Dataset discard_transitions(const Dataset& base, double ratio, std::uint64_t seed);

/// Layout: "ANQD", u16 version, u32-length env tag, u64 n, u32 state_dim,
/// u32 action_dim, f32 blocks S, A, R, S', u8 DONE, u64-length JSON trailer
/// (provenance and normalization stats). All little-endian.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace anq::data
