#pragma once

// Ablation variants sharing the learner skeleton, and a seeded ablation grid runner.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "anq/dataset.hpp"
#include "anq/env.hpp"
#include "anq/exec.hpp"
#include "anq/learner.hpp"

namespace anq::variants {

enum class Variant { anq_default, mu_zero, mu_gaussian_noise, uniform_radius, lambda_zero, custom_radius };

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);

struct VariantSpec {
    Variant variant = Variant::anq_default;
    learn::TrainConfig base;
    /// Gaussian-noise mu: defaults 0.2 and 0.5 times the action bound.
    std::optional<double> sigma;
    std::optional<double> clip;
    learn::RadiusMultiplier f;  // custom_radius only

    /// Effective training config for an env with the given action bound.
    /// Throws InputError on invalid parameters.
    learn::TrainConfig config(double action_bound) const;
};

learn::LearnerState build_learner(const VariantSpec& spec, int state_dim, int action_dim, double action_bound,
                                  data::NormStats stats = {});

struct AblationCell {
    std::string label;
    VariantSpec spec;
};

struct AblationRow {
    std::string label;
    std::string variant;
    double lambda = 0.0;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    double final_score = 0.0;
    double mean_q = 0.0;
    double mean_mu_norm = 0.0;
    bool diverged = false;
    std::string error;
    learn::RunResult run;
};

struct CellSummary {
    std::string label;
    double score_mean = 0.0;
    double score_std = 0.0;
    double q_mean = 0.0;
    double q_std = 0.0;
    double mu_norm_mean = 0.0;
    int diverged = 0;
    int seeds = 0;
};

struct AblationReport {
    std::vector<AblationRow> rows;  // cell-major, then seed order

    std::vector<CellSummary> summarize() const;
    std::optional<CellSummary> find(const std::string& label) const;
    std::string csv() const;
    nlohmann::json to_json() const;
    void write(const std::filesystem::path& dir) const;  // ablation.csv + ablation.json
};

struct AblationOptions {
    learn::RunOptions run;
    Exec exec = Exec::parallel;
    /// When set, each (cell, seed) writes metrics.csv under dir/label/seed_N.
    std::optional<std::filesystem::path> out_dir;
};

/// Trains every (cell, seed) pair. The base config's seed is replaced by each
/// seed in turn. Failures are recorded per row and the grid continues.
AblationReport run_ablation(const std::vector<AblationCell>& cells, const std::vector<std::uint64_t>& seeds,
                            const data::Dataset& dataset, env::EnvName env_name, const AblationOptions& opts);

}  // namespace anq::variants
