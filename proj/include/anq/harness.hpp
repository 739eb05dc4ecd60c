#pragma once

// Experiment orchestration: INI configs, seeded runs, the noisy-mixture and
// limited-data protocols, verification reports, and plot bundles.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "anq/dataset.hpp"
#include "anq/env.hpp"
#include "anq/exec.hpp"
#include "anq/geometry.hpp"
#include "anq/learner.hpp"
#include "anq/variants.hpp"

namespace anq::harness {

enum class ExperimentKind { train, sweep_lambda, sweep_alpha, noisy_mixture, limited_data, verify_theory, verify_geometry };

std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(std::string_view name);

struct EvalSchedule {
    std::int64_t every = 5000;
    int episodes = 10;
    std::int64_t log_every = 100;
};

struct DataSource {
    std::optional<std::filesystem::path> path;  // load instead of generating
    env::BehaviorPolicy policy = env::BehaviorPolicy::expert;
    std::int64_t size = 20000;
    std::uint64_t seed = 1;
    data::MixtureRecipe mixture;  // expert_ratio / discard used by the mixture protocols
};

struct VerifySettings {
    std::int64_t instances = 1000;
    std::vector<double> epsilons{0.1, 0.2};
    std::int64_t trials = 200;
    double delta = 0.1;
    double grid_step_fraction = 0.1;  // grid step = fraction * eps
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::train;
    env::EnvName env = env::EnvName::reacher_1d;
    DataSource data;
    variants::VariantSpec variant;
    std::vector<std::uint64_t> seeds{0};
    EvalSchedule eval;
    std::vector<double> ratios;
    std::vector<double> discards;
    std::vector<double> lambdas;
    std::vector<double> alphas;
    std::vector<variants::Variant> compare{variants::Variant::anq_default, variants::Variant::mu_zero};
    VerifySettings verify;

    /// Env-specific training defaults with the desk-scale iteration budget.
    static ExperimentConfig defaults(ExperimentKind kind, env::EnvName env);
    void validate() const;
    /// Every resolved field; two configs hash equal iff this is equal.
    nlohmann::json to_json() const;
    std::string hash() const;
};

constexpr std::int64_t kDeskIterations = 50000;

/// Sections: [experiment] [data] [train] [eval] [sweep] [verify].
/// Unknown sections or keys, bad values and syntax errors throw InputError
/// (FormatError with the line number for syntax errors).
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Base dataset for the config (loaded or generated from data.policy/size/seed).
data::Dataset base_dataset(const ExperimentConfig& cfg);
/// Expert/random mixture per the recipe; pools are generated at recipe size.
data::Dataset mixture_dataset(const ExperimentConfig& cfg, double expert_ratio);

struct SeedRecord {
    std::uint64_t seed = 0;
    std::vector<learn::EvalPoint> evals;
    double final_score = 0.0;
    double final_mean_q = 0.0;
    bool diverged = false;
};

struct RunRecord {
    std::string config_hash;
    std::int64_t iteration_budget = 0;
    std::vector<SeedRecord> seeds;
    double score_mean = 0.0;
    double score_std = 0.0;
    nlohmann::json to_json() const;
};

/// Trains the configured variant for each seed; writes per-seed metrics CSVs,
/// checkpoints and run_record.json under out_dir.
RunRecord run_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, Exec exec = Exec::parallel);

struct ProtocolCell {
    double x = 0.0;  // ratio, discard ratio, lambda or alpha
    std::string label;
    variants::CellSummary summary;
    std::int64_t dataset_size = 0;
};

struct ProtocolReport {
    std::string protocol;
    std::string config_hash;
    std::vector<ProtocolCell> cells;
    std::vector<variants::AblationRow> rows;
    nlohmann::json to_json() const;
    std::optional<variants::CellSummary> find(double x, const std::string& label) const;
};

/// For each ratio: builds the mixture and trains each compared variant.
ProtocolReport run_noisy_mixture(const ExperimentConfig& cfg, const std::vector<double>& ratios,
                                 const std::vector<std::uint64_t>& seeds, const std::optional<std::filesystem::path>& out,
                                 Exec exec = Exec::parallel);

/// For each discard ratio: thins the base dataset and trains one cell per
/// configured lambda (the base lambda when the list is empty).
ProtocolReport run_limited_data(const ExperimentConfig& cfg, const std::vector<double>& discards,
                                const std::vector<std::uint64_t>& seeds, const std::optional<std::filesystem::path>& out,
                                Exec exec = Exec::parallel);

/// lambda or alpha sweep of the default variant on the base dataset. A
/// lambda of 0 trains the lambda_zero variant.
ProtocolReport run_sweep(const ExperimentConfig& cfg, bool sweep_alpha, const std::vector<double>& values,
                         const std::vector<std::uint64_t>& seeds, const std::optional<std::filesystem::path>& out,
                         Exec exec = Exec::parallel);

struct VerificationReport {
    bool passed = true;
    nlohmann::json report;
};

VerificationReport verify_theory(std::uint64_t seed, std::int64_t instances, const std::vector<double>& epsilons,
                                 Exec exec = Exec::parallel);
VerificationReport verify_geometry(std::uint64_t seed, const VerifySettings& settings, Exec exec = Exec::parallel);

/// Parsed metrics CSV: a header and rows of optional numbers.
struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> rows;
};
/// Throws FormatError carrying the 1-based line number.
MetricsTable parse_metrics_csv(const std::string& text);
MetricsTable read_metrics_csv(const std::filesystem::path& path);

struct PlotBundle {
    std::filesystem::path script;
    std::vector<std::filesystem::path> data_files;
    std::vector<std::string> curves;  // metric columns plotted
};

/// Copies the metrics files into out_dir/data, writes aggregate.csv (mean and
/// std per iteration across files) for multi-file input, and a plot.py that
/// reads only the bundled CSVs. Nothing is rendered here.
PlotBundle emit_plots(const std::vector<std::filesystem::path>& metrics_files, const std::filesystem::path& out_dir);

/// ANQLAB_OUT when set, else the given directory.
std::filesystem::path resolve_out_dir(const std::filesystem::path& requested);

}  // namespace anq::harness
