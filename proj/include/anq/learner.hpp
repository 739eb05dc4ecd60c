#pragma once

// Adaptive neighborhood-constrained Q-learning: value/critic/auxiliary/policy
// losses with analytic gradients and the per-iteration update loop.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "anq/dataset.hpp"
#include "anq/env.hpp"
#include "anq/nn.hpp"

namespace anq::learn {

using nn::Matrix;
using nn::RowVector;
using nn::Vector;

enum class RadiusMode { adaptive_exp_advantage, uniform, custom };
/// How the target-side action perturbation is produced.
enum class MuMode { learned, zero, gaussian_noise };

std::string to_string(RadiusMode m);
std::string to_string(MuMode m);

/// Radius multiplier f(s, a, advantage) > 0 for the custom mode; the penalty
/// weight becomes clip(1 / f). `s` is the normalized network input state.
using RadiusMultiplier =
    std::function<double(std::span<const double> s, std::span<const double> a, double advantage)>;

struct TrainConfig {
    double lambda = 0.1;
    double alpha = 1.0;
    double tau = 0.7;
    double beta = 3.0;
    double gamma = 0.99;
    double xi = 0.005;
    double lr = 3e-4;
    int batch_size = 256;
    std::int64_t iterations = 50000;
    int policy_update_freq = 2;
    int n_critics = 4;
    std::array<double, 2> adv_weight_clip{0.01, 30.0};
    std::array<double, 2> policy_weight_clip{0.0, 3.0};
    std::uint64_t seed = 0;
    RadiusMode radius_mode = RadiusMode::adaptive_exp_advantage;
    RadiusMultiplier custom_f;
    MuMode mu_mode = MuMode::learned;
    double noise_sigma = 0.2;  // gaussian_noise mode, absolute units
    double noise_clip = 0.5;
    std::vector<int> hidden{64, 64};
    double reward_shift = 0.0;   // added to every stored reward at training time
    double reward_max = 1.0;     // for the divergence bound
    bool cosine_policy_lr = true;

    /// Per-environment defaults: dense tasks use tau 0.7 / beta 3, the sparse
    /// goal task tau 0.9 / beta 10 with the wider policy clip and a -1 reward shift.
    static TrainConfig defaults_for(env::EnvName name);
    /// Throws InputError on out-of-range values.
    void validate() const;
    double divergence_bound() const { return 10.0 * reward_max / (1.0 - gamma); }
    nlohmann::json to_json() const;
};

/// (loss value, derivative) of |tau - 1(x < 0)| x^2.
double expectile_loss(double x, double tau);
double expectile_grad(double x, double tau);

/// clip(exp(alpha (q_target - v)), lo, hi), evaluated as 1 / exp(-x) with the
/// exponent capped at log(hi) + 1.
double adaptive_radius_weight(double q_target, double v, double alpha, std::array<double, 2> clip);
/// clip(exp(min(beta adv, log(hi) + 1)), lo, hi).
double policy_weight(double advantage, double beta, std::array<double, 2> clip);

/// Anything that maps (states, actions) columns to Q values and dQ/da.
class ActionValue {
public:
    virtual ~ActionValue() = default;
    /// states: (state_dim x B), actions: (action_dim x B). action_grad is
    /// filled (action_dim x B) only when requested.
    virtual RowVector evaluate(const Matrix& states, const Matrix& actions, Matrix* action_grad) const = 0;
};

/// Min over an ensemble of critic nets taking s (+) a.
class EnsembleCritic final : public ActionValue {
public:
    explicit EnsembleCritic(const std::vector<nn::NetParams>& nets) : nets_(nets) {}
    RowVector evaluate(const Matrix& states, const Matrix& actions, Matrix* action_grad) const override;

private:
    const std::vector<nn::NetParams>& nets_;
};

/// A frozen closed-form critic, used by synthetic checks.
class FunctionCritic final : public ActionValue {
public:
    using Fn = std::function<double(std::span<const double> s, std::span<const double> a, double* grad)>;
    explicit FunctionCritic(Fn fn) : fn_(std::move(fn)) {}
    RowVector evaluate(const Matrix& states, const Matrix& actions, Matrix* action_grad) const override;

private:
    Fn fn_;
};

/// Dataset converted to training form: normalized states, shifted rewards.
struct TrainingData {
    Matrix states;       // state_dim x n
    Matrix actions;      // action_dim x n
    Matrix next_states;  // state_dim x n
    RowVector rewards;
    RowVector dones;
    data::NormStats stats;

    std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
    static TrainingData from(const data::Dataset& d, double reward_shift);
};

struct Batch {
    Matrix s, a, s_next;
    RowVector r, done;
    Matrix noise_v, noise_pi;  // gaussian_noise mode only

    int size() const { return static_cast<int>(r.size()); }
};

struct LearnerState {
    TrainConfig cfg;
    int state_dim = 0;
    int action_dim = 0;
    double action_bound = 1.0;
    data::NormStats stats;

    std::vector<nn::NetParams> q, q_target;
    std::vector<nn::OptimState> q_opt;
    nn::NetParams v;
    nn::OptimState v_opt;
    nn::NetParams mu, mu_target;  // empty unless mu_mode == learned
    nn::OptimState mu_opt;
    nn::NetParams pi;
    nn::OptimState pi_opt;
    std::int64_t iteration = 0;

    /// When set, replaces both online and target critics and the critic update is skipped.
    std::shared_ptr<const ActionValue> frozen_critic;

    std::mt19937_64 batch_rng;
    std::mt19937_64 noise_rng;

    bool has_mu() const { return cfg.mu_mode == MuMode::learned; }
};

/// Networks: critics take s (+) a, mu takes s (+) a with output bound 2 * action_bound,
/// pi takes s with output bound action_bound. Each net draws from its own seed stream.
LearnerState init_learner(const TrainConfig& cfg, int state_dim, int action_dim, double action_bound,
                          data::NormStats stats = {});

Batch sample_batch(LearnerState& state, const TrainingData& data);
/// Rows [first, first + count) of the data as a batch (no noise).
Batch slice_batch(const TrainingData& data, std::size_t first, std::size_t count);

/// Online and target critic views of a state.
std::shared_ptr<const ActionValue> online_critic(const LearnerState& state);
std::shared_ptr<const ActionValue> target_critic(const LearnerState& state);

/// clip(a + perturbation, -bound, bound), with the perturbation from the
/// online or target auxiliary net (or zero / noise per mu_mode).
Matrix perturbed_actions(const LearnerState& state, const Batch& b, bool use_target, const Matrix* noise,
                         Matrix* raw_delta = nullptr);

struct MuLoss {
    double loss = 0.0;
    Vector grad;
    double mean_mu_norm = 0.0;
    RowVector weights;
};
struct VLoss {
    double loss = 0.0;
    Vector grad;
    double mean_v = 0.0;
};
struct QLoss {
    double loss = 0.0;
    std::vector<Vector> grads;
    double mean_q = 0.0;
};
struct PiLoss {
    double loss = 0.0;
    Vector grad;
    RowVector weights;
};

/// -mean[Q(s, clip(a + mu)) - lambda w ||mu||]. Requires a learned mu.
MuLoss mu_loss(const LearnerState& state, const Batch& b);
/// mean expectile loss of Q'(s, clip(a + mu')) - V(s).
VLoss v_loss(const LearnerState& state, const Batch& b);
/// sum over critics of mean (Q_k(s, a) - r - gamma (1 - done) V(s'))^2.
QLoss q_loss(const LearnerState& state, const Batch& b);
/// mean w ||clip(a + mu) - pi(s)||^2.
PiLoss pi_loss(const LearnerState& state, const Batch& b);

/// Penalty weights w(s, a) for the batch (1 in uniform mode).
RowVector penalty_weights(const LearnerState& state, const Batch& b);

struct StepMetrics {
    std::int64_t iteration = 0;
    double v_loss = 0.0;
    double q_loss = 0.0;
    double mu_loss = 0.0;
    double pi_loss = 0.0;  // NaN on iterations without a policy update
    double mean_q = 0.0;
    double mean_v = 0.0;
    double mean_mu_norm = 0.0;
    bool pi_updated = false;
};

/// One iteration: V, Q, mu, pi (every policy_update_freq), then Polyak
/// updates of the target critic and target mu. Throws NumericError tagged
/// with the iteration index.
StepMetrics train_step(LearnerState& state, const TrainingData& data);

/// Runs the iteration with a caller-supplied batch.
StepMetrics train_step(LearnerState& state, const Batch& batch);

std::vector<double> policy_action(const LearnerState& state, std::span<const double> raw_state);

struct EvalResult {
    double mean_return = 0.0;
    double normalized_score = 0.0;
};
EvalResult evaluate_policy(const LearnerState& state, const env::Environment& env, int episodes, std::uint64_t seed);

/// mean |Q(s, a)| of the online critic over the first min(n, 1024) rows.
double eval_batch_mean_abs_q(const LearnerState& state, const TrainingData& data);
double eval_batch_mean_q(const LearnerState& state, const TrainingData& data);
/// mean ||mu(s, a)|| over the same rows (0 without a learned mu); the target
/// auxiliary net when use_target is set.
double eval_batch_mean_mu_norm(const LearnerState& state, const TrainingData& data, bool use_target = false);

struct RunOptions {
    std::int64_t eval_every = 5000;
    int eval_episodes = 10;
    std::int64_t log_every = 100;
    std::uint64_t eval_seed = 12345;
    std::optional<std::filesystem::path> metrics_csv;
};

struct EvalPoint {
    std::int64_t iteration = 0;
    double mean_return = 0.0;
    double normalized_score = 0.0;
};

struct RunResult {
    std::vector<StepMetrics> logged;
    std::vector<EvalPoint> evals;
    bool diverged = false;
    std::string divergence_reason;
    double final_score = 0.0;
    double final_return = 0.0;
    double final_mean_q = 0.0;
    double final_mean_mu_norm = 0.0;
    std::int64_t iterations_done = 0;
};

/// Trains for cfg.iterations, evaluating every eval_every iterations and at the
/// end. Divergence (mean |Q| on the eval batch above the configured bound, or a
/// numeric failure) stops the run and is flagged.
RunResult run_training(LearnerState& state, const TrainingData& data, const env::Environment& env,
                       const RunOptions& opts);

/// CSV header and row format shared with the metrics file.
std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m, std::optional<double> eval_score);

/// One ANQP file per network plus manifest.json.
void save_checkpoint(const LearnerState& state, const std::filesystem::path& dir, const nlohmann::json& summary);
/// Restores networks and the iteration counter into an initialized state of the same shape.
void load_checkpoint(LearnerState& state, const std::filesystem::path& dir);

}  // namespace anq::learn
