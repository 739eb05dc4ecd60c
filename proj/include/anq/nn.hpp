#pragma once

// Small dense feed-forward networks with analytic gradients, Adam, and Polyak
// averaging. Batches are stored column-wise: an (features x batch) matrix.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace anq::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

enum class OutputActivation : std::uint8_t { identity = 0, bounded = 1 };

struct NetSpec {
    int input_dim = 1;
    std::vector<int> hidden_dims;
    int output_dim = 1;
    OutputActivation output_activation = OutputActivation::identity;
    double scale = 1.0;  // only used by the bounded activation: y = scale * tanh(z)

    /// Throws InputError when a dimension is < 1 or the bound is not positive.
    void validate() const;
    std::size_t num_layers() const { return hidden_dims.size() + 1; }
    int layer_input(std::size_t layer) const;
    int layer_output(std::size_t layer) const;
    std::size_t param_count() const;

    bool operator==(const NetSpec&) const = default;

    static NetSpec mlp(int input_dim, std::vector<int> hidden, int output_dim) {
        return NetSpec{input_dim, std::move(hidden), output_dim, OutputActivation::identity, 1.0};
    }
    static NetSpec bounded_mlp(int input_dim, std::vector<int> hidden, int output_dim, double scale) {
        return NetSpec{input_dim, std::move(hidden), output_dim, OutputActivation::bounded, scale};
    }
};

/// Parameters live in one flat vector. Layer l occupies W_l (out x in,
/// column-major) followed by b_l, so equal specs give element-wise comparable
/// layouts and Adam/Polyak/checkpointing operate on the flat block.
class NetParams {
public:
    NetParams() = default;
    explicit NetParams(NetSpec spec);

    const NetSpec& spec() const { return spec_; }
    Vector& flat() { return values_; }
    const Vector& flat() const { return values_; }
    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

    Eigen::Map<Matrix> weight(std::size_t layer);
    Eigen::Map<const Matrix> weight(std::size_t layer) const;
    Eigen::Map<Vector> bias(std::size_t layer);
    Eigen::Map<const Vector> bias(std::size_t layer) const;

    std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
    std::size_t bias_offset(std::size_t layer) const;

    bool all_finite() const { return values_.allFinite(); }

private:
    NetSpec spec_;
    Vector values_;
    std::vector<std::size_t> offsets_;
};

/// Uniform fan-in initialisation: every entry of layer l drawn from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
NetParams init_uniform_fan_in(const NetSpec& spec, std::mt19937_64& rng);

/// Activations kept by forward_batch for the backward pass.
struct ForwardCache {
    std::vector<Matrix> inputs;       // inputs[l] is the input to layer l
    std::vector<Matrix> preact;       // preact[l] = W_l inputs[l] + b_l
    Matrix output;
    bool valid = false;
};

Matrix forward_batch(const NetParams& params, const Matrix& x, ForwardCache* cache = nullptr);
Vector forward(const NetParams& params, const Vector& x);

struct Gradients {
    Vector params;  // same layout as NetParams::flat(); empty if not requested
    Matrix input;   // (input_dim x batch)
};

/// Gradients of sum_j upstream(:, j) . output(:, j) with respect to every
/// parameter and every input column. Throws StateError without a valid cache.
Gradients backward(const NetParams& params, const ForwardCache& cache, const Matrix& upstream,
                   bool want_param_grads = true);

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::optional<std::int64_t> cosine_horizon;  // decay lr to 0 over this many steps
};

class OptimState {
public:
    OptimState() = default;
    OptimState(std::size_t n_params, AdamConfig config);

    double current_lr() const;
    std::int64_t step() const { return step_; }
    const AdamConfig& config() const { return config_; }
    const Vector& first_moment() const { return m_; }
    const Vector& second_moment() const { return v_; }

private:
    friend void adam_step(NetParams&, const Vector&, OptimState&);
    AdamConfig config_;
    Vector m_;
    Vector v_;
    std::int64_t step_ = 0;
};

/// One bias-corrected Adam update. Throws NumericError on a non-finite gradient
/// and InputError on a shape mismatch.
void adam_step(NetParams& params, const Vector& grads, OptimState& opt);

/// target <- (1 - xi) target + xi online.
void polyak_update(NetParams& target, const NetParams& online, double xi);

// Checkpoint: "ANQP", u16 version, NetSpec, u64 count, little-endian f32 block.
void save_params(const std::filesystem::path& path, const NetParams& params);
NetParams load_params(const std::filesystem::path& path);

}  // namespace anq::nn
