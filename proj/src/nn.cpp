#include "anq/nn.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "anq/errors.hpp"
#include "binary_io.hpp"

namespace anq::nn {

namespace {

constexpr char kCheckpointMagic[4] = {'A', 'N', 'Q', 'P'};
constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace

void NetSpec::validate() const {
    if (input_dim < 1 || output_dim < 1) {
        throw InputError("NetSpec: input and output dims must be >= 1");
    }
    for (int h : hidden_dims) {
        if (h < 1) throw InputError("NetSpec: hidden dims must be >= 1");
    }
    if (output_activation == OutputActivation::bounded && !(scale > 0.0 && std::isfinite(scale))) {
        throw InputError("NetSpec: bounded output needs a positive finite scale");
    }
}

int NetSpec::layer_input(std::size_t layer) const {
    return layer == 0 ? input_dim : hidden_dims.at(layer - 1);
}

int NetSpec::layer_output(std::size_t layer) const {
    return layer == hidden_dims.size() ? output_dim : hidden_dims.at(layer);
}

std::size_t NetSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        const auto in = static_cast<std::size_t>(layer_input(l));
        const auto out = static_cast<std::size_t>(layer_output(l));
        n += out * in + out;
    }
    return n;
}

NetParams::NetParams(NetSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t offset = 0;
    for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
        offsets_.push_back(offset);
        const auto in = static_cast<std::size_t>(spec_.layer_input(l));
        const auto out = static_cast<std::size_t>(spec_.layer_output(l));
        offset += out * in + out;
    }
    values_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

std::size_t NetParams::bias_offset(std::size_t layer) const {
    return offsets_.at(layer) +
           static_cast<std::size_t>(spec_.layer_output(layer)) * static_cast<std::size_t>(spec_.layer_input(layer));
}

Eigen::Map<Matrix> NetParams::weight(std::size_t layer) {
    return {values_.data() + offsets_.at(layer), spec_.layer_output(layer), spec_.layer_input(layer)};
}

Eigen::Map<const Matrix> NetParams::weight(std::size_t layer) const {
    return {values_.data() + offsets_.at(layer), spec_.layer_output(layer), spec_.layer_input(layer)};
}

Eigen::Map<Vector> NetParams::bias(std::size_t layer) {
    return {values_.data() + bias_offset(layer), spec_.layer_output(layer)};
}

Eigen::Map<const Vector> NetParams::bias(std::size_t layer) const {
    return {values_.data() + bias_offset(layer), spec_.layer_output(layer)};
}

NetParams init_uniform_fan_in(const NetSpec& spec, std::mt19937_64& rng) {
    NetParams params(spec);
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_input(l)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        auto w = params.weight(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
        }
        auto b = params.bias(l);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng);
    }
    return params;
}

Matrix forward_batch(const NetParams& params, const Matrix& x, ForwardCache* cache) {
    const NetSpec& spec = params.spec();
    if (x.rows() != spec.input_dim) {
        throw InputError("forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(spec.input_dim));
    }
    if (cache != nullptr) {
        cache->inputs.resize(spec.num_layers());
        cache->preact.resize(spec.num_layers());
        cache->valid = false;
    }

    Matrix h = x;
    const std::size_t last = spec.num_layers() - 1;
    for (std::size_t l = 0; l <= last; ++l) {
        Matrix z = params.weight(l) * h;
        z.colwise() += params.bias(l);
        if (cache != nullptr) {
            cache->inputs[l] = std::move(h);
            cache->preact[l] = z;
        }
        if (l < last) {
            h = z.cwiseMax(0.0);
        } else if (spec.output_activation == OutputActivation::bounded) {
            h = spec.scale * z.array().tanh();
        } else {
            h = std::move(z);
        }
    }
    if (cache != nullptr) {
        cache->output = h;
        cache->valid = true;
    }
    return h;
}

Vector forward(const NetParams& params, const Vector& x) {
    return forward_batch(params, Matrix(x));
}

Gradients backward(const NetParams& params, const ForwardCache& cache, const Matrix& upstream,
                   bool want_param_grads) {
    const NetSpec& spec = params.spec();
    if (!cache.valid || cache.preact.size() != spec.num_layers()) {
        throw StateError("backward: no forward cache for these parameters");
    }
    if (upstream.rows() != spec.output_dim || upstream.cols() != cache.output.cols()) {
        throw InputError("backward: upstream gradient shape does not match the output");
    }

    Gradients grads;
    if (want_param_grads) grads.params = Vector::Zero(static_cast<Eigen::Index>(params.size()));

    const std::size_t last = spec.num_layers() - 1;
    Matrix delta;
    if (spec.output_activation == OutputActivation::bounded) {
        const auto t = cache.output.array() / spec.scale;
        delta = (upstream.array() * spec.scale * (1.0 - t.square())).matrix();
    } else {
        delta = upstream;
    }

    for (std::size_t l = last + 1; l-- > 0;) {
        if (l < last) {
            delta = (delta.array() * (cache.preact[l].array() > 0.0).cast<double>()).matrix();
        }
        if (want_param_grads) {
            Eigen::Map<Matrix> gw(grads.params.data() + params.weight_offset(l), spec.layer_output(l),
                                  spec.layer_input(l));
            Eigen::Map<Vector> gb(grads.params.data() + params.bias_offset(l), spec.layer_output(l));
            gw.noalias() = delta * cache.inputs[l].transpose();
            gb = delta.rowwise().sum();
        }
        delta = params.weight(l).transpose() * delta;
    }
    grads.input = std::move(delta);
    return grads;
}

OptimState::OptimState(std::size_t n_params, AdamConfig config)
    : config_(config),
      m_(Vector::Zero(static_cast<Eigen::Index>(n_params))),
      v_(Vector::Zero(static_cast<Eigen::Index>(n_params))) {
    if (config_.cosine_horizon && *config_.cosine_horizon < 1) {
        throw InputError("Adam: cosine horizon must be >= 1");
    }
}

double OptimState::current_lr() const {
    if (!config_.cosine_horizon) return config_.lr;
    const double horizon = static_cast<double>(*config_.cosine_horizon);
    const double t = std::min(static_cast<double>(step_), horizon);
    return config_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t / horizon));
}

void adam_step(NetParams& params, const Vector& grads, OptimState& opt) {
    if (grads.size() != params.flat().size() || opt.m_.size() != grads.size()) {
        throw InputError("adam_step: gradient, moment, and parameter sizes differ");
    }
    if (!grads.allFinite()) {
        throw NumericError("adam_step: non-finite gradient at optimizer step " + std::to_string(opt.step_));
    }
    const AdamConfig& c = opt.config_;
    const double lr = opt.current_lr();
    opt.step_ += 1;
    const double t = static_cast<double>(opt.step_);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);

    opt.m_ = c.beta1 * opt.m_ + (1.0 - c.beta1) * grads;
    opt.v_ = c.beta2 * opt.v_ + (1.0 - c.beta2) * grads.cwiseProduct(grads);
    params.flat().array() -=
        lr * (opt.m_.array() / bc1) / ((opt.v_.array() / bc2).sqrt() + c.eps);
}

void polyak_update(NetParams& target, const NetParams& online, double xi) {
    if (!(target.spec() == online.spec())) {
        throw InputError("polyak_update: target and online specs differ");
    }
    if (!(xi >= 0.0 && xi <= 1.0)) {
        throw InputError("polyak_update: rate must lie in [0, 1]");
    }
    if (xi == 0.0) return;
    if (xi == 1.0) {
        target.flat() = online.flat();
        return;
    }
    target.flat() = (1.0 - xi) * target.flat() + xi * online.flat();
}

void save_params(const std::filesystem::path& path, const NetParams& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open checkpoint for writing: " + path.string());
    io::BinaryWriter w(out);
    const NetSpec& spec = params.spec();
    for (char c : kCheckpointMagic) w.put(c);
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint32_t>(spec.input_dim));
    w.put(static_cast<std::uint32_t>(spec.hidden_dims.size()));
    for (int h : spec.hidden_dims) w.put(static_cast<std::uint32_t>(h));
    w.put(static_cast<std::uint32_t>(spec.output_dim));
    w.put(static_cast<std::uint8_t>(spec.output_activation));
    w.put(spec.scale);
    w.put(static_cast<std::uint64_t>(params.size()));
    std::vector<float> block(params.size());
    for (std::size_t i = 0; i < block.size(); ++i) block[i] = static_cast<float>(params.flat()[static_cast<Eigen::Index>(i)]);
    w.put_array(block);
    if (!out) throw InputError("failed writing checkpoint: " + path.string());
}

NetParams load_params(const std::filesystem::path& path) {
    io::BinaryReader r(io::read_file(path.string()));
    for (char expected : kCheckpointMagic) {
        const auto at = r.offset();
        if (r.get<char>("magic") != expected) throw FormatError("checkpoint magic mismatch", at);
    }
    const auto version_at = r.offset();
    if (r.get<std::uint16_t>("version") != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version", version_at);
    }
    NetSpec spec;
    spec.input_dim = static_cast<int>(r.get<std::uint32_t>("input_dim"));
    const auto n_hidden_at = r.offset();
    const auto n_hidden = r.get<std::uint32_t>("hidden count");
    if (n_hidden > 64) throw FormatError("implausible hidden layer count", n_hidden_at);
    for (std::uint32_t i = 0; i < n_hidden; ++i) {
        spec.hidden_dims.push_back(static_cast<int>(r.get<std::uint32_t>("hidden dim")));
    }
    spec.output_dim = static_cast<int>(r.get<std::uint32_t>("output_dim"));
    const auto act_at = r.offset();
    const auto act = r.get<std::uint8_t>("activation");
    if (act > 1) throw FormatError("unknown output activation", act_at);
    spec.output_activation = static_cast<OutputActivation>(act);
    spec.scale = r.get<double>("scale");
    const auto spec_at = r.offset();
    try {
        spec.validate();
    } catch (const InputError& e) {
        throw FormatError(e.what(), spec_at);
    }
    NetParams params(spec);
    const auto count_at = r.offset();
    const auto count = r.get<std::uint64_t>("parameter count");
    if (count != params.size()) throw FormatError("parameter count does not match spec", count_at);
    const auto block = r.get_array<float>(count, "parameter block");
    for (std::size_t i = 0; i < block.size(); ++i) params.flat()[static_cast<Eigen::Index>(i)] = block[i];
    return params;
}

}  // namespace anq::nn
