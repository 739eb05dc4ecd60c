#include "anq/variants.hpp"

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <fstream>
#include <limits>

#include "anq/errors.hpp"

namespace anq::variants {

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::anq_default: return "anq_default";
        case Variant::mu_zero: return "mu_zero";
        case Variant::mu_gaussian_noise: return "mu_gaussian_noise";
        case Variant::uniform_radius: return "uniform_radius";
        case Variant::lambda_zero: return "lambda_zero";
        case Variant::custom_radius: return "custom_radius";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (auto v : {Variant::anq_default, Variant::mu_zero, Variant::mu_gaussian_noise, Variant::uniform_radius,
                   Variant::lambda_zero, Variant::custom_radius}) {
        if (to_string(v) == name) return v;
    }
    throw InputError("unknown variant: " + std::string(name));
}

learn::TrainConfig VariantSpec::config(double action_bound) const {
    learn::TrainConfig c = base;
    if (variant != Variant::mu_gaussian_noise && (sigma || clip)) {
        throw InputError("noise parameters only apply to mu_gaussian_noise");
    }
    if (variant != Variant::custom_radius && f) throw InputError("a radius function only applies to custom_radius");
    switch (variant) {
        case Variant::anq_default: break;
        case Variant::mu_zero: c.mu_mode = learn::MuMode::zero; break;
        case Variant::mu_gaussian_noise:
            c.mu_mode = learn::MuMode::gaussian_noise;
            c.noise_sigma = sigma.value_or(0.2 * action_bound);
            c.noise_clip = clip.value_or(0.5 * action_bound);
            if (!(c.noise_sigma >= 0.0) || !(c.noise_clip >= 0.0)) throw InputError("noise sigma/clip must be >= 0");
            break;
        case Variant::uniform_radius:
            c.alpha = 0.0;
            c.radius_mode = learn::RadiusMode::uniform;
            break;
        case Variant::lambda_zero: c.lambda = 0.0; break;
        case Variant::custom_radius:
            if (!f) throw InputError("custom_radius needs a radius function");
            c.radius_mode = learn::RadiusMode::custom;
            c.custom_f = f;
            break;
    }
    c.validate();
    return c;
}

learn::LearnerState build_learner(const VariantSpec& spec, int state_dim, int action_dim, double action_bound,
                                  data::NormStats stats) {
    return learn::init_learner(spec.config(action_bound), state_dim, action_dim, action_bound, std::move(stats));
}

// ---------------------------------------------------------------- report

std::vector<CellSummary> AblationReport::summarize() const {
    std::vector<CellSummary> out;
    for (const auto& row : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const CellSummary& c) { return c.label == row.label; });
        if (it == out.end()) {
            out.push_back({});
            out.back().label = row.label;
        }
    }
    for (auto& cell : out) {
        std::vector<double> scores, qs, mus;
        for (const auto& row : rows) {
            if (row.label != cell.label) continue;
            ++cell.seeds;
            if (row.diverged) ++cell.diverged;
            if (row.error.empty()) {
                scores.push_back(row.final_score);
                qs.push_back(row.mean_q);
                mus.push_back(row.mean_mu_norm);
            }
        }
        cell.score_mean = mean_of(scores);
        cell.score_std = std_of(scores);
        cell.q_mean = mean_of(qs);
        cell.q_std = std_of(qs);
        cell.mu_norm_mean = mean_of(mus);
    }
    return out;
}

std::optional<CellSummary> AblationReport::find(const std::string& label) const {
    for (auto& c : summarize()) {
        if (c.label == label) return c;
    }
    return std::nullopt;
}

std::string AblationReport::csv() const {
    std::string out = "label,variant,lambda,alpha,seed,final_score,mean_q,mean_mu_norm,diverged,error\n";
    for (const auto& r : rows) {
        out += r.label + ',' + r.variant + ',' + num(r.lambda) + ',' + num(r.alpha) + ',' + std::to_string(r.seed) +
               ',' + num(r.final_score) + ',' + num(r.mean_q) + ',' + num(r.mean_mu_norm) + ',' +
               (r.diverged ? "1" : "0") + ',' + (r.error.empty() ? "" : "\"" + r.error + "\"") + '\n';
    }
    return out;
}

nlohmann::json AblationReport::to_json() const {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : summarize()) {
        cells.push_back({{"label", c.label},
                         {"score_mean", c.score_mean},
                         {"score_std", c.score_std},
                         {"q_mean", c.q_mean},
                         {"q_std", c.q_std},
                         {"mu_norm_mean", c.mu_norm_mean},
                         {"diverged", c.diverged},
                         {"seeds", c.seeds}});
    }
    return {{"cells", cells}};
}

void AblationReport::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "ablation.csv", std::ios::trunc) << csv();
    std::ofstream(dir / "ablation.json", std::ios::trunc) << to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------- runner

AblationReport run_ablation(const std::vector<AblationCell>& cells, const std::vector<std::uint64_t>& seeds,
                            const data::Dataset& dataset, env::EnvName env_name, const AblationOptions& opts) {
    if (cells.empty()) throw InputError("run_ablation: empty grid");
    if (seeds.empty()) throw InputError("run_ablation: no seeds");
    const auto proto = env::make_env(env_name);
    const double bound = proto->spec().action_bound;
    // Validate every cell up front so a config error is not mistaken for a run failure.
    for (const auto& c : cells) c.spec.config(bound);
    // Warm the reference-return cache before the pool starts.
    env::reference_returns(env_name);

    // Cells sharing a reward shift share one prepared copy of the data.
    std::vector<double> shifts;
    std::vector<learn::TrainingData> prepared;
    for (const auto& c : cells) {
        if (std::find(shifts.begin(), shifts.end(), c.spec.base.reward_shift) == shifts.end()) {
            shifts.push_back(c.spec.base.reward_shift);
            prepared.push_back(learn::TrainingData::from(dataset, c.spec.base.reward_shift));
        }
    }

    const auto n_cells = static_cast<std::int64_t>(cells.size());
    const auto n_seeds = static_cast<std::int64_t>(seeds.size());
    AblationReport report;
    report.rows.resize(static_cast<std::size_t>(n_cells * n_seeds));

    auto run_one = [&](std::int64_t idx) {
        const auto& cell = cells[static_cast<std::size_t>(idx / n_seeds)];
        const std::uint64_t seed = seeds[static_cast<std::size_t>(idx % n_seeds)];
        AblationRow& row = report.rows[static_cast<std::size_t>(idx)];
        row.label = cell.label;
        row.variant = to_string(cell.spec.variant);
        row.seed = seed;
        try {
            VariantSpec spec = cell.spec;
            spec.base.seed = seed;
            const auto cfg = spec.config(bound);
            row.lambda = cfg.lambda;
            row.alpha = cfg.alpha;
            const auto shift_at = std::find(shifts.begin(), shifts.end(), cfg.reward_shift) - shifts.begin();
            const auto& data = prepared[static_cast<std::size_t>(shift_at)];
            auto state = learn::init_learner(cfg, dataset.state_dim, dataset.action_dim, bound, dataset.stats);
            auto env = proto->clone();
            learn::RunOptions ro = opts.run;
            if (opts.out_dir) ro.metrics_csv = *opts.out_dir / cell.label / ("seed_" + std::to_string(seed)) / "metrics.csv";
            row.run = learn::run_training(state, data, *env, ro);
            row.final_score = row.run.final_score;
            row.mean_q = row.run.final_mean_q;
            row.mean_mu_norm = row.run.final_mean_mu_norm;
            row.diverged = row.run.diverged;
        } catch (const std::exception& e) {
            row.error = e.what();
            row.final_score = std::numeric_limits<double>::quiet_NaN();
        }
    };

    const std::int64_t total = n_cells * n_seeds;
    if (opts.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (std::int64_t i = 0; i < total; ++i) run_one(i);
    } else {
        for (std::int64_t i = 0; i < total; ++i) run_one(i);
    }
    if (opts.out_dir) report.write(*opts.out_dir);
    return report;
}

}  // namespace anq::variants
