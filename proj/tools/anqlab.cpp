// anqlab: data generation, training, evaluation, sweeps, verification, plots.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "anq/dataset.hpp"
#include "anq/env.hpp"
#include "anq/errors.hpp"
#include "anq/harness.hpp"
#include "anq/learner.hpp"
#include "anq/rng.hpp"

namespace fs = std::filesystem;
using namespace anq;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNumericError = 2;
constexpr int kVerifyFailed = 3;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "anqlab_out";
    std::string env;
    std::optional<double> ratio;
    std::vector<double> ratios;
    std::vector<double> discard;
    std::vector<double> lambda;
    std::vector<double> alpha;
    std::optional<std::int64_t> instances;
    std::optional<std::int64_t> trials;
    std::optional<std::int64_t> iterations;
    std::string policy;
    std::optional<std::int64_t> size;
    std::string checkpoint;
    std::optional<int> episodes;
    std::vector<std::string> metrics;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// Config file (or defaults) with command-line overrides applied.
harness::ExperimentConfig resolve(const Flags& f, harness::ExperimentKind kind) {
    harness::ExperimentConfig cfg;
    if (!f.config.empty()) {
        cfg = harness::load_config(f.config);
    } else {
        cfg = harness::ExperimentConfig::defaults(kind, f.env.empty() ? env::EnvName::reacher_1d : env::parse_env_name(f.env));
    }
    if (!f.env.empty() && !f.config.empty()) {
        const auto name = env::parse_env_name(f.env);
        if (name != cfg.env) {
            const auto keep = cfg;
            cfg = harness::ExperimentConfig::defaults(cfg.experiment, name);
            cfg.seeds = keep.seeds;
            cfg.data = keep.data;
            cfg.eval = keep.eval;
        }
    }
    if (!f.seeds.empty()) cfg.seeds = f.seeds;
    if (f.seed) {
        cfg.seeds = {*f.seed};
        cfg.data.seed = *f.seed;
    }
    if (f.iterations) cfg.variant.base.iterations = *f.iterations;
    if (!f.policy.empty()) cfg.data.policy = env::parse_behavior_policy(f.policy);
    if (f.size) {
        cfg.data.size = *f.size;
        cfg.data.mixture.total_size = *f.size;
    }
    if (f.lambda.size() == 1) cfg.variant.base.lambda = f.lambda.front();
    if (f.alpha.size() == 1) cfg.variant.base.alpha = f.alpha.front();
    if (f.ratio) cfg.data.mixture.expert_ratio = *f.ratio;
    if (!f.ratios.empty()) cfg.ratios = f.ratios;
    if (!f.discard.empty()) cfg.discards = f.discard;
    if (f.instances) cfg.verify.instances = *f.instances;
    if (f.trials) cfg.verify.trials = *f.trials;
    if (f.episodes) cfg.eval.episodes = *f.episodes;
    cfg.validate();
    return cfg;
}

int cmd_gen_data(const Flags& f, const fs::path& out) {
    auto cfg = resolve(f, harness::ExperimentKind::train);
    data::Dataset d;
    if (f.ratio) {
        d = harness::mixture_dataset(cfg, *f.ratio);
    } else {
        if (!f.discard.empty()) cfg.data.mixture.discard_ratio = f.discard.front();
        d = harness::base_dataset(cfg);
    }
    fs::create_directories(out);
    const auto path = out / "dataset.anqd";
    data::save_dataset(d, path);
    std::cout << nlohmann::json{{"path", path.string()}, {"transitions", d.size()}, {"env", d.env_tag}}.dump() << '\n';
    return kOk;
}

int cmd_train(const Flags& f, const fs::path& out) {
    const auto cfg = resolve(f, harness::ExperimentKind::train);
    const auto rec = harness::run_train(cfg, out);
    std::cout << nlohmann::json{{"config_hash", rec.config_hash},
                                {"score_mean", rec.score_mean},
                                {"score_std", rec.score_std},
                                {"out_dir", out.string()}}
                     .dump()
              << '\n';
    for (const auto& s : rec.seeds) {
        if (s.diverged) return kNumericError;
    }
    return kOk;
}

int cmd_eval(const Flags& f) {
    if (f.checkpoint.empty()) throw InputError("eval needs --checkpoint");
    const fs::path dir = f.checkpoint;
    std::ifstream in(dir / "manifest.json");
    if (!in) throw InputError("missing manifest.json in " + dir.string());
    const auto manifest = nlohmann::json::parse(in);
    const auto name = f.env.empty() ? env::EnvName::reacher_1d : env::parse_env_name(f.env);
    auto tc = learn::TrainConfig::defaults_for(name);
    const auto& mc = manifest.at("config");
    tc.hidden = mc.at("hidden").get<std::vector<int>>();
    tc.n_critics = mc.at("n_critics").get<int>();
    const auto mu_mode = mc.at("mu_mode").get<std::string>();
    tc.mu_mode = mu_mode == "learned" ? learn::MuMode::learned
                 : mu_mode == "zero"  ? learn::MuMode::zero
                                      : learn::MuMode::gaussian_noise;
    auto e = env::make_env(name);
    auto state = learn::init_learner(tc, manifest.at("state_dim").get<int>(), manifest.at("action_dim").get<int>(),
                                     manifest.at("action_bound").get<double>());
    learn::load_checkpoint(state, dir);
    const int episodes = f.episodes.value_or(10);
    const auto r = learn::evaluate_policy(state, *e, episodes, f.seed.value_or(0));
    std::cout << nlohmann::json{{"env", env::to_string(name)},
                                {"episodes", episodes},
                                {"mean_return", r.mean_return},
                                {"normalized_score", r.normalized_score}}
                     .dump()
              << '\n';
    return kOk;
}

int cmd_sweep(const Flags& f, const fs::path& out) {
    auto cfg = resolve(f, harness::ExperimentKind::sweep_lambda);
    if (f.lambda.size() > 1) cfg.lambdas = f.lambda;
    if (f.alpha.size() > 1) cfg.alphas = f.alpha;
    // Flags pick the protocol when no config file names one.
    auto kind = cfg.experiment;
    if (f.config.empty() || kind == harness::ExperimentKind::train) {
        if (!cfg.ratios.empty()) {
            kind = harness::ExperimentKind::noisy_mixture;
        } else if (!cfg.discards.empty()) {
            kind = harness::ExperimentKind::limited_data;
        } else if (f.alpha.size() > 1) {
            kind = harness::ExperimentKind::sweep_alpha;
        } else {
            kind = harness::ExperimentKind::sweep_lambda;
        }
    }
    harness::ProtocolReport rep;
    switch (kind) {
        case harness::ExperimentKind::noisy_mixture:
            rep = harness::run_noisy_mixture(cfg, cfg.ratios, cfg.seeds, out);
            break;
        case harness::ExperimentKind::limited_data:
            rep = harness::run_limited_data(cfg, cfg.discards, cfg.seeds, out);
            break;
        case harness::ExperimentKind::sweep_alpha:
            rep = harness::run_sweep(cfg, true, cfg.alphas, cfg.seeds, out);
            break;
        case harness::ExperimentKind::sweep_lambda:
            rep = harness::run_sweep(cfg, false, cfg.lambdas, cfg.seeds, out);
            break;
        default: throw InputError("sweep: experiment kind " + harness::to_string(kind) + " is not a sweep");
    }
    std::cout << rep.to_json().dump(2) << '\n';
    return kOk;
}

int cmd_verify_theory(const Flags& f, const fs::path& out) {
    const auto cfg = resolve(f, harness::ExperimentKind::verify_theory);
    const std::uint64_t seed = f.seed.value_or(cfg.seeds.front());
    const auto rep = harness::verify_theory(seed, cfg.verify.instances, {0.05, 0.2});
    write_json(out / "verify_theory.json", rep.report);
    std::cout << rep.report.dump(2) << '\n';
    return rep.passed ? kOk : kVerifyFailed;
}

int cmd_verify_geometry(const Flags& f, const fs::path& out) {
    const auto cfg = resolve(f, harness::ExperimentKind::verify_geometry);
    const std::uint64_t seed = f.seed.value_or(cfg.seeds.front());
    const auto rep = harness::verify_geometry(seed, cfg.verify);
    write_json(out / "verify_geometry.json", rep.report);
    std::cout << rep.report.dump(2) << '\n';
    return rep.passed ? kOk : kVerifyFailed;
}

int cmd_plot(const Flags& f, const fs::path& out) {
    if (f.metrics.empty()) throw InputError("plot needs --metrics");
    std::vector<fs::path> files(f.metrics.begin(), f.metrics.end());
    const auto b = harness::emit_plots(files, out / "plots");
    nlohmann::json data = nlohmann::json::array();
    for (const auto& p : b.data_files) data.push_back(p.string());
    std::cout << nlohmann::json{{"script", b.script.string()}, {"data", data}, {"curves", b.curves}}.dump() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anqlab: adaptive neighborhood-constrained Q-learning experiments"};
    app.require_subcommand(1);
    Flags f;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "INI experiment config");
        sub->add_option("--seed", f.seed, "Single seed (also used for data)");
        sub->add_option("--seeds", f.seeds, "Seed list")->delimiter(',');
        sub->add_option("--out-dir", f.out_dir, "Output directory (ANQLAB_OUT overrides)");
        sub->add_option("--env", f.env, "point_maze_2d | reacher_1d | chain_tabular");
    };

    auto* gen = app.add_subcommand("gen-data", "Generate an offline dataset");
    common(gen);
    gen->add_option("--policy", f.policy, "expert | medium | random");
    gen->add_option("--size", f.size, "Transitions");
    gen->add_option("--ratio", f.ratio, "Expert ratio of an expert/random mixture");
    gen->add_option("--discard", f.discard, "Fraction of transitions to drop")->delimiter(',');

    auto* train = app.add_subcommand("train", "Train on the configured dataset");
    common(train);
    train->add_option("--lambda", f.lambda, "Lagrange multiplier")->delimiter(',');
    train->add_option("--alpha", f.alpha, "Radius inverse temperature")->delimiter(',');
    train->add_option("--iterations", f.iterations, "Training iterations");
    train->add_option("--policy", f.policy, "Behavior policy for generated data");
    train->add_option("--size", f.size, "Generated dataset size");
    train->add_option("--episodes", f.episodes, "Evaluation episodes");

    auto* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint");
    common(eval);
    eval->add_option("--checkpoint", f.checkpoint, "Checkpoint directory")->required();
    eval->add_option("--episodes", f.episodes, "Evaluation episodes");

    auto* sweep = app.add_subcommand("sweep", "Noisy-mixture, limited-data, lambda or alpha sweeps");
    common(sweep);
    sweep->add_option("--ratio", f.ratio, "Expert ratio for the base mixture");
    sweep->add_option("--ratios", f.ratios, "Expert ratios (noisy mixture)")->delimiter(',');
    sweep->add_option("--discard", f.discard, "Discard ratios (limited data)")->delimiter(',');
    sweep->add_option("--lambda", f.lambda, "Lambda values")->delimiter(',');
    sweep->add_option("--alpha", f.alpha, "Alpha values")->delimiter(',');
    sweep->add_option("--iterations", f.iterations, "Training iterations");
    sweep->add_option("--policy", f.policy, "Behavior policy for generated data");
    sweep->add_option("--size", f.size, "Generated dataset size");
    sweep->add_option("--episodes", f.episodes, "Evaluation episodes");

    auto* vt = app.add_subcommand("verify-theory", "Performance-bound and distribution-shift checks");
    common(vt);
    vt->add_option("--instances", f.instances, "Random instances per suite");

    auto* vg = app.add_subcommand("verify-geometry", "Support-approximation Monte Carlo");
    common(vg);
    vg->add_option("--trials", f.trials, "Trials per epsilon");

    auto* plot = app.add_subcommand("plot", "Emit a plotting script and data bundle");
    common(plot);
    plot->add_option("--metrics", f.metrics, "Metrics CSV files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kConfigError;
    }

    const fs::path out = harness::resolve_out_dir(f.out_dir);
    try {
        if (gen->parsed()) return cmd_gen_data(f, out);
        if (train->parsed()) return cmd_train(f, out);
        if (eval->parsed()) return cmd_eval(f);
        if (sweep->parsed()) return cmd_sweep(f, out);
        if (vt->parsed()) return cmd_verify_theory(f, out);
        if (vg->parsed()) return cmd_verify_geometry(f, out);
        if (plot->parsed()) return cmd_plot(f, out);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumericError;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kConfigError;
    } catch (const InputError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kConfigError;
}
