#include "anq/harness.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "anq/errors.hpp"
#include "anq/rng.hpp"
#include "anq/tabular.hpp"

namespace anq::harness {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

double to_double(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InputError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

std::int64_t to_int(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const long long d = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InputError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

std::uint64_t to_uint(const std::string& v, const std::string& key) {
    const auto i = to_int(v, key);
    if (i < 0) throw InputError("config key '" + key + "': must be >= 0");
    return static_cast<std::uint64_t>(i);
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InputError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& v, const std::string& key) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    for (const auto& p : split(v, ',')) out.push_back(to_double(p, key));
    return out;
}

std::string label_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

learn::RunOptions run_options(const ExperimentConfig& cfg) {
    learn::RunOptions ro;
    ro.eval_every = cfg.eval.every;
    ro.eval_episodes = cfg.eval.episodes;
    ro.log_every = cfg.eval.log_every;
    return ro;
}

}  // namespace

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::train: return "train";
        case ExperimentKind::sweep_lambda: return "sweep_lambda";
        case ExperimentKind::sweep_alpha: return "sweep_alpha";
        case ExperimentKind::noisy_mixture: return "noisy_mixture";
        case ExperimentKind::limited_data: return "limited_data";
        case ExperimentKind::verify_theory: return "verify_theory";
        case ExperimentKind::verify_geometry: return "verify_geometry";
    }
    return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
    for (auto k : {ExperimentKind::train, ExperimentKind::sweep_lambda, ExperimentKind::sweep_alpha,
                   ExperimentKind::noisy_mixture, ExperimentKind::limited_data, ExperimentKind::verify_theory,
                   ExperimentKind::verify_geometry}) {
        if (to_string(k) == name) return k;
    }
    throw InputError("unknown experiment: " + std::string(name));
}

// ---------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind, env::EnvName env) {
    ExperimentConfig c;
    c.experiment = kind;
    c.env = env;
    c.variant.base = learn::TrainConfig::defaults_for(env);
    c.variant.base.iterations = kDeskIterations;
    if (env::make_env(env)->spec().sparse_reward) c.eval.episodes = 100;  // binary success needs more episodes
    if (kind == ExperimentKind::noisy_mixture) {
        c.variant.base.lambda = 0.1;  // desk reward scale; 5 leaves the penalty inactive here
        c.variant.base.adv_weight_clip = {0.1, 30.0};
    } else if (kind == ExperimentKind::limited_data) {
        c.variant.base.lambda = 2.0;
    }
    c.data.mixture.total_size = c.data.size;
    return c;
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw InputError("config: seeds must be non-empty");
    if (eval.episodes < 1) throw InputError("config: eval episodes must be >= 1");
    if (eval.every < 1 || eval.log_every < 1) throw InputError("config: eval/log periods must be >= 1");
    if (data.size < 1) throw InputError("config: data size must be >= 1");
    data.mixture.validate();
    for (double r : ratios) {
        if (!(r >= 0.0 && r <= 1.0)) throw InputError("config: ratios must lie in [0, 1]");
    }
    for (double d : discards) {
        if (!(d >= 0.0 && d < 1.0)) throw InputError("config: discard ratios must lie in [0, 1)");
    }
    for (double l : lambdas) {
        if (!(l >= 0.0)) throw InputError("config: lambdas must be >= 0");
    }
    for (double a : alphas) {
        if (!(a >= 0.0)) throw InputError("config: alphas must be >= 0");
    }
    if (verify.instances < 1 || verify.trials < 1) throw InputError("config: instances/trials must be >= 1");
    if (!(verify.delta > 0.0 && verify.delta < 1.0)) throw InputError("config: delta must lie in (0, 1)");
    if (!(verify.grid_step_fraction > 0.0 && verify.grid_step_fraction <= 0.1)) {
        throw InputError("config: grid_step_fraction must lie in (0, 0.1]");
    }
    const auto bound = env::make_env(env)->spec().action_bound;
    variant.config(bound);
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json variants_json = nlohmann::json::array();
    for (auto v : compare) variants_json.push_back(variants::to_string(v));
    nlohmann::json train = variant.base.to_json();
    train["seed"] = nullptr;  // per-run seeds come from the seeds list
    return {{"experiment", to_string(experiment)},
            {"env", env::to_string(env)},
            {"data",
             {{"path", data.path ? nlohmann::json(data.path->string()) : nlohmann::json(nullptr)},
              {"policy", env::to_string(data.policy)},
              {"size", data.size},
              {"seed", data.seed},
              {"expert_ratio", data.mixture.expert_ratio},
              {"mixture_size", data.mixture.total_size},
              {"discard_ratio", data.mixture.discard_ratio}}},
            {"variant", variants::to_string(variant.variant)},
            {"noise_sigma", variant.sigma ? nlohmann::json(*variant.sigma) : nlohmann::json(nullptr)},
            {"noise_clip", variant.clip ? nlohmann::json(*variant.clip) : nlohmann::json(nullptr)},
            {"train", train},
            {"seeds", seeds},
            {"eval", {{"every", eval.every}, {"episodes", eval.episodes}, {"log_every", eval.log_every}}},
            {"sweep",
             {{"ratios", ratios}, {"discards", discards}, {"lambdas", lambdas}, {"alphas", alphas},
              {"compare", variants_json}}},
            {"verify",
             {{"instances", verify.instances},
              {"epsilons", verify.epsilons},
              {"trials", verify.trials},
              {"delta", verify.delta},
              {"grid_step_fraction", verify.grid_step_fraction}}}};
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json().dump()); }

ExperimentConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw FormatError("config: " + e.message(), e.line());
    }

    auto get = [&](const char* section, const char* key) -> std::optional<std::string> {
        const auto sec = tree.get_child_optional(section);
        if (!sec) return std::nullopt;
        const auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return trim(*v);
    };

    // Reject anything we do not understand before applying values.
    const std::map<std::string, std::set<std::string>> known{
        {"experiment", {"kind", "env", "seeds"}},
        {"data", {"path", "policy", "size", "seed", "expert_ratio", "mixture_size", "discard_ratio"}},
        {"train",
         {"variant", "lambda", "alpha", "tau", "beta", "gamma", "xi", "lr", "batch_size", "iterations",
          "policy_update_freq", "n_critics", "adv_clip_lo", "adv_clip_hi", "policy_clip_lo", "policy_clip_hi", "hidden",
          "noise_sigma", "noise_clip", "reward_shift", "cosine_policy_lr"}},
        {"eval", {"every", "episodes", "log_every"}},
        {"sweep", {"ratios", "discards", "lambdas", "alphas", "compare"}},
        {"verify", {"instances", "epsilons", "trials", "delta", "grid_step_fraction"}}};
    for (const auto& [section, body] : tree) {
        const auto it = known.find(section);
        if (it == known.end()) {
            if (body.empty() && !body.data().empty()) throw InputError("config: key '" + section + "' outside a section");
            throw InputError("config: unknown section [" + section + "]");
        }
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) throw InputError("config: unknown key '" + key + "' in [" + section + "]");
        }
    }

    const auto kind = parse_experiment_kind(get("experiment", "kind").value_or("train"));
    const auto env_name = env::parse_env_name(get("experiment", "env").value_or("reacher_1d"));
    ExperimentConfig c = ExperimentConfig::defaults(kind, env_name);

    if (auto v = get("experiment", "seeds")) {
        c.seeds.clear();
        for (const auto& p : split(*v, ',')) c.seeds.push_back(to_uint(p, "seeds"));
    }
    if (auto v = get("data", "path")) c.data.path = *v;
    if (auto v = get("data", "policy")) c.data.policy = env::parse_behavior_policy(*v);
    if (auto v = get("data", "size")) c.data.size = to_int(*v, "size");
    c.data.mixture.total_size = c.data.size;
    if (auto v = get("data", "seed")) c.data.seed = to_uint(*v, "data.seed");
    if (auto v = get("data", "expert_ratio")) c.data.mixture.expert_ratio = to_double(*v, "expert_ratio");
    if (auto v = get("data", "mixture_size")) c.data.mixture.total_size = to_int(*v, "mixture_size");
    if (auto v = get("data", "discard_ratio")) c.data.mixture.discard_ratio = to_double(*v, "discard_ratio");

    auto& t = c.variant.base;
    if (auto v = get("train", "variant")) c.variant.variant = variants::parse_variant(*v);
    if (c.variant.variant == variants::Variant::custom_radius) {
        throw InputError("config: custom_radius needs a function and is only available through the library");
    }
    if (auto v = get("train", "lambda")) t.lambda = to_double(*v, "lambda");
    if (auto v = get("train", "alpha")) t.alpha = to_double(*v, "alpha");
    if (auto v = get("train", "tau")) t.tau = to_double(*v, "tau");
    if (auto v = get("train", "beta")) t.beta = to_double(*v, "beta");
    if (auto v = get("train", "gamma")) t.gamma = to_double(*v, "gamma");
    if (auto v = get("train", "xi")) t.xi = to_double(*v, "xi");
    if (auto v = get("train", "lr")) t.lr = to_double(*v, "lr");
    if (auto v = get("train", "batch_size")) t.batch_size = static_cast<int>(to_int(*v, "batch_size"));
    if (auto v = get("train", "iterations")) t.iterations = to_int(*v, "iterations");
    if (auto v = get("train", "policy_update_freq")) t.policy_update_freq = static_cast<int>(to_int(*v, "policy_update_freq"));
    if (auto v = get("train", "n_critics")) t.n_critics = static_cast<int>(to_int(*v, "n_critics"));
    if (auto v = get("train", "adv_clip_lo")) t.adv_weight_clip[0] = to_double(*v, "adv_clip_lo");
    if (auto v = get("train", "adv_clip_hi")) t.adv_weight_clip[1] = to_double(*v, "adv_clip_hi");
    if (auto v = get("train", "policy_clip_lo")) t.policy_weight_clip[0] = to_double(*v, "policy_clip_lo");
    if (auto v = get("train", "policy_clip_hi")) t.policy_weight_clip[1] = to_double(*v, "policy_clip_hi");
    if (auto v = get("train", "hidden")) {
        t.hidden.clear();
        for (const auto& p : split(*v, ',')) t.hidden.push_back(static_cast<int>(to_int(p, "hidden")));
    }
    if (auto v = get("train", "noise_sigma")) c.variant.sigma = to_double(*v, "noise_sigma");
    if (auto v = get("train", "noise_clip")) c.variant.clip = to_double(*v, "noise_clip");
    if (auto v = get("train", "reward_shift")) t.reward_shift = to_double(*v, "reward_shift");
    if (auto v = get("train", "cosine_policy_lr")) t.cosine_policy_lr = to_bool(*v, "cosine_policy_lr");

    if (auto v = get("eval", "every")) c.eval.every = to_int(*v, "every");
    if (auto v = get("eval", "episodes")) c.eval.episodes = static_cast<int>(to_int(*v, "episodes"));
    if (auto v = get("eval", "log_every")) c.eval.log_every = to_int(*v, "log_every");

    if (auto v = get("sweep", "ratios")) c.ratios = to_doubles(*v, "ratios");
    if (auto v = get("sweep", "discards")) c.discards = to_doubles(*v, "discards");
    if (auto v = get("sweep", "lambdas")) c.lambdas = to_doubles(*v, "lambdas");
    if (auto v = get("sweep", "alphas")) c.alphas = to_doubles(*v, "alphas");
    if (auto v = get("sweep", "compare")) {
        c.compare.clear();
        for (const auto& p : split(*v, ',')) c.compare.push_back(variants::parse_variant(p));
    }

    if (auto v = get("verify", "instances")) c.verify.instances = to_int(*v, "instances");
    if (auto v = get("verify", "epsilons")) c.verify.epsilons = to_doubles(*v, "epsilons");
    if (auto v = get("verify", "trials")) c.verify.trials = to_int(*v, "trials");
    if (auto v = get("verify", "delta")) c.verify.delta = to_double(*v, "delta");
    if (auto v = get("verify", "grid_step_fraction")) c.verify.grid_step_fraction = to_double(*v, "grid_step_fraction");

    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

// ---------------------------------------------------------------- datasets

data::Dataset base_dataset(const ExperimentConfig& cfg) {
    if (cfg.data.path) return data::load_dataset(*cfg.data.path);
    data::Dataset d = data::generate_dataset(cfg.env, cfg.data.policy, cfg.data.size, cfg.data.seed);
    if (cfg.data.mixture.discard_ratio > 0.0) {
        d = data::discard_transitions(d, cfg.data.mixture.discard_ratio, derive_seed(cfg.data.seed, 4));
    }
    return d;
}

data::Dataset mixture_dataset(const ExperimentConfig& cfg, double expert_ratio) {
    const auto n = cfg.data.mixture.total_size;
    const auto expert = data::generate_dataset(cfg.env, env::BehaviorPolicy::expert, n, derive_seed(cfg.data.seed, 1));
    const auto random = data::generate_dataset(cfg.env, env::BehaviorPolicy::random, n, derive_seed(cfg.data.seed, 2));
    data::MixtureRecipe recipe = cfg.data.mixture;
    recipe.expert_ratio = expert_ratio;
    return data::mix_datasets(expert, random, recipe, derive_seed(cfg.data.seed, 3));
}

// ---------------------------------------------------------------- runs

nlohmann::json RunRecord::to_json() const {
    nlohmann::json seeds_json = nlohmann::json::array();
    for (const auto& s : seeds) {
        nlohmann::json evals = nlohmann::json::array();
        for (const auto& e : s.evals) {
            evals.push_back({{"iteration", e.iteration}, {"mean_return", e.mean_return}, {"normalized_score", e.normalized_score}});
        }
        seeds_json.push_back({{"seed", s.seed},
                              {"evals", evals},
                              {"final_score", s.final_score},
                              {"final_mean_q", s.final_mean_q},
                              {"diverged", s.diverged}});
    }
    return {{"config_hash", config_hash},
            {"iteration_budget", iteration_budget},
            {"seeds", seeds_json},
            {"score_mean", score_mean},
            {"score_std", score_std}};
}

RunRecord run_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, Exec exec) {
    cfg.validate();
    const auto dataset = base_dataset(cfg);
    const auto proto = env::make_env(cfg.env);
    const double bound = proto->spec().action_bound;
    env::reference_returns(cfg.env);
    const auto data = learn::TrainingData::from(dataset, cfg.variant.base.reward_shift);

    RunRecord rec;
    rec.config_hash = cfg.hash();
    rec.iteration_budget = cfg.variant.base.iterations;
    rec.seeds.resize(cfg.seeds.size());
    std::vector<std::string> errors(cfg.seeds.size());
    const auto n = static_cast<std::int64_t>(cfg.seeds.size());

    auto one = [&](std::int64_t i) {
        const auto seed = cfg.seeds[static_cast<std::size_t>(i)];
        auto& sr = rec.seeds[static_cast<std::size_t>(i)];
        sr.seed = seed;
        try {
            variants::VariantSpec spec = cfg.variant;
            spec.base.seed = seed;
            auto state = variants::build_learner(spec, dataset.state_dim, dataset.action_dim, bound, dataset.stats);
            auto env = proto->clone();
            auto ro = run_options(cfg);
            const auto dir = out_dir / ("seed_" + std::to_string(seed));
            ro.metrics_csv = dir / "metrics.csv";
            const auto res = learn::run_training(state, data, *env, ro);
            sr.evals = res.evals;
            sr.final_score = res.final_score;
            sr.final_mean_q = res.final_mean_q;
            sr.diverged = res.diverged;
            save_checkpoint(state, dir / "checkpoint",
                            {{"config_hash", rec.config_hash},
                             {"final_score", res.final_score},
                             {"final_mean_q", res.final_mean_q},
                             {"diverged", res.diverged}});
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
        for (std::int64_t i = 0; i < n; ++i) one(i);
    } else {
        for (std::int64_t i = 0; i < n; ++i) one(i);
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw InputError("run_train: " + e);
    }
    double sum = 0.0, sq = 0.0;
    for (const auto& s : rec.seeds) sum += s.final_score;
    rec.score_mean = sum / static_cast<double>(rec.seeds.size());
    for (const auto& s : rec.seeds) sq += (s.final_score - rec.score_mean) * (s.final_score - rec.score_mean);
    rec.score_std = std::sqrt(sq / static_cast<double>(rec.seeds.size()));
    std::filesystem::create_directories(out_dir);
    nlohmann::json j = rec.to_json();
    j["config"] = cfg.to_json();
    std::ofstream(out_dir / "run_record.json", std::ios::trunc) << j.dump(2) << '\n';
    return rec;
}

// ---------------------------------------------------------------- protocols

nlohmann::json ProtocolReport::to_json() const {
    nlohmann::json out{{"protocol", protocol}, {"config_hash", config_hash}};
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cells) {
        arr.push_back({{"x", c.x},
                       {"label", c.label},
                       {"dataset_size", c.dataset_size},
                       {"score_mean", c.summary.score_mean},
                       {"score_std", c.summary.score_std},
                       {"q_mean", c.summary.q_mean},
                       {"q_std", c.summary.q_std},
                       {"mu_norm_mean", c.summary.mu_norm_mean},
                       {"diverged", c.summary.diverged},
                       {"seeds", c.summary.seeds}});
    }
    out["cells"] = arr;
    return out;
}

std::optional<variants::CellSummary> ProtocolReport::find(double x, const std::string& label) const {
    for (const auto& c : cells) {
        if (c.x == x && c.label == label) return c.summary;
    }
    return std::nullopt;
}

namespace {

void run_cells(ProtocolReport& rep, double x, const std::string& subdir, const std::vector<variants::AblationCell>& cells,
               const data::Dataset& dataset, const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
               const std::optional<std::filesystem::path>& out, Exec exec) {
    variants::AblationOptions opts;
    opts.run = run_options(cfg);
    opts.exec = exec;
    if (out) opts.out_dir = *out / subdir;
    const auto report = variants::run_ablation(cells, seeds, dataset, cfg.env, opts);
    for (const auto& s : report.summarize()) {
        rep.cells.push_back({x, s.label, s, static_cast<std::int64_t>(dataset.size())});
    }
    rep.rows.insert(rep.rows.end(), report.rows.begin(), report.rows.end());
}

void finish(const ProtocolReport& rep, const std::optional<std::filesystem::path>& out) {
    if (!out) return;
    std::filesystem::create_directories(*out);
    std::ofstream(*out / "report.json", std::ios::trunc) << rep.to_json().dump(2) << '\n';
}

}  // namespace

ProtocolReport run_noisy_mixture(const ExperimentConfig& cfg, const std::vector<double>& ratios,
                                 const std::vector<std::uint64_t>& seeds, const std::optional<std::filesystem::path>& out,
                                 Exec exec) {
    if (ratios.empty()) throw InputError("run_noisy_mixture: empty ratios");
    for (double r : ratios) {
        if (!(r >= 0.0 && r <= 1.0)) throw InputError("run_noisy_mixture: ratios must lie in [0, 1]");
    }
    if (cfg.compare.empty()) throw InputError("run_noisy_mixture: no variants to compare");
    ProtocolReport rep{"noisy_mixture", cfg.hash(), {}, {}};
    for (double r : ratios) {
        const auto dataset = mixture_dataset(cfg, r);
        std::vector<variants::AblationCell> cells;
        for (auto v : cfg.compare) {
            variants::VariantSpec spec = cfg.variant;
            spec.variant = v;
            if (v != variants::Variant::mu_gaussian_noise) spec.sigma = spec.clip = std::nullopt;
            cells.push_back({variants::to_string(v), spec});
        }
        for (double a : cfg.alphas) {
            variants::VariantSpec spec = cfg.variant;
            spec.variant = variants::Variant::anq_default;
            spec.base.alpha = a;
            cells.push_back({"alpha_" + label_num(a), spec});
        }
        run_cells(rep, r, "ratio_" + label_num(r), cells, dataset, cfg, seeds, out, exec);
    }
    finish(rep, out);
    return rep;
}

ProtocolReport run_limited_data(const ExperimentConfig& cfg, const std::vector<double>& discards,
                                const std::vector<std::uint64_t>& seeds, const std::optional<std::filesystem::path>& out,
                                Exec exec) {
    if (discards.empty()) throw InputError("run_limited_data: empty discard ratios");
    for (double d : discards) {
        if (!(d >= 0.0 && d < 1.0)) throw InputError("run_limited_data: discard ratios must lie in [0, 1)");
    }
    ProtocolReport rep{"limited_data", cfg.hash(), {}, {}};
    const auto base = base_dataset(cfg);
    for (double d : discards) {
        const auto dataset = data::discard_transitions(base, d, derive_seed(cfg.data.seed, 5));
        std::vector<variants::AblationCell> cells;
        if (cfg.lambdas.empty()) {
            cells.push_back({variants::to_string(cfg.variant.variant), cfg.variant});
        }
        for (double l : cfg.lambdas) {
            variants::VariantSpec spec = cfg.variant;
            spec.base.lambda = l;
            cells.push_back({"lambda_" + label_num(l), spec});
        }
        run_cells(rep, d, "discard_" + label_num(d), cells, dataset, cfg, seeds, out, exec);
    }
    finish(rep, out);
    return rep;
}

ProtocolReport run_sweep(const ExperimentConfig& cfg, bool sweep_alpha, const std::vector<double>& values,
                         const std::vector<std::uint64_t>& seeds, const std::optional<std::filesystem::path>& out,
                         Exec exec) {
    if (values.empty()) throw InputError("run_sweep: empty value list");
    ProtocolReport rep{sweep_alpha ? "sweep_alpha" : "sweep_lambda", cfg.hash(), {}, {}};
    const auto dataset = base_dataset(cfg);
    std::vector<variants::AblationCell> cells;
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("run_sweep: values must be finite and >= 0");
        variants::VariantSpec spec = cfg.variant;
        spec.variant = variants::Variant::anq_default;
        spec.sigma = spec.clip = std::nullopt;
        if (sweep_alpha) {
            spec.base.alpha = v;
        } else if (v == 0.0) {
            spec.variant = variants::Variant::lambda_zero;
        } else {
            spec.base.lambda = v;
        }
        cells.push_back({(sweep_alpha ? "alpha_" : "lambda_") + label_num(v), spec});
    }
    variants::AblationOptions opts;
    opts.run = run_options(cfg);
    opts.exec = exec;
    if (out) opts.out_dir = *out;
    const auto report = variants::run_ablation(cells, seeds, dataset, cfg.env, opts);
    const auto summaries = report.summarize();
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        rep.cells.push_back({values[i], summaries[i].label, summaries[i], static_cast<std::int64_t>(dataset.size())});
    }
    rep.rows = report.rows;
    finish(rep, out);
    return rep;
}

// ---------------------------------------------------------------- verification

VerificationReport verify_theory(std::uint64_t seed, std::int64_t instances, const std::vector<double>& epsilons,
                                 Exec exec) {
    if (instances < 1) throw InputError("verify_theory: instances must be >= 1");
    if (epsilons.empty()) throw InputError("verify_theory: no epsilons");
    const bool par = exec == Exec::parallel;
    const auto perf = oracle::run_performance_bound_suite(seed, instances, par);
    const auto shift = oracle::run_distribution_shift_suite(seed, instances, epsilons, par);
    VerificationReport rep;
    rep.passed = perf.violations == 0 && shift.violations == 0;
    rep.report = {{"seed", seed},
                  {"performance_bound",
                   {{"instances", perf.instances}, {"violations", perf.violations}, {"min_slack", perf.min_slack}}},
                  {"distribution_shift",
                   {{"instances", shift.instances},
                    {"epsilons", epsilons},
                    {"violations", shift.violations},
                    {"min_slack", shift.min_slack}}},
                  {"violations", perf.violations + shift.violations},
                  {"passed", rep.passed}};
    return rep;
}

VerificationReport verify_geometry(std::uint64_t seed, const VerifySettings& s, Exec exec) {
    if (s.epsilons.empty()) throw InputError("verify_geometry: no epsilons");
    const auto square = geometry::SupportSpec::box(2, 1.0);
    VerificationReport rep;
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < s.epsilons.size(); ++i) {
        const double eps = s.epsilons[i];
        const auto cover = geometry::covering_number(square, eps / 2.0);
        const auto n = geometry::required_n(static_cast<double>(cover.count), *square.c0(), eps, 2, s.delta);
        const auto cov = geometry::coverage_trial(square, eps, n, s.trials, s.grid_step_fraction * eps,
                                                  derive_seed(seed, i), exec);
        const double target = 1.0 - s.delta;
        const bool ok = cov.frequency >= target || cov.ci_low >= target - 0.05;
        rep.passed = rep.passed && ok;
        nlohmann::json j = cov.to_json(square);
        j["covering_number"] = cover.count;
        j["delta"] = s.delta;
        j["required_n"] = n;
        j["passed"] = ok;
        arr.push_back(std::move(j));
    }
    rep.report = {{"seed", seed}, {"coverage", arr}, {"passed", rep.passed}};
    return rep;
}

// ---------------------------------------------------------------- plots

MetricsTable parse_metrics_csv(const std::string& text) {
    MetricsTable t;
    std::istringstream in(text);
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (t.columns.empty()) {
            if (trim(line).empty()) throw FormatError("metrics csv: empty header", lineno);
            t.columns = split(line, ',');
            for (const auto& c : t.columns) {
                if (c.empty()) throw FormatError("metrics csv: empty column name", lineno);
            }
            continue;
        }
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != t.columns.size()) {
            throw FormatError("metrics csv: expected " + std::to_string(t.columns.size()) + " fields, got " +
                                  std::to_string(fields.size()),
                              lineno);
        }
        std::vector<std::optional<double>> row;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (fields[i].empty()) {
                if (i == 0) throw FormatError("metrics csv: missing iteration", lineno);
                row.emplace_back();
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(fields[i].c_str(), &end);
            if (end != fields[i].c_str() + fields[i].size()) {
                throw FormatError("metrics csv: non-numeric field '" + fields[i] + "'", lineno);
            }
            row.emplace_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.columns.empty()) throw FormatError("metrics csv: empty file", 1);
    return t;
}

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read metrics file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_metrics_csv(buf.str());
}

namespace {

constexpr const char* kPlotScript = R"PY(#!/usr/bin/env python3
# Learning curves from the CSV files next to this script.
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CURVES = {curves}
FILES = {files}
AGGREGATE = {aggregate}


def load(name):
    with open(os.path.join(HERE, "data", name), newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def column(rows, key):
    xs, ys = [], []
    for r in rows:
        if r.get(key, "") == "":
            continue
        xs.append(float(r["iteration"]))
        ys.append(float(r[key]))
    return xs, ys


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, "curves.png")
    fig, axes = plt.subplots(len(CURVES), 1, figsize=(7, 2.4 * len(CURVES)), squeeze=False)
    for ax, key in zip(axes[:, 0], CURVES):
        if AGGREGATE:
            rows = load(AGGREGATE)
            xs, mean = column(rows, key + "_mean")
            _, std = column(rows, key + "_std")
            ax.plot(xs, mean, label="mean")
            ax.fill_between(xs, [m - s for m, s in zip(mean, std)], [m + s for m, s in zip(mean, std)], alpha=0.3)
        else:
            for name in FILES:
                xs, ys = column(load(name), key)
                ax.plot(xs, ys, label=name)
        ax.set_ylabel(key)
        ax.legend(fontsize=7)
    axes[-1, 0].set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(out, dpi=120)


if __name__ == "__main__":
    main()
)PY";

std::string py_list(const std::vector<std::string>& xs) {
    std::string s = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + nlohmann::json(xs[i]).dump();
    return s + "]";
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) s.replace(pos, from.size(), to);
}

}  // namespace

PlotBundle emit_plots(const std::vector<std::filesystem::path>& metrics_files, const std::filesystem::path& out_dir) {
    if (metrics_files.empty()) throw InputError("emit_plots: no metrics files");
    std::vector<MetricsTable> tables;
    for (const auto& f : metrics_files) tables.push_back(read_metrics_csv(f));
    for (const auto& t : tables) {
        if (t.columns != tables.front().columns) throw InputError("emit_plots: metrics files have different columns");
    }
    const auto& cols = tables.front().columns;
    PlotBundle b;
    for (std::size_t i = 1; i < cols.size(); ++i) b.curves.push_back(cols[i]);

    const auto data_dir = out_dir / "data";
    std::filesystem::create_directories(data_dir);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < metrics_files.size(); ++i) {
        const std::string name = "run" + std::to_string(i) + "_" + metrics_files[i].filename().string();
        std::filesystem::copy_file(metrics_files[i], data_dir / name, std::filesystem::copy_options::overwrite_existing);
        b.data_files.push_back(data_dir / name);
        names.push_back(name);
    }

    std::string aggregate = "None";
    if (tables.size() > 1) {
        // Mean and population std per iteration over the files reporting a value.
        std::map<double, std::vector<std::vector<double>>> by_iter;
        for (const auto& t : tables) {
            for (const auto& row : t.rows) {
                auto& slot = by_iter[*row[0]];
                slot.resize(cols.size() - 1);
                for (std::size_t c = 1; c < cols.size(); ++c) {
                    if (row[c]) slot[c - 1].push_back(*row[c]);
                }
            }
        }
        std::ofstream agg(data_dir / "aggregate.csv", std::ios::trunc);
        agg << "iteration";
        for (std::size_t c = 1; c < cols.size(); ++c) agg << ',' << cols[c] << "_mean," << cols[c] << "_std";
        agg << '\n';
        char buf[64];
        for (const auto& [iter, slots] : by_iter) {
            std::snprintf(buf, sizeof buf, "%.17g", iter);
            agg << buf;
            for (const auto& vals : slots) {
                if (vals.empty()) {
                    agg << ",,";
                    continue;
                }
                double m = 0.0;
                for (double v : vals) m += v;
                m /= static_cast<double>(vals.size());
                double sq = 0.0;
                for (double v : vals) sq += (v - m) * (v - m);
                std::snprintf(buf, sizeof buf, ",%.17g", m);
                agg << buf;
                std::snprintf(buf, sizeof buf, ",%.17g", std::sqrt(sq / static_cast<double>(vals.size())));
                agg << buf;
            }
            agg << '\n';
        }
        b.data_files.push_back(data_dir / "aggregate.csv");
        aggregate = "\"aggregate.csv\"";
    }

    std::string script = kPlotScript;
    replace_all(script, "{curves}", py_list(b.curves));
    replace_all(script, "{files}", py_list(names));
    replace_all(script, "{aggregate}", aggregate);
    b.script = out_dir / "plot.py";
    std::ofstream(b.script, std::ios::trunc) << script;
    return b;
}

std::filesystem::path resolve_out_dir(const std::filesystem::path& requested) {
    if (const char* env = std::getenv("ANQLAB_OUT"); env != nullptr && *env != '\0') return env;
    return requested;
}

}  // namespace anq::harness
