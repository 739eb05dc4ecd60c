#include "anq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "anq/errors.hpp"
#include "anq/rng.hpp"
#include "binary_io.hpp"

namespace anq::data {

namespace {

constexpr char kMagic[4] = {'A', 'N', 'Q', 'D'};
constexpr std::uint16_t kVersion = 1;

Dataset select_rows(const Dataset& src, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.env_tag = src.env_tag;
    out.state_dim = src.state_dim;
    out.action_dim = src.action_dim;
    const auto sd = static_cast<std::size_t>(src.state_dim);
    const auto ad = static_cast<std::size_t>(src.action_dim);
    out.states.reserve(rows.size() * sd);
    out.next_states.reserve(rows.size() * sd);
    out.actions.reserve(rows.size() * ad);
    for (std::size_t r : rows) {
        out.states.insert(out.states.end(), src.states.begin() + static_cast<std::ptrdiff_t>(r * sd),
                          src.states.begin() + static_cast<std::ptrdiff_t>((r + 1) * sd));
        out.next_states.insert(out.next_states.end(), src.next_states.begin() + static_cast<std::ptrdiff_t>(r * sd),
                               src.next_states.begin() + static_cast<std::ptrdiff_t>((r + 1) * sd));
        out.actions.insert(out.actions.end(), src.actions.begin() + static_cast<std::ptrdiff_t>(r * ad),
                           src.actions.begin() + static_cast<std::ptrdiff_t>((r + 1) * ad));
        out.rewards.push_back(src.rewards[r]);
        out.dones.push_back(src.dones[r]);
    }
    out.stats = compute_stats(out.states, out.state_dim);
    return out;
}

void append(Dataset& dst, const Dataset& src, std::size_t row) {
    const auto sd = static_cast<std::size_t>(src.state_dim);
    const auto ad = static_cast<std::size_t>(src.action_dim);
    auto s = src.states.begin() + static_cast<std::ptrdiff_t>(row * sd);
    auto s2 = src.next_states.begin() + static_cast<std::ptrdiff_t>(row * sd);
    auto a = src.actions.begin() + static_cast<std::ptrdiff_t>(row * ad);
    dst.states.insert(dst.states.end(), s, s + static_cast<std::ptrdiff_t>(sd));
    dst.next_states.insert(dst.next_states.end(), s2, s2 + static_cast<std::ptrdiff_t>(sd));
    dst.actions.insert(dst.actions.end(), a, a + static_cast<std::ptrdiff_t>(ad));
    dst.rewards.push_back(src.rewards[row]);
    dst.dones.push_back(src.dones[row]);
}

/// `count` row indices from a pool of `pool` rows; without replacement if possible.
std::vector<std::size_t> draw_rows(std::size_t pool, std::size_t count, std::mt19937_64& rng, bool& replaced) {
    std::vector<std::size_t> rows;
    if (count <= pool) {
        replaced = false;
        rows.resize(pool);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(count);
    } else {
        replaced = true;
        std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
        rows.resize(count);
        for (auto& r : rows) r = pick(rng);
    }
    return rows;
}

}  // namespace

Transition Dataset::transition(std::size_t i) const {
    if (i >= size()) throw InputError("transition index out of range");
    const auto sd = static_cast<std::size_t>(state_dim);
    const auto ad = static_cast<std::size_t>(action_dim);
    Transition t;
    t.s.assign(states.begin() + static_cast<std::ptrdiff_t>(i * sd), states.begin() + static_cast<std::ptrdiff_t>((i + 1) * sd));
    t.a.assign(actions.begin() + static_cast<std::ptrdiff_t>(i * ad), actions.begin() + static_cast<std::ptrdiff_t>((i + 1) * ad));
    t.r = rewards[i];
    t.s_next.assign(next_states.begin() + static_cast<std::ptrdiff_t>(i * sd),
                    next_states.begin() + static_cast<std::ptrdiff_t>((i + 1) * sd));
    t.done = dones[i] != 0;
    return t;
}

std::span<const float> Dataset::state(std::size_t i) const {
    return {states.data() + i * static_cast<std::size_t>(state_dim), static_cast<std::size_t>(state_dim)};
}

std::span<const float> Dataset::action(std::size_t i) const {
    return {actions.data() + i * static_cast<std::size_t>(action_dim), static_cast<std::size_t>(action_dim)};
}

NormStats compute_stats(const std::vector<float>& states, int state_dim) {
    NormStats st;
    const auto sd = static_cast<std::size_t>(state_dim);
    const std::size_t n = sd == 0 ? 0 : states.size() / sd;
    st.mean.assign(sd, 0.0);
    st.std.assign(sd, 1.0);
    if (n == 0) return st;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < sd; ++j) st.mean[j] += states[i * sd + j];
    }
    for (double& m : st.mean) m /= static_cast<double>(n);
    std::vector<double> var(sd, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < sd; ++j) {
            const double d = states[i * sd + j] - st.mean[j];
            var[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < sd; ++j) {
        const double s = std::sqrt(var[j] / static_cast<double>(n));
        st.std[j] = s < 1e-6 ? 1.0 : s;
    }
    return st;
}

std::vector<double> normalize_state(const NormStats& stats, std::span<const double> s) {
    if (s.size() != stats.mean.size()) throw InputError("normalize_state: dimension mismatch");
    std::vector<double> out(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) out[j] = (s[j] - stats.mean[j]) / stats.std[j];
    return out;
}

Dataset make_dataset(std::string env_tag, std::span<const Transition> transitions, nlohmann::json provenance) {
    if (transitions.empty()) throw InputError("dataset must contain at least one transition");
    Dataset d;
    d.env_tag = std::move(env_tag);
    d.state_dim = static_cast<int>(transitions.front().s.size());
    d.action_dim = static_cast<int>(transitions.front().a.size());
    if (d.state_dim < 1 || d.action_dim < 1) throw InputError("dataset dimensions must be >= 1");
    for (const Transition& t : transitions) {
        if (static_cast<int>(t.s.size()) != d.state_dim || static_cast<int>(t.s_next.size()) != d.state_dim ||
            static_cast<int>(t.a.size()) != d.action_dim) {
            throw InputError("dataset transitions have inconsistent dimensions");
        }
        d.states.insert(d.states.end(), t.s.begin(), t.s.end());
        d.actions.insert(d.actions.end(), t.a.begin(), t.a.end());
        d.rewards.push_back(t.r);
        d.next_states.insert(d.next_states.end(), t.s_next.begin(), t.s_next.end());
        d.dones.push_back(t.done ? 1 : 0);
    }
    d.stats = compute_stats(d.states, d.state_dim);
    d.provenance = std::move(provenance);
    return d;
}

Dataset generate_dataset(env::EnvName name, env::BehaviorPolicy policy, std::int64_t steps, std::uint64_t seed) {
    auto environment = env::make_env(name);
    const auto transitions = env::rollout_behavior(*environment, policy, steps, seed);
    nlohmann::json prov{{"source", "rollout"},
                        {"behavior_policy", env::to_string(policy)},
                        {"steps", steps},
                        {"seed", seed}};
    return make_dataset(env::to_string(name), transitions, std::move(prov));
}

void MixtureRecipe::validate() const {
    if (!(expert_ratio >= 0.0 && expert_ratio <= 1.0)) throw InputError("expert_ratio must lie in [0, 1]");
    if (!(discard_ratio >= 0.0 && discard_ratio < 1.0)) throw InputError("discard_ratio must lie in [0, 1)");
    if (total_size < 1) throw InputError("mixture total_size must be >= 1");
    if (result_size() < 1) throw InputError("mixture would produce an empty dataset");
}

std::int64_t MixtureRecipe::expert_count() const {
    return static_cast<std::int64_t>(std::llround(expert_ratio * static_cast<double>(total_size)));
}

std::int64_t MixtureRecipe::result_size() const {
    return static_cast<std::int64_t>(std::llround(static_cast<double>(total_size) * (1.0 - discard_ratio)));
}

Dataset mix_datasets(const Dataset& expert, const Dataset& random, const MixtureRecipe& recipe, std::uint64_t seed) {
    recipe.validate();
    if (expert.env_tag != random.env_tag) {
        throw InputError("mix_datasets: env tags differ (" + expert.env_tag + " vs " + random.env_tag + ")");
    }
    if (expert.state_dim != random.state_dim || expert.action_dim != random.action_dim) {
        throw InputError("mix_datasets: dimensions differ");
    }
    auto rng = make_rng(seed, 0);
    const auto n_expert = static_cast<std::size_t>(recipe.expert_count());
    const auto n_random = static_cast<std::size_t>(recipe.total_size) - n_expert;
    if ((n_expert > 0 && expert.size() == 0) || (n_random > 0 && random.size() == 0)) {
        throw InputError("mix_datasets: empty source pool");
    }

    bool expert_replaced = false;
    bool random_replaced = false;
    const auto expert_rows = n_expert > 0 ? draw_rows(expert.size(), n_expert, rng, expert_replaced) : std::vector<std::size_t>{};
    const auto random_rows = n_random > 0 ? draw_rows(random.size(), n_random, rng, random_replaced) : std::vector<std::size_t>{};

    // (source, row) pairs, shuffled jointly.
    std::vector<std::pair<int, std::size_t>> order;
    order.reserve(n_expert + n_random);
    for (std::size_t r : expert_rows) order.emplace_back(0, r);
    for (std::size_t r : random_rows) order.emplace_back(1, r);
    std::shuffle(order.begin(), order.end(), rng);

    Dataset mixed;
    mixed.env_tag = expert.env_tag;
    mixed.state_dim = expert.state_dim;
    mixed.action_dim = expert.action_dim;
    for (const auto& [src, row] : order) append(mixed, src == 0 ? expert : random, row);
    mixed.stats = compute_stats(mixed.states, mixed.state_dim);
    mixed.provenance = {{"source", "mixture"},
                        {"expert_ratio", recipe.expert_ratio},
                        {"total_size", recipe.total_size},
                        {"discard_ratio", recipe.discard_ratio},
                        {"expert_count", n_expert},
                        {"random_count", n_random},
                        {"expert_with_replacement", expert_replaced},
                        {"random_with_replacement", random_replaced},
                        {"seed", seed},
                        {"expert_provenance", expert.provenance},
                        {"random_provenance", random.provenance}};
    if (recipe.discard_ratio == 0.0) return mixed;
    return discard_transitions(mixed, recipe.discard_ratio, derive_seed(seed, 1));
}

Dataset discard_transitions(const Dataset& base, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw InputError("discard ratio must lie in [0, 1)");
    if (ratio == 0.0) return base;
    const auto keep = static_cast<std::size_t>(std::llround(static_cast<double>(base.size()) * (1.0 - ratio)));
    if (keep < 1) throw InputError("discarding would leave an empty dataset");
    auto rng = make_rng(seed, 0);
    std::vector<std::size_t> rows(base.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(keep);
    std::sort(rows.begin(), rows.end());
    Dataset out = select_rows(base, rows);
    out.provenance = base.provenance;
    out.provenance["discard"] = {{"ratio", ratio}, {"seed", seed}, {"base_size", base.size()}, {"kept", keep}};
    return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    if (d.size() == 0) throw InputError("save_dataset: refusing to write a dataset with 0 transitions");
    const auto n = d.size();
    const auto sd = static_cast<std::size_t>(d.state_dim);
    const auto ad = static_cast<std::size_t>(d.action_dim);
    if (d.states.size() != n * sd || d.next_states.size() != n * sd || d.actions.size() != n * ad ||
        d.dones.size() != n) {
        throw InputError("save_dataset: column sizes are inconsistent");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open dataset for writing: " + path.string());
    io::BinaryWriter w(out);
    for (char c : kMagic) w.put(c);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(d.env_tag.size()));
    w.put_bytes(d.env_tag);
    w.put(static_cast<std::uint64_t>(n));
    w.put(static_cast<std::uint32_t>(d.state_dim));
    w.put(static_cast<std::uint32_t>(d.action_dim));
    w.put_array(d.states);
    w.put_array(d.actions);
    w.put_array(d.rewards);
    w.put_array(d.next_states);
    w.put_array(d.dones);
    const nlohmann::json trailer{{"provenance", d.provenance},
                                 {"state_mean", d.stats.mean},
                                 {"state_std", d.stats.std}};
    const std::string text = trailer.dump();
    w.put(static_cast<std::uint64_t>(text.size()));
    w.put_bytes(text);
    if (!out) throw InputError("failed writing dataset: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    io::BinaryReader r(io::read_file(path.string()));
    for (char expected : kMagic) {
        const auto at = r.offset();
        if (r.get<char>("magic") != expected) throw FormatError("dataset magic mismatch", at);
    }
    const auto version_at = r.offset();
    if (r.get<std::uint16_t>("version") != kVersion) throw FormatError("unsupported dataset version", version_at);

    Dataset d;
    const auto tag_len = r.get<std::uint32_t>("env tag length");
    d.env_tag = r.get_bytes(tag_len, "env tag");
    const auto n_at = r.offset();
    const auto n = r.get<std::uint64_t>("transition count");
    d.state_dim = static_cast<int>(r.get<std::uint32_t>("state_dim"));
    d.action_dim = static_cast<int>(r.get<std::uint32_t>("action_dim"));
    if (n == 0) throw FormatError("dataset has 0 transitions", n_at);
    if (d.state_dim < 1 || d.action_dim < 1) throw FormatError("dataset dimensions must be >= 1", n_at);
    const auto sd = static_cast<std::uint64_t>(d.state_dim);
    const auto ad = static_cast<std::uint64_t>(d.action_dim);
    d.states = r.get_array<float>(n * sd, "state block");
    d.actions = r.get_array<float>(n * ad, "action block");
    d.rewards = r.get_array<float>(n, "reward block");
    d.next_states = r.get_array<float>(n * sd, "next-state block");
    d.dones = r.get_array<std::uint8_t>(n, "done block");
    const auto len = r.get<std::uint64_t>("trailer length");
    const auto trailer_at = r.offset();
    const std::string text = r.get_bytes(len, "JSON trailer");
    if (r.remaining() != 0) throw FormatError("trailing bytes after JSON trailer", r.offset());
    try {
        const auto trailer = nlohmann::json::parse(text);
        d.provenance = trailer.at("provenance");
        d.stats.mean = trailer.at("state_mean").get<std::vector<double>>();
        d.stats.std = trailer.at("state_std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad JSON trailer: ") + e.what(), trailer_at);
    }
    if (d.stats.mean.size() != sd || d.stats.std.size() != sd) {
        throw FormatError("normalization stats do not match state_dim", trailer_at);
    }
    return d;
}

}  // namespace anq::data
